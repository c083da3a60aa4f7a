import numpy as np
from django.test import SimpleTestCase

from capsules.exceptions import CapsuleError, SinkhornConvergenceError, ZeroLineError
from capsules.sinkhorn import marginal_deviation, sinkhorn_knopp


# Tests for the doubly-stochastic projection
class SinkhornKnoppTest(SimpleTestCase):
    def setUp(self):
        self.matrix = np.random.default_rng(3).random((11, 11)) + 0.01

    def test_marginals(self):
        result = sinkhorn_knopp(self.matrix)
        self.assertLessEqual(marginal_deviation(result), 1e-6)
        self.assertTrue(np.all(result >= 0))

    def test_two_by_two_limit(self):
        # diag(u) A diag(v) = [[x, 1-x], [1-x, x]] with x^2 / (1-x)^2 = ad / bc
        result = sinkhorn_knopp(np.array([[1.0, 2.0], [3.0, 4.0]]), tol=1e-12)
        x = 2.0 / (2.0 + np.sqrt(6.0))
        np.testing.assert_allclose(result, [[x, 1 - x], [1 - x, x]], atol=1e-9)

    def test_identity_is_fixed(self):
        np.testing.assert_array_equal(sinkhorn_knopp(np.eye(5)), np.eye(5))

    def test_all_ones_two_by_two(self):
        np.testing.assert_allclose(sinkhorn_knopp(np.ones((2, 2))), np.full((2, 2), 0.5))

    def test_diagonal_scaling_invariance(self):
        rng = np.random.default_rng(7)
        left, right = rng.uniform(0.1, 10.0, 11), rng.uniform(0.1, 10.0, 11)
        scaled = left[:, None] * self.matrix * right[None, :]
        np.testing.assert_allclose(
            sinkhorn_knopp(scaled, tol=1e-12, max_iters=100000),
            sinkhorn_knopp(self.matrix, tol=1e-12, max_iters=100000),
            atol=1e-9,
        )
        np.testing.assert_allclose(
            sinkhorn_knopp(42.0 * self.matrix, tol=1e-12), sinkhorn_knopp(self.matrix, tol=1e-12), atol=1e-12
        )

    def test_idempotent(self):
        once = sinkhorn_knopp(self.matrix, tol=1e-10)
        np.testing.assert_allclose(sinkhorn_knopp(once, tol=1e-10), once, atol=1e-9)

    def test_permutation_equivariance(self):
        rng = np.random.default_rng(5)
        rows, cols = rng.permutation(11), rng.permutation(11)
        projected = sinkhorn_knopp(self.matrix, tol=1e-10)
        permuted = sinkhorn_knopp(self.matrix[rows][:, cols], tol=1e-10)
        np.testing.assert_allclose(permuted, projected[rows][:, cols], atol=1e-8)

    def test_zero_row(self):
        matrix = np.ones((3, 3))
        matrix[1] = 0.0
        with self.assertRaises(ZeroLineError):
            sinkhorn_knopp(matrix)

    def test_no_total_support_does_not_converge(self):
        with self.assertRaises(SinkhornConvergenceError) as ctx:
            sinkhorn_knopp(np.array([[1.0, 1.0], [0.0, 1.0]]), tol=1e-12, max_iters=5)
        self.assertEqual(ctx.exception.iterations, 5)
        self.assertGreater(ctx.exception.deviation, 1e-12)
        np.testing.assert_allclose(ctx.exception.partial.sum(axis=0), [1.0, 1.0])

    def test_invalid_input(self):
        with self.assertRaises(CapsuleError):
            sinkhorn_knopp(np.ones((2, 3)))
        with self.assertRaises(CapsuleError):
            sinkhorn_knopp(np.array([[1.0, -1.0], [1.0, 1.0]]))
