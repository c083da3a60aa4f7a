import itertools

import numpy as np
from django.test import SimpleTestCase
from scipy.special import logsumexp
from scipy.stats import multivariate_normal

from capsules.exceptions import CapsuleError
from capsules.geometry import Pose, TemplateLibrary, default_library, square_template, triangle_template
from capsules.inference import (
    DS,
    GMM,
    LOG_2PI,
    ModelPrior,
    PosePosterior,
    VIConfig,
    elbo,
    expected_sq_error,
    extract_partition,
    run_vi,
    update_log_rho,
    update_pose_posterior,
    update_q_z,
    violates_sparsity,
)
from capsules.metrics import (
    FULL,
    GT_MASK,
    LabeledPartition,
    ScenePartition,
    scene_accuracy,
    score_scene,
    truth_partition,
)
from capsules.scenegen import GenConfig, generate_dataset, generate_scene
from capsules.sinkhorn import marginal_deviation


def single_square():
    return TemplateLibrary((square_template(),))


def corners():
    return np.array([(1.0, 1.0), (1.0, -1.0), (-1.0, -1.0), (-1.0, 1.0)])


def random_responsibilities(seed, n_observed, n_slots=11):
    R = np.random.default_rng(seed).random((n_slots, n_slots))
    R[:n_observed] /= R[:n_observed].sum(axis=1, keepdims=True)
    return R


# Tests for the q(Y) update
class PosePosteriorUpdateTest(SimpleTestCase):
    def setUp(self):
        self.library = single_square()
        self.pose = Pose((0.1, -0.2, 0.6, 0.3))
        self.points = self.library[0].posed(self.pose)

    def test_exact_assignment_recovers_pose(self):
        (q,) = update_pose_posterior(self.points, self.library, np.eye(4), ModelPrior(lam=1e8))
        np.testing.assert_allclose(q.mu, self.pose.vector, atol=1e-6)

    def test_no_responsibility_returns_prior(self):
        prior = ModelPrior(mu0=(0.2, 0.0, 1.0, 0.0), precision0=2.0 * np.eye(4))
        (q,) = update_pose_posterior(self.points, self.library, np.zeros((4, 4)), prior)
        np.testing.assert_allclose(q.mu, prior.mu0)
        np.testing.assert_allclose(q.precision, prior.precision0)

    def test_posterior_at_least_as_precise_as_prior(self):
        library = default_library()
        points = np.random.default_rng(0).uniform(-1, 1, (7, 2))
        prior = ModelPrior(lam=500.0)
        for q in update_pose_posterior(points, library, random_responsibilities(1, 7), prior):
            self.assertGreaterEqual(np.linalg.eigvalsh(q.precision - prior.precision0).min(), -1e-9)

    def test_precision_weighted_mean_identity(self):
        library = default_library()
        points = np.random.default_rng(2).uniform(-1, 1, (6, 2))
        R = random_responsibilities(3, 6)
        prior = ModelPrior(mu0=(0.1, 0.0, 1.0, 0.0), precision0=2.0 * np.eye(4), lam=3.0)
        posteriors = update_pose_posterior(points, library, R, prior)
        F = library.predictors
        for k, span in enumerate(library.slices):
            expected = prior.lam * sum(
                R[m, s] * F[s].T @ points[m] for m in range(6) for s in range(span.start, span.stop)
            )
            got = posteriors[k].precision @ posteriors[k].mu - prior.precision0 @ prior.mu0
            np.testing.assert_allclose(got, expected, rtol=1e-8, atol=1e-8)

    def test_mean_maximizes_objective(self):
        library = default_library()
        points = np.random.default_rng(4).uniform(-1, 1, (7, 2))
        R = random_responsibilities(5, 7)
        prior = ModelPrior(lam=500.0)
        posteriors = update_pose_posterior(points, library, R, prior)
        F = library.predictors

        def objective(k, y):
            diff = y - prior.mu0
            value = -0.5 * diff @ prior.precision0 @ diff
            for s in range(library.slices[k].start, library.slices[k].stop):
                residual = points - F[s] @ y
                value -= 0.5 * prior.lam * np.sum(R[:7, s] * (residual ** 2).sum(axis=1))
            return value

        for k, q in enumerate(posteriors):
            best = objective(k, q.mu)
            for i in range(4):
                for step in (1e-4, -1e-4):
                    moved = q.mu.copy()
                    moved[i] += step
                    self.assertLess(objective(k, moved), best)

    def test_translation_equivariance(self):
        shift = np.array([0.3, -0.1])
        prior = ModelPrior(lam=1e8)
        (q,) = update_pose_posterior(self.points, self.library, np.eye(4), prior)
        (moved,) = update_pose_posterior(self.points + shift, self.library, np.eye(4), prior)
        np.testing.assert_allclose(moved.mu[:2] - q.mu[:2], shift, atol=1e-6)
        np.testing.assert_allclose(moved.mu[2:], q.mu[2:], atol=1e-6)


class PosePosteriorTest(SimpleTestCase):
    def test_kl_to_itself_is_zero(self):
        prior = ModelPrior(mu0=(0.5, 0.0, 1.0, 0.0), precision0=3.0 * np.eye(4))
        q = PosePosterior(prior.mu0, prior.precision0)
        self.assertAlmostEqual(q.kl_to(prior), 0.0, places=12)

    def test_kl_positive(self):
        q = PosePosterior(np.ones(4), np.diag([2.0, 3.0, 4.0, 5.0]))
        self.assertGreater(q.kl_to(ModelPrior()), 0.0)

    def test_trace_term(self):
        q = PosePosterior(np.zeros(4), 2.0 * np.eye(4))
        gram = np.diag([1.0, 2.0, 3.0, 4.0])
        np.testing.assert_allclose(q.trace_term(gram), [5.0])
        np.testing.assert_allclose(q.trace_term(np.stack([gram, np.eye(4)])), [5.0, 2.0])

    def test_invalid_prior(self):
        with self.assertRaises(CapsuleError):
            ModelPrior(precision0=-np.eye(4))
        with self.assertRaises(CapsuleError):
            ModelPrior(lam=0.0)
        with self.assertRaises(CapsuleError):
            ModelPrior(a=np.zeros((11, 11)))


# Tests for the q(Z) update
class LogRhoTest(SimpleTestCase):
    def setUp(self):
        self.library = default_library()
        self.points = np.random.default_rng(6).uniform(-1, 1, (4, 2))

    def test_dummy_rows_hold_prior(self):
        prior = ModelPrior(lam=500.0)
        posteriors = update_pose_posterior(self.points, self.library, random_responsibilities(7, 4), prior)
        log_rho = update_log_rho(self.points, self.library, posteriors, prior)
        self.assertEqual(log_rho.shape, (11, 11))
        np.testing.assert_allclose(log_rho[4:], -np.log(11.0))

    def test_vanishing_precision(self):
        prior = ModelPrior(lam=1e-12)
        posteriors = update_pose_posterior(self.points, self.library, random_responsibilities(8, 4), prior)
        log_rho = update_log_rho(self.points, self.library, posteriors, prior)
        np.testing.assert_allclose(log_rho[:4], -np.log(11.0) - LOG_2PI + np.log(1e-12), atol=1e-9)

    def test_point_on_confident_prediction(self):
        means = [(0.0, 0.0, 0.5, 0.0), (0.2, 0.2, 0.3, 0.1), (-0.3, 0.1, 0.4, -0.2)]
        posteriors = [PosePosterior(mu, 1e12 * np.eye(4)) for mu in means]
        point = self.library.predictors[0] @ np.array(means[0])
        prior = ModelPrior(lam=500.0)
        log_rho = update_log_rho(point[None], self.library, posteriors, prior)
        self.assertAlmostEqual(log_rho[0, 0], -np.log(11.0) - LOG_2PI + np.log(500.0), places=6)
        self.assertAlmostEqual(expected_sq_error(point[None], self.library, posteriors)[0, 0], 0.0, places=8)


class UpdateQZTest(SimpleTestCase):
    def test_uniform(self):
        R = update_q_z(np.zeros((11, 11)), DS, 5)
        np.testing.assert_allclose(R, np.full((11, 11), 1.0 / 11.0), atol=1e-12)

    def test_dominant_diagonal(self):
        R = update_q_z(50.0 * np.eye(11), DS, 11)
        np.testing.assert_allclose(R, np.eye(11), atol=1e-6)

    def test_doubly_stochastic(self):
        log_rho = np.random.default_rng(9).normal(size=(11, 11))
        self.assertLessEqual(marginal_deviation(update_q_z(log_rho, DS, 7)), 1e-6)

    def test_mixture_rows(self):
        log_rho = np.random.default_rng(10).normal(size=(11, 11))
        R = update_q_z(log_rho, GMM, 7)
        np.testing.assert_allclose(R[:7].sum(axis=1), 1.0)
        self.assertFalse(R[7:].any())

    def test_non_finite(self):
        log_rho = np.zeros((11, 11))
        log_rho[0, 0] = np.nan
        with self.assertRaises(CapsuleError):
            update_q_z(log_rho, DS, 3)

    def test_unknown_prior(self):
        with self.assertRaises(CapsuleError):
            update_q_z(np.zeros((11, 11)), "dirichlet", 3)


# Tests for the evidence lower bound
class ElboTest(SimpleTestCase):
    def test_prior_posteriors_and_uniform_assignment(self):
        library = default_library()
        points = np.random.default_rng(11).uniform(-1, 1, (5, 2))
        prior = ModelPrior(lam=2.0)
        posteriors = [PosePosterior(np.zeros(4), np.eye(4)) for _ in library]
        R = np.full((11, 11), 1.0 / 11.0)
        error = expected_sq_error(points, library, posteriors)
        expected = np.sum(R[:5] * (np.log(2.0) - LOG_2PI - error))
        self.assertAlmostEqual(elbo(points, library, R, posteriors, prior, DS), expected, places=9)

    def _cycle_trace(self, points, library, prior, prior_kind, cycles=30):
        n = library.n_slots
        R = np.random.default_rng(0).random((n, n))
        if prior_kind == GMM:
            R[len(points):] = 0.0
        R[: len(points)] /= R[: len(points)].sum(axis=1, keepdims=True)
        trace = []
        for _ in range(cycles):
            posteriors = update_pose_posterior(points, library, R, prior)
            log_rho = update_log_rho(points, library, posteriors, prior)
            R = update_q_z(log_rho, prior_kind, len(points), tol=1e-12, max_iters=100000)
            trace.append(elbo(points, library, R, posteriors, prior, prior_kind))
        return np.array(trace)

    def test_coordinate_ascent_never_decreases(self):
        library = default_library()
        prior = ModelPrior(lam=1.0)
        scenes = generate_dataset(GenConfig(sigma=0.1, draws=140), master_seed=3)[:100]
        self.assertEqual(len(scenes), 100)
        for scene in scenes:
            for prior_kind in (DS, GMM):
                trace = self._cycle_trace(scene.points, library, prior, prior_kind)
                self.assertGreaterEqual(np.diff(trace).min(), -1e-8, (scene.index, prior_kind))

    def test_bound_below_brute_force_evidence(self):
        library = TemplateLibrary((triangle_template(),))
        prior = ModelPrior(lam=4.0)
        pose = Pose.from_params(0.2, -0.1, 0.8, 0.5)
        points = library[0].posed(pose) + np.random.default_rng(4).normal(0.0, 0.05, (3, 2))
        F = library.predictors
        covariance = np.linalg.inv(prior.precision0)
        terms = []
        for z in itertools.product(range(3), repeat=3):
            F_z = np.concatenate([F[s] for s in z])
            cov = F_z @ covariance @ F_z.T + np.eye(6) / prior.lam
            terms.append(multivariate_normal.logpdf(points.ravel(), F_z @ prior.mu0, cov) - 3 * np.log(3))
        evidence = logsumexp(terms)

        R = np.random.default_rng(5).dirichlet(np.ones(3), size=3)
        for _ in range(40):
            posteriors = update_pose_posterior(points, library, R, prior)
            self.assertLessEqual(elbo(points, library, R, posteriors, prior, GMM), evidence + 1e-9)
            R = update_q_z(update_log_rho(points, library, posteriors, prior), GMM, 3)


# Tests for the annealed driver
class RunVITest(SimpleTestCase):
    def setUp(self):
        self.library = default_library()
        self.points = corners()

    def test_recovers_single_square(self):
        result = run_vi(self.points, self.library, VIConfig(prior_kind=DS, seed=1))
        partition = extract_partition(result.R, 4, self.library)
        V_true = LabeledPartition([1, 1, 1, 1] + [0] * 7)
        V = partition.labeled(11)
        self.assertEqual(scene_accuracy(V_true, V, self.library.interchangeable_groups()), 1)
        k = int(partition.point_labels[0]) - 1
        posed = self.library[k].posed(Pose(result.posteriors[k].mu))
        gaps = np.linalg.norm(posed[:, None, :] - self.points[None, :, :], axis=-1).min(axis=0)
        self.assertLess(gaps.max(), 1e-2)
        self.assertAlmostEqual(Pose(result.posteriors[k].mu).scale, 1.0, places=2)

    def test_mixture_prior_rows(self):
        result = run_vi(self.points, self.library, VIConfig(prior_kind=GMM, restarts=2, seed=1))
        np.testing.assert_allclose(result.R[:4].sum(axis=1), 1.0)
        self.assertFalse(result.R[4:].any())

    def test_annealing_schedule(self):
        cfg = VIConfig(restarts=1, sparsity_retries=0, max_iters_per_stage=20, seed=2)
        result = run_vi(self.points, self.library, cfg)
        self.assertEqual(len(result.anneal_points), 2)
        self.assertEqual(result.final_lambda, 1e4)
        self.assertEqual(result.anneal_points, sorted(result.anneal_points))
        self.assertGreater(len(result.elbo_trace), result.anneal_points[-1])

    def test_deterministic(self):
        cfg = VIConfig(restarts=2, seed=5)
        first = run_vi(self.points, self.library, cfg)
        second = run_vi(self.points, self.library, cfg)
        np.testing.assert_array_equal(first.R, second.R)
        self.assertEqual(first.elbo_trace, second.elbo_trace)

    def test_elbo_trace_rises_within_each_stage(self):
        scenes = generate_dataset(GenConfig(draws=10), master_seed=17)[:4]
        for scene in scenes:
            for prior_kind in (DS, GMM):
                cfg = VIConfig(prior_kind=prior_kind, restarts=1, sparsity_retries=0, seed=scene.index)
                result = run_vi(scene.points, self.library, cfg)
                boundaries = {point - 1 for point in result.anneal_points}
                steps = [d for i, d in enumerate(np.diff(result.elbo_trace)) if i not in boundaries]
                if steps:
                    self.assertGreaterEqual(min(steps), -1e-8, (scene.index, prior_kind))

    def test_unbalanced_sinkhorn_iterate_is_used(self):
        cfg = VIConfig(
            lambda_init=500.0,
            lambda_max=500.0,
            restarts=1,
            sparsity_retries=0,
            max_iters_per_stage=3,
            sinkhorn_tol=1e-12,
            sinkhorn_max_iters=1,
        )
        result = run_vi(self.points, self.library, cfg)
        self.assertGreaterEqual(result.unbalanced_cycles, 1)
        self.assertTrue(result.elbo_trace)
        np.testing.assert_allclose(result.R.sum(axis=0), 1.0)

    def test_empty_scene(self):
        with self.assertRaises(CapsuleError):
            run_vi(np.zeros((0, 2)), self.library, VIConfig())

    def test_too_many_points(self):
        with self.assertRaises(CapsuleError):
            run_vi(np.zeros((12, 2)), self.library, VIConfig())

    def test_invalid_config(self):
        with self.assertRaises(CapsuleError):
            VIConfig(prior_kind="dirichlet")
        with self.assertRaises(CapsuleError):
            VIConfig(anneal_factor=1.0)
        with self.assertRaises(CapsuleError):
            VIConfig(restarts=0)


# Tests for reading partitions off responsibilities
class ExtractPartitionTest(SimpleTestCase):
    def setUp(self):
        self.library = default_library()

    def test_permutation_reproduces_truth(self):
        for seed in range(10):
            scene = generate_scene(GenConfig(), seed)
            if scene is None:
                continue
            slots = scene.truth_slots(self.library)
            free = [s for s in range(11) if s not in set(slots)]
            R = np.zeros((11, 11))
            R[np.arange(scene.n_points), slots] = 1.0
            R[np.arange(scene.n_points, 11), free] = 1.0
            partition = extract_partition(R, scene.n_points, self.library)
            truth = truth_partition(scene)
            np.testing.assert_array_equal(partition.point_labels, truth.point_labels)
            self.assertEqual(partition.missing_slots, truth.missing_slots)
            self.assertEqual(partition.phantoms, ())
            self.assertFalse(partition.degenerate)

    def test_uniform_responsibilities(self):
        partition = extract_partition(np.full((11, 11), 1.0 / 11.0), 5, self.library)
        np.testing.assert_array_equal(partition.point_labels, [1, 1, 1, 1, 1])
        self.assertTrue(partition.degenerate)
        self.assertEqual(partition.missing_slots, tuple(range(11)))
        self.assertEqual(partition.phantoms, ())

    def test_uniform_responsibilities_with_few_points(self):
        for n_observed in (2, 3, 4):
            partition = extract_partition(np.full((11, 11), 1.0 / 11.0), n_observed, self.library)
            np.testing.assert_array_equal(partition.point_labels, [1] * n_observed)
            self.assertTrue(partition.degenerate)
            self.assertEqual(partition.phantoms, (1,) * (4 - n_observed))

    def test_tie_break_collapse_is_degenerate(self):
        R = np.zeros((11, 11))
        R[0, [0, 4]] = R[1, [1, 5]] = 0.5
        R[2, 2] = R[3, 3] = 1.0
        partition = extract_partition(R, 4, self.library)
        np.testing.assert_array_equal(partition.point_labels, [1, 1, 1, 1])
        self.assertTrue(partition.degenerate)

    def test_overlaid_duplicate_is_instantiated(self):
        R = np.zeros((11, 11))
        for n in range(4):
            R[n, [n, 4 + n]] = 0.5
        R[[4, 5, 6], [8, 9, 10]] = 1.0
        partition = extract_partition(R, 7, self.library)
        np.testing.assert_array_equal(partition.point_labels, [1, 1, 1, 1, 3, 3, 3])
        self.assertEqual(partition.phantoms, (2, 2, 2, 2))
        self.assertTrue(partition.degenerate)

        truth = ScenePartition(point_labels=[1, 1, 1, 1, 3, 3, 3])
        groups = self.library.interchangeable_groups()
        full = score_scene(0, truth, partition, 11, FULL, groups)
        masked = score_scene(0, truth, partition, 11, GT_MASK, groups)
        self.assertAlmostEqual(full.sa, 7 / 11)
        self.assertEqual(masked.sa, 1.0)
        self.assertEqual((full.scene_accuracy, masked.scene_accuracy), (0, 1))

    def test_labels_maximize_total_object_mass(self):
        rng = np.random.default_rng(8)
        for _ in range(5):
            R = rng.random((11, 11))
            R[:3, :4] += 2.0
            R[3:5, 8:] += 3.0
            R /= R.sum(axis=1, keepdims=True)
            object_mass = np.stack([R[:5, span].sum(axis=1) for span in self.library.slices], axis=1)
            best = max(
                itertools.product(range(3), repeat=5),
                key=lambda labels: sum(object_mass[m, k] for m, k in enumerate(labels)),
            )
            partition = extract_partition(R, 5, self.library)
            np.testing.assert_array_equal(partition.point_labels, np.array(best) + 1)
            self.assertFalse(partition.degenerate)
            for k, size in enumerate(self.library.sizes, start=1):
                count = int(np.sum(partition.point_labels == k))
                if count or k in partition.phantoms:
                    self.assertEqual(count + partition.phantoms.count(k), max(size, count))

    def test_lone_point_is_dissolved(self):
        R = np.zeros((11, 11))
        R[0, 0] = R[1, 1] = R[2, 2] = 1.0
        R[3, 8] = 1.0
        partition = extract_partition(R, 4, self.library)
        np.testing.assert_array_equal(partition.point_labels, [1, 1, 1, 0])
        self.assertEqual(partition.phantoms, (1,))


class SparsityTest(SimpleTestCase):
    def setUp(self):
        self.library = default_library()

    def test_lone_confident_point(self):
        R = np.zeros((11, 11))
        R[0, 8] = 1.0
        R[1, 0] = R[2, 1] = 1.0
        self.assertTrue(violates_sparsity(R, 3, self.library))

    def test_permutation_is_sparse(self):
        self.assertFalse(violates_sparsity(np.eye(11), 11, self.library))
