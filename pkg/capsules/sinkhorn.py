import numpy as np

from .exceptions import CapsuleError, SinkhornConvergenceError, ZeroLineError

DEFAULT_TOL = 1e-6
DEFAULT_MAX_ITERS = 1000


def marginal_deviation(matrix):
    """Largest absolute deviation of any row or column sum from 1."""
    rows = np.abs(matrix.sum(axis=1) - 1.0).max()
    cols = np.abs(matrix.sum(axis=0) - 1.0).max()
    return float(max(rows, cols))


def sinkhorn_knopp(matrix, tol=DEFAULT_TOL, max_iters=DEFAULT_MAX_ITERS):
    """
    Project a nonnegative square matrix to doubly stochastic form.

    Rows and columns are normalized alternately; every iteration ends with the
    column half-step, so column sums are exact and convergence is judged on the
    row sums.
    """
    x = np.array(matrix, dtype=float)
    if x.ndim != 2 or x.shape[0] != x.shape[1]:
        raise CapsuleError(f"Sinkhorn-Knopp needs a square matrix, got shape {x.shape}")
    if np.any(x < 0) or not np.all(np.isfinite(x)):
        raise CapsuleError("Sinkhorn-Knopp needs finite nonnegative entries")
    zero_rows = np.flatnonzero(x.sum(axis=1) == 0)
    zero_cols = np.flatnonzero(x.sum(axis=0) == 0)
    if zero_rows.size or zero_cols.size:
        raise ZeroLineError(
            f"All-zero rows {zero_rows.tolist()} / columns {zero_cols.tolist()} admit no scaling"
        )

    deviation = np.inf
    for _ in range(max_iters):
        x /= x.sum(axis=1, keepdims=True)
        x /= x.sum(axis=0, keepdims=True)
        deviation = float(np.abs(x.sum(axis=1) - 1.0).max())
        if deviation <= tol:
            return x
    raise SinkhornConvergenceError(deviation, max_iters, partial=x)
