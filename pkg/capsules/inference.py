"""
Variational inference for the generative capsule model.

q(Y) is a product of Gaussians over the object poses and q(Z) is the
responsibility matrix R. Rows of R are the M observed points followed by
N - M dummy rows; columns are the flattened (k, n) part slots. Under the
doubly-stochastic prior ("ds") R is projected with Sinkhorn-Knopp; under the
mixture prior ("gmm") every observed row is a categorical over the N slots and
dummy rows stay zero.
"""

import logging
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.linalg import cho_factor, cho_solve
from scipy.spatial.distance import cdist
from scipy.special import softmax, xlogy

from .exceptions import CapsuleError, SinkhornConvergenceError, SinkhornError
from .geometry import POSE_DIM
from .metrics import ScenePartition
from .sinkhorn import DEFAULT_MAX_ITERS, DEFAULT_TOL, sinkhorn_knopp

logger = logging.getLogger(__name__)

DS = "ds"
GMM = "gmm"
PRIOR_KINDS = (DS, GMM)

LOG_2PI = np.log(2.0 * np.pi)
RHO_FLOOR = 1e-300
SPARSITY_PEAK = 0.9
MIN_OBJECT_MASS = 2.0
MISSING_COLUMN_MASS = 0.5
VI_SINKHORN_TOL = 1e-10


@dataclass(frozen=True)
class ModelPrior:
    mu0: np.ndarray = field(default_factory=lambda: np.zeros(POSE_DIM))
    precision0: np.ndarray = field(default_factory=lambda: np.eye(POSE_DIM))
    a: object = None
    lam: float = 500.0
    lam_max: float = 1e4

    def __post_init__(self):
        object.__setattr__(self, "mu0", np.asarray(self.mu0, dtype=float))
        object.__setattr__(self, "precision0", np.asarray(self.precision0, dtype=float))
        try:
            cho_factor(self.precision0)
        except np.linalg.LinAlgError as exc:
            raise CapsuleError("Prior precision must be positive definite") from exc
        if self.a is not None and np.any(np.asarray(self.a) <= 0):
            raise CapsuleError("Prior assignment weights must be positive")
        if self.lam <= 0:
            raise CapsuleError(f"Observation precision must be positive, got {self.lam}")

    def with_lambda(self, lam):
        return replace(self, lam=float(lam))

    def log_a(self, n_slots):
        """log a_mnk as an (N, N) matrix; the default prior is uniform 1/N."""
        if self.a is None:
            return np.full((n_slots, n_slots), -np.log(n_slots))
        return np.broadcast_to(np.log(np.asarray(self.a, dtype=float)), (n_slots, n_slots))


class PosePosterior:
    """Gaussian q(y_k) with mean mu and precision Lambda."""

    def __init__(self, mu, precision):
        self.mu = np.asarray(mu, dtype=float)
        self.precision = np.asarray(precision, dtype=float)
        self._factor = cho_factor(self.precision)

    @property
    def covariance(self):
        return cho_solve(self._factor, np.eye(len(self.mu)))

    def trace_term(self, gram):
        """trace(F^T F Lambda^-1) for a stack of Gram matrices."""
        gram = np.asarray(gram, dtype=float)
        if gram.ndim == 2:
            gram = gram[None]
        return np.einsum("sij,ji->s", gram, self.covariance)

    def logdet(self):
        return 2.0 * np.log(np.diag(self._factor[0])).sum()

    def kl_to(self, prior):
        """Closed-form KL(q(y_k) || p(y_k)) for a d = 4 Gaussian pair."""
        diff = self.mu - prior.mu0
        _, prior_logdet = np.linalg.slogdet(prior.precision0)
        return 0.5 * (
            np.trace(prior.precision0 @ self.covariance)
            + diff @ prior.precision0 @ diff
            - len(self.mu)
            + self.logdet()
            - prior_logdet
        )


def update_pose_posterior(points, library, R, prior):
    """q(Y) update; only the observed rows of R contribute."""
    points = np.asarray(points, dtype=float).reshape(-1, 2)
    observed = R[: len(points)]
    mass = observed.sum(axis=0)
    weighted = observed.T @ points
    F, gram = library.predictors, library.gram
    weighted_gram = mass[:, None, None] * gram
    projected = np.einsum("sji,sj->si", F, weighted)

    base = prior.precision0 @ prior.mu0
    posteriors = []
    for span in library.slices:
        precision = prior.precision0 + prior.lam * weighted_gram[span].sum(axis=0)
        precision = 0.5 * (precision + precision.T)
        rhs = base + prior.lam * projected[span].sum(axis=0)
        factor = cho_factor(precision)
        posteriors.append(PosePosterior(cho_solve(factor, rhs), precision))
    return posteriors


def expected_sq_error(points, library, posteriors):
    """E_q||x_m - F_kn y_k||^2 for every observed point and slot, shape (M, N)."""
    owner = library.slot_template
    F, gram = library.predictors, library.gram
    predicted = np.einsum("sij,sj->si", F, np.stack([posteriors[k].mu for k in owner]))
    trace = np.concatenate(
        [posteriors[k].trace_term(gram[span]) for k, span in enumerate(library.slices)]
    )
    return cdist(np.asarray(points, dtype=float).reshape(-1, 2), predicted, "sqeuclidean") + trace


def update_log_rho(points, library, posteriors, prior):
    n_slots = library.n_slots
    log_rho = np.array(prior.log_a(n_slots), dtype=float)
    m = len(points)
    error = expected_sq_error(points, library, posteriors)
    log_rho[:m] += -LOG_2PI + np.log(prior.lam) - 0.5 * prior.lam * error
    return log_rho


def update_q_z(log_rho, prior_kind, n_observed, tol=DEFAULT_TOL, max_iters=DEFAULT_MAX_ITERS):
    if not np.all(np.isfinite(log_rho)):
        raise CapsuleError("log rho must be finite")
    if prior_kind == DS:
        shifted = log_rho - log_rho.max(axis=1, keepdims=True)
        return sinkhorn_knopp(np.maximum(np.exp(shifted), RHO_FLOOR), tol=tol, max_iters=max_iters)
    if prior_kind == GMM:
        R = np.zeros_like(log_rho)
        R[:n_observed] = softmax(log_rho[:n_observed], axis=1)
        return R
    raise CapsuleError(f"Unknown prior kind {prior_kind!r}")


def elbo(points, library, R, posteriors, prior, prior_kind=DS):
    """E_q[log p(X|Y,Z)] - KL(q(Y)||p(Y)) - KL(q(Z)||p(Z))."""
    m = len(points)
    error = expected_sq_error(points, library, posteriors)
    likelihood = np.sum(R[:m] * (np.log(prior.lam) - LOG_2PI - 0.5 * prior.lam * error))
    kl_y = sum(q.kl_to(prior) for q in posteriors)
    rows = R if prior_kind == DS else R[:m]
    log_a = prior.log_a(library.n_slots)[: len(rows)]
    kl_z = np.sum(xlogy(rows, rows) - rows * log_a)
    return float(likelihood - kl_y - kl_z)


@dataclass(frozen=True)
class VIConfig:
    prior_kind: str = DS
    lambda_init: float = 500.0
    lambda_max: float = 1e4
    anneal_factor: float = 10.0
    restarts: int = 5
    seed: object = 0
    rel_tol: float = 1e-6
    max_iters_per_stage: int = 200
    sparsity_retries: int = 5
    sinkhorn_tol: float = VI_SINKHORN_TOL
    sinkhorn_max_iters: int = DEFAULT_MAX_ITERS

    def __post_init__(self):
        if self.prior_kind not in PRIOR_KINDS:
            raise CapsuleError(f"Unknown prior kind {self.prior_kind!r}")
        if self.lambda_init <= 0 or self.lambda_max <= 0:
            raise CapsuleError("Observation precisions must be positive")
        if self.anneal_factor <= 1:
            raise CapsuleError(f"Anneal factor must exceed 1, got {self.anneal_factor}")
        if self.restarts < 1:
            raise CapsuleError(f"Need at least one restart, got {self.restarts}")


@dataclass
class VIResult:
    R: np.ndarray
    posteriors: list
    elbo_trace: list
    anneal_points: list = field(default_factory=list)
    restarts_used: int = 1
    converged: bool = True
    degenerate: bool = False
    final_lambda: float = 0.0
    unbalanced_cycles: int = 0

    @property
    def elbo(self):
        return self.elbo_trace[-1] if self.elbo_trace else -np.inf


def _initial_responsibilities(rng, n_slots, n_observed, cfg):
    R = rng.random((n_slots, n_slots))
    if cfg.prior_kind == DS:
        return sinkhorn_knopp(R)
    R[n_observed:] = 0.0
    R[:n_observed] /= R[:n_observed].sum(axis=1, keepdims=True)
    return R


def _single_run(points, library, cfg, prior, seed_seq):
    rng = np.random.default_rng(seed_seq)
    n_observed = len(points)
    R = _initial_responsibilities(rng, library.n_slots, n_observed, cfg)
    lam = cfg.lambda_init
    trace, anneal_points = [], []
    converged = True
    unbalanced = 0

    while True:
        stage_prior = prior.with_lambda(lam)
        previous = None
        for _ in range(cfg.max_iters_per_stage):
            posteriors = update_pose_posterior(points, library, R, stage_prior)
            log_rho = update_log_rho(points, library, posteriors, stage_prior)
            kept = R
            try:
                R = update_q_z(
                    log_rho, cfg.prior_kind, n_observed, cfg.sinkhorn_tol, cfg.sinkhorn_max_iters
                )
            except SinkhornConvergenceError as exc:
                # columns of the last iterate are exact, rows are within exc.deviation
                logger.debug("Using unbalanced Sinkhorn iterate at lambda=%g: %s", lam, exc)
                unbalanced += 1
                R = exc.partial
            except SinkhornError as exc:
                logger.warning("Restart stopped at lambda=%g: %s", lam, exc)
                return VIResult(
                    R, posteriors, trace, anneal_points, converged=False, final_lambda=lam,
                    unbalanced_cycles=unbalanced,
                )
            value = elbo(points, library, R, posteriors, stage_prior, cfg.prior_kind)
            if previous is not None and value < previous:
                # the pose step alone never lowers the bound, an inexact projection can
                held = elbo(points, library, kept, posteriors, stage_prior, cfg.prior_kind)
                if held >= value:
                    logger.debug("Kept previous responsibilities at lambda=%g (%.3g)", lam, value - previous)
                    R, value = kept, held
                trace.append(value)
                break
            trace.append(value)
            if previous is not None and abs(value - previous) <= cfg.rel_tol * max(abs(previous), 1.0):
                break
            previous = value
        else:
            converged = False
        if lam >= cfg.lambda_max:
            break
        lam = min(lam * cfg.anneal_factor, cfg.lambda_max)
        anneal_points.append(len(trace))
        logger.debug("Annealed lambda to %g after %d cycles", lam, len(trace))

    posteriors = update_pose_posterior(points, library, R, prior.with_lambda(lam))
    if unbalanced:
        logger.debug("%d of %d cycles used an unbalanced Sinkhorn iterate", unbalanced, len(trace))
    return VIResult(
        R, posteriors, trace, anneal_points, converged=converged, final_lambda=lam,
        unbalanced_cycles=unbalanced,
    )


def violates_sparsity(R, n_observed, library):
    """True if some object confidently owns a point but explains fewer than two parts."""
    observed = R[:n_observed]
    for span in library.slices:
        block = observed[:, span]
        if block.size and block.max() > SPARSITY_PEAK and block.sum() < MIN_OBJECT_MASS:
            return True
    return False


def _rank(result):
    return (result.final_lambda, result.elbo)


def run_vi(points, library, cfg, prior=None):
    """
    Annealed coordinate ascent with random restarts.

    The best restart by final ELBO is kept; if it breaks the sparsity rule,
    fresh single runs are tried until one passes or the retry budget is
    spent, in which case the best run seen is returned flagged degenerate.
    """
    points = np.asarray(points, dtype=float).reshape(-1, 2)
    if len(points) == 0:
        raise CapsuleError("Cannot run inference on an empty scene")
    if len(points) > library.n_slots:
        raise CapsuleError(f"Scene has {len(points)} points but the library only {library.n_slots} parts")
    prior = (prior or ModelPrior(lam_max=cfg.lambda_max)).with_lambda(cfg.lambda_init)
    seeds = np.random.SeedSequence(cfg.seed).spawn(cfg.restarts + cfg.sparsity_retries)

    runs = [_single_run(points, library, cfg, prior, seeds[i]) for i in range(cfg.restarts)]
    for i, run in enumerate(runs):
        logger.debug("Restart %d: elbo=%.6f converged=%s", i, run.elbo, run.converged)
    best = max(runs, key=_rank)
    used = cfg.restarts

    if violates_sparsity(best.R, len(points), library):
        chosen = None
        for seed_seq in seeds[cfg.restarts:]:
            used += 1
            run = _single_run(points, library, cfg, prior, seed_seq)
            if not violates_sparsity(run.R, len(points), library):
                chosen = run
                break
            if _rank(run) > _rank(best):
                best = run
        if chosen is None:
            logger.warning("No sparse solution after %d runs; returning best-so-far", used)
            best.degenerate = True
        else:
            best = chosen

    best.restarts_used = used
    return best


def extract_partition(R, n_observed, library):
    """
    Hard partition of the observed points read off the responsibilities.

    Points go to the object with the largest row mass. An object is present
    when it holds at least two points or claims at least two slots (column
    mass of at least one half), which keeps overlaid duplicates visible.
    Each present object contributes one phantom per template part it does not
    explain with a point. Ties in the argmax and objects holding more points
    than parts flag the partition degenerate.
    """
    observed = np.asarray(R)[:n_observed]
    object_mass = np.stack([observed[:, span].sum(axis=1) for span in library.slices], axis=1)
    labels = np.argmax(object_mass, axis=1) + 1 if n_observed else np.zeros(0, dtype=int)
    top = object_mass.max(axis=1, keepdims=True) if n_observed else np.zeros((0, 1))
    tied = bool(np.any(np.sum(np.isclose(object_mass, top, rtol=0.0, atol=1e-12), axis=1) > 1))

    column_mass = observed.sum(axis=0)
    missing = np.flatnonzero(column_mass < MISSING_COLUMN_MASS)
    claimed = np.array([np.sum(column_mass[span] >= MISSING_COLUMN_MASS) for span in library.slices])
    counts = np.bincount(labels, minlength=len(library) + 1)
    present = (counts[1:] >= 2) | (claimed >= 2)
    for k in np.flatnonzero(~present & (counts[1:] > 0)):
        labels[labels == k + 1] = 0
        counts[k + 1] = 0

    phantoms = tuple(
        int(k) + 1
        for k in np.flatnonzero(present)
        for _ in range(max(library.sizes[k] - counts[k + 1], 0))
    )
    overfull = any(counts[k + 1] > size for k, size in enumerate(library.sizes))
    return ScenePartition(
        point_labels=labels,
        missing_slots=tuple(int(s) for s in missing),
        phantoms=phantoms,
        degenerate=bool(tied or overfull),
    )
