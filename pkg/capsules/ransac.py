"""
Scene explanation by basis solving.

Every ordered pair of scene points is matched against a basis pair of each
template, the pose that maps the basis onto the pair is solved exactly, and
the remaining parts are checked against the scene within a tolerance.
Accepted hypotheses are assembled greedily in ascending score order. Optional
relaxed passes re-verify the points left unexplained with every basis, a
looser tolerance and a least-squares refit.
"""

import itertools
import logging
from dataclasses import dataclass, replace

import numpy as np
from scipy.spatial.distance import cdist

from .exceptions import CapsuleError, SingularBasisError
from .geometry import Pose, basis_matrix
from .metrics import ScenePartition

logger = logging.getLogger(__name__)

DEFAULT_TOL = 0.1
FIXED_BASIS = "fixed"
ALL_BASES = "all"


@dataclass(frozen=True)
class RansacConfig:
    tol: float = DEFAULT_TOL
    basis_policy: str = FIXED_BASIS
    refine: bool = False
    relaxed_tols: tuple = ()

    def __post_init__(self):
        if self.tol <= 0:
            raise CapsuleError(f"Matching tolerance must be positive, got {self.tol}")
        if self.basis_policy not in (FIXED_BASIS, ALL_BASES):
            raise CapsuleError(f"Unknown basis policy {self.basis_policy!r}")
        object.__setattr__(self, "relaxed_tols", tuple(float(t) for t in self.relaxed_tols))
        if any(t <= self.tol for t in self.relaxed_tols):
            raise CapsuleError(
                f"Relaxed tolerances must exceed the matching tolerance {self.tol}, got {self.relaxed_tols}"
            )


@dataclass(frozen=True)
class SubsetMatch:
    indices: tuple
    score: float


@dataclass(frozen=True)
class Hypothesis:
    template: int
    pose: Pose
    indices: tuple
    score: float

    @property
    def point_set(self):
        return frozenset(self.indices)


@dataclass(frozen=True)
class Explanation:
    hypotheses: tuple
    point_labels: np.ndarray
    missing: tuple

    def partition(self, library):
        missing_slots = tuple(
            s for k in self.missing for s in range(library.slices[k].start, library.slices[k].stop)
        )
        return ScenePartition(point_labels=self.point_labels, missing_slots=missing_slots)


def solve_pose_from_pair(template, n1, n2, xi, xj):
    basis = basis_matrix(template, n1, n2)
    rhs = np.concatenate([np.asarray(xi, dtype=float), np.asarray(xj, dtype=float)])
    try:
        return Pose(np.linalg.solve(basis, rhs))
    except np.linalg.LinAlgError as exc:
        raise SingularBasisError(f"Basis ({n1}, {n2}) of {template.name!r} is singular") from exc


def subset_match(predicted, points, tol=DEFAULT_TOL):
    """Greedy nearest matching of every predicted part to a distinct point, or None."""
    predicted = np.asarray(predicted, dtype=float).reshape(-1, 2)
    points = np.asarray(points, dtype=float).reshape(-1, 2)
    if len(points) < len(predicted):
        return None
    distances = cdist(predicted, points)
    parts, cols = np.nonzero(distances < tol)
    candidates = sorted(zip(distances[parts, cols], parts, cols))
    assigned = [None] * len(predicted)
    claimed = set()
    for distance, part, col in candidates:
        if assigned[part] is None and col not in claimed:
            assigned[part] = int(col)
            claimed.add(col)
    if any(index is None for index in assigned):
        return None
    score = float(sum(distances[n, m] ** 2 for n, m in enumerate(assigned)))
    return SubsetMatch(tuple(assigned), score)


def refine_pose(template, points, indices):
    """Least-squares pose from every matched part (stacked F y = x)."""
    design = template.predictors.reshape(-1, 4)
    target = np.asarray(points, dtype=float)[list(indices)].reshape(-1)
    y, *_ = np.linalg.lstsq(design, target, rcond=None)
    return Pose(y)


def _basis_pairs(template, policy):
    if policy == FIXED_BASIS:
        return [(0, 1)]
    return list(itertools.permutations(range(len(template)), 2))


def enumerate_hypotheses(points, library, cfg):
    """All accepted hypotheses, deduplicated by (template, matched point set)."""
    points = np.asarray(points, dtype=float).reshape(-1, 2)
    pairs = np.array(list(itertools.permutations(range(len(points)), 2)), dtype=int)
    found = {}
    if not len(pairs):
        return []
    rhs = np.hstack([points[pairs[:, 0]], points[pairs[:, 1]]])
    for k, template in enumerate(library):
        for n1, n2 in _basis_pairs(template, cfg.basis_policy):
            try:
                basis = basis_matrix(template, n1, n2)
            except SingularBasisError:
                logger.debug("Skipping singular basis (%d, %d) of %s", n1, n2, template.name)
                continue
            poses = np.linalg.solve(basis, rhs.T).T
            for y in poses:
                pose = Pose(y)
                match = subset_match(template.posed(pose), points, cfg.tol)
                if match is None:
                    continue
                score = match.score
                if cfg.refine:
                    pose = refine_pose(template, points, match.indices)
                    residual = template.posed(pose) - points[list(match.indices)]
                    score = float((residual ** 2).sum())
                key = (k, tuple(sorted(match.indices)))
                if key not in found or score < found[key].score:
                    found[key] = Hypothesis(k, pose, match.indices, score)
    logger.debug("RANSAC found %d distinct hypotheses over %d point pairs", len(found), len(pairs))
    return list(found.values())


def _interchangeable(library):
    groups = {k: (k,) for k in range(len(library))}
    for group in library.interchangeable_groups():
        members = tuple(label - 1 for label in group)
        for k in members:
            groups[k] = members
    return groups


def _assemble(hypotheses, groups, filled, claimed):
    """Greedy acceptance in ascending score order; filled and claimed are updated in place."""
    accepted = []
    ordered = sorted(hypotheses, key=lambda h: (h.score, h.template, tuple(sorted(h.indices))))
    for hypothesis in ordered:
        if claimed & hypothesis.point_set:
            continue
        slot = next((k for k in groups[hypothesis.template] if k not in filled), None)
        if slot is None:
            continue
        accepted.append(replace(hypothesis, template=slot))
        filled.add(slot)
        claimed |= hypothesis.point_set
    return accepted


def _relaxed_pass(points, library, tol, filled, claimed):
    """Re-verify the unexplained points against the unfilled templates at a looser tolerance."""
    free = np.array([m for m in range(len(points)) if m not in claimed], dtype=int)
    relaxed = RansacConfig(tol=tol, basis_policy=ALL_BASES, refine=True)
    hypotheses = [
        replace(h, indices=tuple(int(free[i]) for i in h.indices))
        for h in enumerate_hypotheses(points[free], library, relaxed)
    ]
    accepted = _assemble(hypotheses, _interchangeable(library), filled, claimed)
    if accepted:
        logger.debug("Relaxed pass at tol=%g explained %d more object(s)", tol, len(accepted))
    return accepted


def run_ransac(points, library, cfg=None):
    """
    Explain a scene with the strict pass, then with each relaxed tolerance.

    A relaxed pass only sees points the earlier passes left unexplained and
    only fills templates that are still free, so it never changes an object
    the strict pass accepted.
    """
    cfg = cfg or RansacConfig()
    points = np.asarray(points, dtype=float).reshape(-1, 2)
    if len(points) == 0:
        raise CapsuleError("Cannot explain an empty scene")
    filled, claimed = set(), set()
    accepted = _assemble(
        enumerate_hypotheses(points, library, cfg), _interchangeable(library), filled, claimed
    )
    for tol in cfg.relaxed_tols:
        if len(claimed) == len(points) or len(filled) == len(library):
            break
        accepted += _relaxed_pass(points, library, tol, filled, claimed)

    labels = np.zeros(len(points), dtype=int)
    for hypothesis in accepted:
        labels[list(hypothesis.indices)] = hypothesis.template + 1
    missing = tuple(k for k in range(len(library)) if k not in filled)
    return Explanation(tuple(accepted), labels, missing)
