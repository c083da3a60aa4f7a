"""
Partition-comparison metrics for scenes with missing objects.

Every partition lives on the same element universe: the M observed points of a
scene followed by N - M padding elements for the slots that were not observed.
Label 0 is the missing block V_0; labels 1..K are template indices.
"""

import itertools
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment
from sklearn.metrics import adjusted_rand_score
from sklearn.metrics.cluster import contingency_matrix

from .exceptions import EmptySummaryError, UniverseMismatchError

FULL = "full"
GT_MASK = "gt"
CONVENTIONS = (FULL, GT_MASK)


@dataclass(frozen=True, eq=False)
class LabeledPartition:
    labels: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "labels", np.asarray(self.labels, dtype=int))

    def __len__(self):
        return len(self.labels)

    def blocks(self):
        """Blocks as {label: frozenset(element indices)}, V_0 included when non-empty."""
        return {
            int(label): frozenset(np.flatnonzero(self.labels == label).tolist())
            for label in np.unique(self.labels)
        }

    def restrict(self, mask):
        return LabeledPartition(self.labels[mask])


@dataclass(frozen=True, eq=False)
class ScenePartition:
    """A method's (or the ground truth's) explanation of one scene."""

    point_labels: np.ndarray
    missing_slots: tuple = ()
    phantoms: tuple = ()
    degenerate: bool = False

    def __post_init__(self):
        object.__setattr__(self, "point_labels", np.asarray(self.point_labels, dtype=int))

    def labeled(self, n_slots):
        """Full-universe partition: observed points, then padding labeled by phantoms."""
        padding = np.zeros(n_slots - len(self.point_labels), dtype=int)
        phantoms = np.asarray(self.phantoms[: len(padding)], dtype=int)
        padding[: len(phantoms)] = phantoms
        return LabeledPartition(np.concatenate([self.point_labels, padding]))


def truth_partition(scene):
    return ScenePartition(
        point_labels=scene.labels,
        missing_slots=tuple(np.flatnonzero(scene.missing_mask).tolist()),
    )


def _check_universe(V, V_hat):
    if len(V) != len(V_hat):
        raise UniverseMismatchError(
            f"Partitions cover different universes ({len(V)} vs {len(V_hat)} elements)"
        )


def variation_of_information(V, V_hat):
    _check_universe(V, V_hat)
    n = len(V)
    if n == 0:
        return 0.0
    r = contingency_matrix(V.labels, V_hat.labels).astype(float) / n
    p = r.sum(axis=1, keepdims=True)
    q = r.sum(axis=0, keepdims=True)
    nz = r > 0
    terms = r[nz] * (np.log((r / p)[nz]) + np.log((r / q)[nz]))
    return float(max(0.0, -terms.sum()))


def adjusted_rand_index(V, V_hat):
    _check_universe(V, V_hat)
    return float(adjusted_rand_score(V.labels, V_hat.labels))


def _free_matching(a, b):
    if len(a) == 0:
        return 0
    weights = contingency_matrix(a, b)
    rows, cols = linear_sum_assignment(weights, maximize=True)
    return int(weights[rows, cols].sum())


def matching_weight(V, V_hat, pin_missing=True):
    """
    Weight of the maximum bipartite matching between the blocks of V and V_hat.

    With pin_missing the missing blocks V_0 and V_hat_0 may only be paired with
    each other, so a predicted block of phantoms never earns credit for padding.
    """
    _check_universe(V, V_hat)
    a, b = V.labels, V_hat.labels
    if not pin_missing:
        return _free_matching(a, b)
    objects = (a != 0) & (b != 0)
    return int(np.sum((a == 0) & (b == 0))) + _free_matching(a[objects], b[objects])


def observed_mask(V):
    """Elements the ground truth V places in an object block."""
    return V.labels != 0


def segmentation_accuracy(V, V_hat, convention=FULL):
    _check_universe(V, V_hat)
    if convention == GT_MASK:
        mask = observed_mask(V)
        V, V_hat = V.restrict(mask), V_hat.restrict(mask)
    elif convention != FULL:
        raise ValueError(f"Unknown convention {convention!r}")
    if len(V) == 0:
        return 1.0
    return matching_weight(V, V_hat) / len(V)


def _relabelings(groups):
    per_group = [
        [dict(zip(group, perm)) for perm in itertools.permutations(group)] for group in groups
    ]
    for combo in itertools.product(*per_group):
        mapping = {}
        for part in combo:
            mapping.update(part)
        yield mapping


def scene_accuracy(V, V_hat, interchangeable=()):
    """1 iff V_hat reproduces V, allowing swaps among interchangeable labels."""
    _check_universe(V, V_hat)
    for mapping in _relabelings(interchangeable):
        relabeled = np.array([mapping.get(int(v), int(v)) for v in V_hat.labels], dtype=int)
        if np.array_equal(relabeled, V.labels):
            return 1
    return 0


@dataclass(frozen=True)
class SceneScores:
    scene: int
    sa: float
    sa_weight: int
    sa_total: int
    ari: float
    vi: float
    scene_accuracy: int

    def as_dict(self):
        return {
            "sa": self.sa,
            "sa_weight": self.sa_weight,
            "sa_total": self.sa_total,
            "ari": self.ari,
            "vi": self.vi,
            "scene_accuracy": self.scene_accuracy,
        }


def score_scene(scene_id, truth, predicted, n_slots, convention=FULL, interchangeable=()):
    """All metrics of one scene; under the gt-mask convention on observed points only."""
    V, V_hat = truth.labeled(n_slots), predicted.labeled(n_slots)
    if convention == GT_MASK:
        mask = observed_mask(V)
        V, V_hat = V.restrict(mask), V_hat.restrict(mask)
    weight = matching_weight(V, V_hat)
    total = len(V)
    return SceneScores(
        scene=scene_id,
        sa=weight / total if total else 1.0,
        sa_weight=weight,
        sa_total=total,
        ari=adjusted_rand_index(V, V_hat),
        vi=variation_of_information(V, V_hat),
        scene_accuracy=scene_accuracy(V, V_hat, interchangeable),
    )


@dataclass(frozen=True)
class DatasetSummary:
    count: int
    sa: float
    sa_pooled: float
    ari: float
    vi: float
    scene_accuracy: float
    per_scene: tuple = field(default=(), repr=False, compare=False)

    def sa_for(self, convention):
        return self.sa_pooled if convention == GT_MASK else self.sa


def dataset_summary(scores):
    """Means per metric; sa_pooled is the ratio of summed matching weights to summed totals."""
    scores = tuple(scores)
    if not scores:
        raise EmptySummaryError("Cannot summarize an empty list of scene scores")
    total = sum(s.sa_total for s in scores)
    return DatasetSummary(
        count=len(scores),
        sa=float(np.mean([s.sa for s in scores])),
        sa_pooled=sum(s.sa_weight for s in scores) / total if total else 1.0,
        ari=float(np.mean([s.ari for s in scores])),
        vi=float(np.mean([s.vi for s in scores])),
        scene_accuracy=float(np.mean([s.scene_accuracy for s in scores])),
        per_scene=scores,
    )
