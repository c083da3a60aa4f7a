"""
Template and pose algebra for 2D similarity transforms.

A pose is the 4-vector y = (t_x, t_y, s*cos(theta), s*sin(theta)); the image of a
reference-frame part p under y is F(p) @ y where F(p) is the 2x4 part predictor.
Rotation is clockwise, matching the predictor layout.
"""

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .exceptions import CapsuleError, DegenerateScaleError, SingularBasisError

# Pose dimension of a 2D similarity transform. An affine extension only needs a
# larger pose and a different predictor layout.
POSE_DIM = 4

MIN_SCALE = 1e-12
MAX_BASIS_CONDITION = 1e12


@dataclass(frozen=True)
class Part:
    x: float
    y: float

    def __post_init__(self):
        if not (np.isfinite(self.x) and np.isfinite(self.y)):
            raise CapsuleError(f"Part coordinates must be finite, got ({self.x}, {self.y})")
        object.__setattr__(self, "x", float(self.x))
        object.__setattr__(self, "y", float(self.y))

    @property
    def position(self):
        return np.array([self.x, self.y], dtype=float)


@dataclass(frozen=True)
class Pose:
    y: tuple

    def __post_init__(self):
        values = tuple(float(v) for v in np.asarray(self.y, dtype=float).ravel())
        if len(values) != POSE_DIM:
            raise CapsuleError(f"Pose needs {POSE_DIM} entries, got {len(values)}")
        if not all(np.isfinite(values)):
            raise CapsuleError(f"Pose entries must be finite, got {values}")
        object.__setattr__(self, "y", values)

    @classmethod
    def from_params(cls, tx, ty, scale, theta):
        return cls((tx, ty, scale * np.cos(theta), scale * np.sin(theta)))

    @classmethod
    def identity(cls):
        return cls((0.0, 0.0, 1.0, 0.0))

    @property
    def vector(self):
        return np.array(self.y, dtype=float)

    @property
    def scale(self):
        return float(np.hypot(self.y[2], self.y[3]))


class PoseParams(NamedTuple):
    translation: np.ndarray
    scale: float
    theta: float


def part_predictor(part):
    """Return the 2x4 predictor F such that F @ y is the posed part."""
    px, py = part.x, part.y
    return np.array(
        [
            [1.0, 0.0, px, py],
            [0.0, 1.0, py, -px],
        ]
    )


def apply_pose(part, pose):
    return part_predictor(part) @ pose.vector


def pose_params(pose):
    y = pose.y
    scale = float(np.hypot(y[2], y[3]))
    if scale < MIN_SCALE:
        raise DegenerateScaleError(f"Rotation is undefined for scale {scale:.3e}")
    theta = float(np.arctan2(y[3], y[2]))
    return PoseParams(np.array([y[0], y[1]]), scale, theta)


def compose_pose(params):
    """Rebuild the image-frame map x = t + s * Rcw(theta) @ p from pose parameters."""
    c, s = np.cos(params.theta), np.sin(params.theta)
    rotation = params.scale * np.array([[c, s], [-s, c]])

    def transform(point):
        return params.translation + rotation @ np.asarray(point, dtype=float)

    return transform


@dataclass(frozen=True)
class Template:
    name: str
    parts: tuple
    predictors: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        parts = tuple(p if isinstance(p, Part) else Part(*p) for p in self.parts)
        if len(parts) < 2:
            raise CapsuleError(f"Template {self.name!r} needs at least 2 parts, got {len(parts)}")
        coords = np.array([p.position for p in parts])
        diffs = np.linalg.norm(coords[:, None, :] - coords[None, :, :], axis=-1)
        np.fill_diagonal(diffs, np.inf)
        if diffs.min() == 0.0:
            raise CapsuleError(f"Template {self.name!r} has coincident parts")
        predictors = np.stack([part_predictor(p) for p in parts])
        predictors.setflags(write=False)
        object.__setattr__(self, "parts", parts)
        object.__setattr__(self, "predictors", predictors)

    def __len__(self):
        return len(self.parts)

    @property
    def coordinates(self):
        return np.array([p.position for p in self.parts])

    def same_shape(self, other):
        return np.array_equal(self.coordinates, other.coordinates)

    def posed(self, pose):
        """Image-frame locations of every part, shape (N_k, 2)."""
        return self.predictors @ pose.vector


def basis_matrix(template, n1, n2):
    """Stack the predictors of parts n1 and n2 into the 4x4 basis matrix."""
    if n1 == n2:
        raise SingularBasisError(f"Basis parts must differ, got n1 = n2 = {n1}")
    basis = np.vstack([template.predictors[n1], template.predictors[n2]])
    if np.linalg.cond(basis) > MAX_BASIS_CONDITION:
        raise SingularBasisError(
            f"Basis ({n1}, {n2}) of template {template.name!r} is singular"
        )
    return basis


@dataclass(frozen=True)
class TemplateLibrary:
    templates: tuple

    def __post_init__(self):
        templates = tuple(self.templates)
        if not templates:
            raise CapsuleError("Template library is empty")
        object.__setattr__(self, "templates", templates)

    def __len__(self):
        return len(self.templates)

    def __iter__(self):
        return iter(self.templates)

    def __getitem__(self, k):
        return self.templates[k]

    @property
    def sizes(self):
        return tuple(len(t) for t in self.templates)

    @property
    def n_slots(self):
        return sum(self.sizes)

    @property
    def offsets(self):
        return tuple(int(o) for o in np.concatenate([[0], np.cumsum(self.sizes)[:-1]]))

    @property
    def slices(self):
        return tuple(slice(o, o + n) for o, n in zip(self.offsets, self.sizes))

    @property
    def slot_template(self):
        """Template index of every flattened (k, n) slot."""
        return np.repeat(np.arange(len(self.templates)), self.sizes)

    def slot(self, k, n):
        return self.offsets[k] + n

    @property
    def predictors(self):
        return np.concatenate([t.predictors for t in self.templates])

    @property
    def gram(self):
        """F^T F for every slot, shape (N, 4, 4)."""
        f = self.predictors
        return np.einsum("sji,sjk->sik", f, f)

    def interchangeable_groups(self):
        """Groups of 1-based labels whose templates have identical parts."""
        groups = []
        seen = set()
        for k, template in enumerate(self.templates):
            if k in seen:
                continue
            group = [k]
            for j in range(k + 1, len(self.templates)):
                if template.same_shape(self.templates[j]):
                    group.append(j)
            seen.update(group)
            if len(group) > 1:
                groups.append(tuple(j + 1 for j in group))
        return tuple(groups)


def square_template(name="square"):
    """Square of side 2 centred at the origin; the first two corners form the basis."""
    return Template(name, ((1.0, 1.0), (1.0, -1.0), (-1.0, -1.0), (-1.0, 1.0)))


def triangle_template(name="triangle"):
    """Isosceles triangle with base 2 and height 2, centroid at the origin."""
    vertices = np.array([(-1.0, 0.0), (1.0, 0.0), (0.0, 2.0)])
    vertices = vertices - vertices.mean(axis=0)
    return Template(name, tuple(map(tuple, vertices)))


def default_library():
    """Two squares and one triangle, N = 11 parts."""
    return TemplateLibrary((square_template("square_1"), square_template("square_2"), triangle_template()))
