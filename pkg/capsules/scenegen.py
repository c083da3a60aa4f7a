"""
Random constellation scenes: each template is present with some probability,
optionally corrupted in its reference frame, posed by a random similarity
transform, and the whole scene is mapped isotropically into [-1, 1]^2.
"""

import logging
import multiprocessing
from dataclasses import dataclass, field

import numpy as np

from .exceptions import CapsuleError
from .geometry import Part, Pose, default_library, part_predictor

logger = logging.getLogger(__name__)

DEFAULT_DRAWS = 512


@dataclass(frozen=True)
class GenConfig:
    library: object = field(default_factory=default_library)
    presence_prob: float = 0.5
    sigma: float = 0.0
    translation_range: tuple = (-3.0, 3.0)
    scale_range: tuple = (0.5, 1.5)
    rotation_range: tuple = (-np.pi, np.pi)
    draws: int = DEFAULT_DRAWS
    random_pose: bool = True

    def __post_init__(self):
        if not 0.0 <= self.presence_prob <= 1.0:
            raise CapsuleError(f"Presence probability must lie in [0, 1], got {self.presence_prob}")
        if self.sigma < 0:
            raise CapsuleError(f"Noise sigma must be nonnegative, got {self.sigma}")
        if self.draws < 0:
            raise CapsuleError(f"Draw count must be nonnegative, got {self.draws}")
        low, high = self.scale_range
        if not 0 < low <= high:
            raise CapsuleError(f"Scale range must be positive and ordered, got {self.scale_range}")


@dataclass(frozen=True, eq=False)
class Scene:
    index: int
    seed: int
    sigma: float
    points: np.ndarray
    labels: np.ndarray
    parts: np.ndarray
    missing_mask: np.ndarray
    poses: tuple

    @property
    def n_points(self):
        return len(self.points)

    @property
    def present(self):
        return tuple(k for k, pose in enumerate(self.poses) if pose is not None)

    def truth_slots(self, library):
        """Flattened (k, n) slot of every observed point."""
        return np.array([library.slot(k - 1, n) for k, n in zip(self.labels, self.parts)], dtype=int)

    def __eq__(self, other):
        if not isinstance(other, Scene):
            return NotImplemented
        return (
            self.index == other.index
            and self.seed == other.seed
            and self.sigma == other.sigma
            and np.array_equal(self.points, other.points)
            and np.array_equal(self.labels, other.labels)
            and np.array_equal(self.parts, other.parts)
            and np.array_equal(self.missing_mask, other.missing_mask)
            and self.poses == other.poses
        )


def normalize_points(points):
    """
    Isotropic map of a point cloud into [-1, 1]^2.

    Returns the mapped points with the centre c and half-side h of the map
    x -> (x - c) / h.
    """
    low, high = points.min(axis=0), points.max(axis=0)
    centre = (low + high) / 2.0
    half = float((high - low).max()) / 2.0
    if half <= 0:
        raise CapsuleError("Cannot normalize a scene whose points all coincide")
    return np.clip((points - centre) / half, -1.0, 1.0), centre, half


def _normalized_pose(pose, centre, half):
    y = pose.vector
    return Pose(((y[0] - centre[0]) / half, (y[1] - centre[1]) / half, y[2] / half, y[3] / half))


def _sample_pose(cfg, rng):
    if not cfg.random_pose:
        rng.random(4)
        return Pose.identity()
    tx, ty = rng.uniform(*cfg.translation_range, size=2)
    scale = rng.uniform(*cfg.scale_range)
    theta = rng.uniform(*cfg.rotation_range)
    return Pose.from_params(tx, ty, scale, theta)


def generate_scene(cfg, seed, index=0):
    """Draw one scene from cfg; returns None for a scene with no present object."""
    library = cfg.library
    presence_ss, noise_ss, pose_ss, shuffle_ss = np.random.SeedSequence(seed).spawn(4)
    presence_rng = np.random.default_rng(presence_ss)
    noise_rng = np.random.default_rng(noise_ss)
    pose_rng = np.random.default_rng(pose_ss)
    shuffle_rng = np.random.default_rng(shuffle_ss)

    present = presence_rng.random(len(library)) < cfg.presence_prob
    poses = [_sample_pose(cfg, pose_rng) for _ in library]
    if not present.any():
        return None

    points, labels, parts = [], [], []
    for k, template in enumerate(library):
        noise = noise_rng.standard_normal((len(template), 2))
        if not present[k]:
            continue
        reference = template.coordinates
        if cfg.sigma > 0:
            reference = reference + cfg.sigma * noise
        f = np.stack([part_predictor(Part(px, py)) for px, py in reference])
        points.append(f @ poses[k].vector)
        labels.extend([k + 1] * len(template))
        parts.extend(range(len(template)))

    points = np.concatenate(points)
    points, centre, half = normalize_points(points)
    order = shuffle_rng.permutation(len(points))

    missing = np.repeat(~present, library.sizes)
    scene_poses = tuple(
        _normalized_pose(pose, centre, half) if present[k] else None for k, pose in enumerate(poses)
    )
    return Scene(
        index=index,
        seed=int(seed),
        sigma=float(cfg.sigma),
        points=points[order],
        labels=np.asarray(labels, dtype=int)[order],
        parts=np.asarray(parts, dtype=int)[order],
        missing_mask=missing,
        poses=scene_poses,
    )


def scene_seeds(master_seed, draws):
    """Per-draw seeds split off the master seed by counter."""
    children = np.random.SeedSequence(master_seed).spawn(draws)
    return [int(child.generate_state(1, dtype=np.uint64)[0]) for child in children]


def _generate_indexed(args):
    cfg, seed, index = args
    return generate_scene(cfg, seed, index=index)


def generate_dataset(cfg, master_seed, workers=1):
    """All non-empty scenes of cfg.draws draws, in draw order."""
    jobs = [(cfg, seed, i) for i, seed in enumerate(scene_seeds(master_seed, cfg.draws))]
    if workers > 1 and len(jobs) > 1:
        with multiprocessing.Pool(processes=workers) as pool:
            scenes = pool.map(_generate_indexed, jobs)
    else:
        scenes = [_generate_indexed(job) for job in jobs]
    dataset = [scene for scene in scenes if scene is not None]
    logger.debug(
        "Generated %d non-empty scenes from %d draws (sigma=%s, seed=%s)",
        len(dataset), cfg.draws, cfg.sigma, master_seed,
    )
    return dataset
