"""Synthetic landmark world and depth-camera sensor.

Stands in for real RGB-D data: landmarks are scattered in a corridor-shaped
box, a configurable fraction of them carry near-copies of a few prototype
descriptors (repeated objects), and a pinhole-frustum sensor renders noisy
observation frames with ground truth.

Camera convention: +z is the optical axis, +x points right, +y points down.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import InvalidSpec
from .feature_map import FeatureMap, ObservationFrame
from .geometry import Pose, axis_angle_quat, quat_multiply, slerp

# camera looking along world +X with image "up" along world +Z
_FORWARD_X = np.array([[0.0, 0.0, 1.0], [-1.0, 0.0, 0.0], [0.0, -1.0, 0.0]])


@dataclass
class WorldSpec:
    volume_min: tuple[float, float, float] = (0.0, 0.0, 0.0)
    volume_max: tuple[float, float, float] = (30.0, 4.0, 3.0)
    landmark_count: int = 50_000
    prototype_count: int = 20
    repeat_fraction: float = 0.3
    prototype_sigma: float = 0.005
    descriptor_dim: int = 64
    # descriptors are drawn from an anisotropic Gaussian and normalised:
    # ``major_dims`` unit-variance components, the rest scaled by ``minor_scale``
    major_dims: int = 3
    minor_scale: float = 0.003
    rng_seed: int = 0

    def validate(self) -> None:
        lo, hi = np.asarray(self.volume_min, float), np.asarray(self.volume_max, float)
        if lo.shape != (3,) or hi.shape != (3,) or np.any(hi <= lo):
            raise InvalidSpec("volume must be a non-empty axis-aligned box")
        if self.landmark_count < 1 or self.descriptor_dim < 1:
            raise InvalidSpec("landmark_count and descriptor_dim must be positive")
        if not 0.0 <= self.repeat_fraction <= 1.0:
            raise InvalidSpec("repeat_fraction must lie in [0, 1]")
        if self.repeat_fraction > 0 and self.prototype_count < 1:
            raise InvalidSpec("aliasing needs at least one prototype")
        if self.prototype_sigma < 0 or self.minor_scale < 0 or self.major_dims < 1:
            raise InvalidSpec("descriptor shape parameters out of range")


@dataclass
class World:
    """Ground-truth landmarks; ``prototype_ids`` is -1 for unique descriptors."""

    positions: np.ndarray
    descriptors: np.ndarray
    prototype_ids: np.ndarray
    prototypes: np.ndarray

    def __len__(self) -> int:
        return len(self.positions)

    def as_map(self) -> FeatureMap:
        return FeatureMap(self.positions, self.descriptors, np.zeros(len(self)), np.ones(len(self), dtype=np.int64))


def unit_rows(x: np.ndarray) -> np.ndarray:
    return x / np.linalg.norm(x, axis=-1, keepdims=True)


def random_descriptors(rng: np.random.Generator, n: int, dim: int, major_dims: int, minor_scale: float) -> np.ndarray:
    scale = np.full(dim, minor_scale)
    scale[: min(major_dims, dim)] = 1.0
    return unit_rows(rng.standard_normal((n, dim)) * scale)


def generate_world(spec: WorldSpec) -> World:
    spec.validate()
    rng = np.random.default_rng(spec.rng_seed)
    lo, hi = np.asarray(spec.volume_min, float), np.asarray(spec.volume_max, float)
    n, dim = spec.landmark_count, spec.descriptor_dim
    positions = lo + rng.random((n, 3)) * (hi - lo)
    descriptors = random_descriptors(rng, n, dim, spec.major_dims, spec.minor_scale)
    prototype_ids = np.full(n, -1, dtype=np.int64)
    n_rep = int(round(spec.repeat_fraction * n))
    prototypes = np.zeros((0, dim))
    if n_rep:
        prototypes = random_descriptors(rng, spec.prototype_count, dim, spec.major_dims, spec.minor_scale)
        chosen = np.sort(rng.choice(n, n_rep, replace=False))
        assign = rng.integers(spec.prototype_count, size=n_rep)
        clones = prototypes[assign] + spec.prototype_sigma * rng.standard_normal((n_rep, dim))
        descriptors[chosen] = unit_rows(clones)
        prototype_ids[chosen] = assign
    return World(positions, descriptors, prototype_ids, prototypes)


@dataclass
class SensorSpec:
    fov_h: float = 57.0
    fov_v: float = 43.0
    range_min: float = 0.5
    range_max: float = 5.0
    depth_noise_a: float = 0.002
    descriptor_noise: float = 0.01
    detection_prob: float = 0.5
    max_features_per_frame: int = 500

    def validate(self) -> None:
        if not (0 < self.fov_h < 180 and 0 < self.fov_v < 180):
            raise InvalidSpec("field of view must be in (0, 180) degrees")
        if not 0 < self.range_min < self.range_max:
            raise InvalidSpec("range must satisfy 0 < min < max")
        if not 0.0 <= self.detection_prob <= 1.0:
            raise InvalidSpec("detection_prob must lie in [0, 1]")
        if self.depth_noise_a < 0 or self.descriptor_noise < 0 or self.max_features_per_frame < 0:
            raise InvalidSpec("noise levels and feature cap must be nonnegative")


def visible_mask(points_cam: np.ndarray, sensor: SensorSpec) -> np.ndarray:
    """Frustum-and-range predicate on camera-frame points."""
    x, y, z = points_cam[:, 0], points_cam[:, 1], points_cam[:, 2]
    th = np.tan(np.radians(sensor.fov_h / 2))
    tv = np.tan(np.radians(sensor.fov_v / 2))
    return (z >= sensor.range_min) & (z <= sensor.range_max) & (np.abs(x) <= th * z) & (np.abs(y) <= tv * z)


def render_frame(world: World, sensor: SensorSpec, pose: Pose, seed, frame_index: int = 0):
    """Render one observation frame from ``pose``.

    Returns ``(frame, landmark_ids)`` where ``landmark_ids[i]`` is the world
    landmark behind observation ``i``; the ids are for test oracles and are
    deliberately kept out of :class:`ObservationFrame`.
    """
    rng = np.random.default_rng(seed)
    cam = pose.inverse().apply(world.positions)
    ids = np.flatnonzero(visible_mask(cam, sensor))
    if sensor.detection_prob < 1.0:
        ids = ids[rng.random(len(ids)) < sensor.detection_prob]
    strengths = 1.0 - rng.random(len(ids))  # in (0, 1]
    if len(ids) > sensor.max_features_per_frame:
        keep = np.sort(np.argsort(-strengths, kind="stable")[: sensor.max_features_per_frame])
        ids, strengths = ids[keep], strengths[keep]
    perm = rng.permutation(len(ids))
    ids, strengths = ids[perm], strengths[perm]

    pts = cam[ids]
    if sensor.depth_noise_a > 0 and len(ids):
        z = pts[:, 2]
        dz = rng.standard_normal(len(ids)) * sensor.depth_noise_a * z * z
        pts = pts * ((z + dz) / z)[:, None]
    desc = world.descriptors[ids]
    if sensor.descriptor_noise > 0 and len(ids):
        desc = unit_rows(desc + sensor.descriptor_noise * rng.standard_normal(desc.shape))
    frame = ObservationFrame(pts, desc, strengths, pose, frame_index)
    return frame, ids


@dataclass
class TrajectorySpec:
    waypoints: Sequence[Pose]
    frame_count: int

    def poses(self) -> list[Pose]:
        if self.frame_count < 1 or not self.waypoints:
            raise InvalidSpec("trajectory needs frame_count >= 1 and at least one waypoint")
        wps = list(self.waypoints)
        if len(wps) == 1 or self.frame_count == 1:
            return [wps[0]] * self.frame_count
        out = []
        segs = len(wps) - 1
        for s in np.linspace(0.0, segs, self.frame_count):
            i = min(int(s), segs - 1)
            u = s - i
            a, b = wps[i], wps[i + 1]
            out.append(Pose(slerp(a.rotation, b.rotation, u), (1 - u) * a.translation + u * b.translation))
        return out


def camera_pose(position: Sequence[float], yaw_deg: float = 0.0, pitch_deg: float = 0.0) -> Pose:
    """Camera at ``position`` looking along world +X rotated by yaw (about Z) and pitch (up positive)."""
    base = Pose.from_matrix(_FORWARD_X)
    q = quat_multiply(axis_angle_quat((0, 0, 1), np.radians(yaw_deg)),
                      quat_multiply(axis_angle_quat((0, 1, 0), -np.radians(pitch_deg)), base.rotation))
    return Pose(q, position)


def corridor_mapping_waypoints(spec: WorldSpec) -> list[Pose]:
    """Out-and-back sweep along the corridor centre line, used to build maps."""
    lo, hi = np.asarray(spec.volume_min, float), np.asarray(spec.volume_max, float)
    yc, zc = (lo[1] + hi[1]) / 2, (lo[2] + hi[2]) / 2
    x0, x1 = lo[0] + 0.2, hi[0] - 0.2
    return [
        camera_pose((x0, yc, zc), 0.0),
        camera_pose((x1 - 4.0, yc, zc), 0.0),
        camera_pose((x1, yc, zc), 90.0),
        camera_pose((x1, yc, zc), 180.0),
        camera_pose((x0 + 4.0, yc, zc), 180.0),
        camera_pose((x0, yc, zc), 270.0),
    ]


def corridor_evaluation_waypoints(spec: WorldSpec) -> list[Pose]:
    """A second pass, offset from the mapping path, with heading changes and a
    turn-around close to the far end wall, where few landmarks are in view."""
    lo, hi = np.asarray(spec.volume_min, float), np.asarray(spec.volume_max, float)
    w = hi[1] - lo[1]
    y1, y2 = lo[1] + 0.4 * w, lo[1] + 0.6 * w
    z = lo[2] + 0.45 * (hi[2] - lo[2])
    x0, x1 = lo[0] + 1.0, hi[0] - 1.0
    xm = (x0 + x1) / 2
    return [
        camera_pose((x0, y1, z), 5.0),
        camera_pose((xm, y1, z), -10.0, 5.0),
        camera_pose((x1 - 3.0, y1, z), 8.0),
        camera_pose((x1, y1, z), 0.0),
        camera_pose((x1, (y1 + y2) / 2, z), 90.0),
        camera_pose((x1 - 0.5, y2, z), 180.0),
        camera_pose((xm, y2, z), 170.0, -5.0),
        camera_pose((x0 + 3.0, y2, z), 185.0),
    ]


def simulate(world: World, sensor: SensorSpec, poses: Sequence[Pose], seed: int):
    """Render a pose sequence; returns ``(frames, gen_ids)`` with per-frame seeds ``(seed, i)``."""
    sensor.validate()
    frames, gen = [], []
    for i, pose in enumerate(poses):
        fr, ids = render_frame(world, sensor, pose, (seed, i), frame_index=i)
        frames.append(fr)
        gen.append(ids)
    return frames, gen
