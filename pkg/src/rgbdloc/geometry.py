"""Rigid-body poses and closed-form point-set alignment.

A :class:`Pose` maps points from the camera frame into the map frame,
``p_map = R @ p_cam + t``. Rotations are stored as unit quaternions in
``(w, x, y, z)`` order and converted to matrices on demand.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import DegenerateInput

# second/first singular value of the cross-covariance below this -> degenerate
DEGENERACY_RATIO = 1e-12


def quat_to_matrix(q: np.ndarray) -> np.ndarray:
    w, x, y, z = q
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def matrix_to_quat(R: np.ndarray) -> np.ndarray:
    """Shepperd's method; returns a unit quaternion with w >= 0."""
    R = np.asarray(R, dtype=float)
    tr = R[0, 0] + R[1, 1] + R[2, 2]
    if tr > 0:
        s = 2.0 * np.sqrt(1.0 + tr)
        q = np.array([0.25 * s, (R[2, 1] - R[1, 2]) / s, (R[0, 2] - R[2, 0]) / s, (R[1, 0] - R[0, 1]) / s])
    elif R[0, 0] > R[1, 1] and R[0, 0] > R[2, 2]:
        s = 2.0 * np.sqrt(1.0 + R[0, 0] - R[1, 1] - R[2, 2])
        q = np.array([(R[2, 1] - R[1, 2]) / s, 0.25 * s, (R[0, 1] + R[1, 0]) / s, (R[0, 2] + R[2, 0]) / s])
    elif R[1, 1] > R[2, 2]:
        s = 2.0 * np.sqrt(1.0 + R[1, 1] - R[0, 0] - R[2, 2])
        q = np.array([(R[0, 2] - R[2, 0]) / s, (R[0, 1] + R[1, 0]) / s, 0.25 * s, (R[1, 2] + R[2, 1]) / s])
    else:
        s = 2.0 * np.sqrt(1.0 + R[2, 2] - R[0, 0] - R[1, 1])
        q = np.array([(R[1, 0] - R[0, 1]) / s, (R[0, 2] + R[2, 0]) / s, (R[1, 2] + R[2, 1]) / s, 0.25 * s])
    q /= np.linalg.norm(q)
    return q if q[0] >= 0 else -q


def axis_angle_quat(axis: Sequence[float], angle: float) -> np.ndarray:
    axis = np.asarray(axis, dtype=float)
    axis = axis / np.linalg.norm(axis)
    half = 0.5 * angle
    return np.concatenate([[np.cos(half)], np.sin(half) * axis])


def quat_multiply(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return np.array(
        [
            aw * bw - ax * bx - ay * by - az * bz,
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
        ]
    )


def slerp(q0: np.ndarray, q1: np.ndarray, u: float) -> np.ndarray:
    q0 = np.asarray(q0, dtype=float)
    q1 = np.asarray(q1, dtype=float)
    dot = float(np.dot(q0, q1))
    if dot < 0.0:
        q1, dot = -q1, -dot
    if dot > 0.9995:
        q = q0 + u * (q1 - q0)
        return q / np.linalg.norm(q)
    theta = np.arccos(dot)
    return (np.sin((1 - u) * theta) * q0 + np.sin(u * theta) * q1) / np.sin(theta)


@dataclass(frozen=True, eq=False)
class Pose:
    """Rigid transform from the camera frame to the map frame."""

    rotation: np.ndarray = field(default_factory=lambda: np.array([1.0, 0.0, 0.0, 0.0]))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        q = np.array(self.rotation, dtype=float).reshape(4)
        t = np.array(self.translation, dtype=float).reshape(3)
        n = np.linalg.norm(q)
        if not np.isfinite(n) or n == 0.0 or not np.all(np.isfinite(t)):
            raise ValueError("pose requires a finite nonzero quaternion and finite translation")
        q = q / n
        q.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "rotation", q)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls) -> "Pose":
        return cls()

    @classmethod
    def from_matrix(cls, R: np.ndarray, t: Sequence[float] = (0.0, 0.0, 0.0)) -> "Pose":
        return cls(matrix_to_quat(R), t)

    @classmethod
    def from_axis_angle(cls, axis: Sequence[float], angle: float, t: Sequence[float] = (0.0, 0.0, 0.0)) -> "Pose":
        return cls(axis_angle_quat(axis, angle), t)

    @property
    def R(self) -> np.ndarray:
        return quat_to_matrix(self.rotation)

    @property
    def t(self) -> np.ndarray:
        return self.translation

    def matrix(self) -> np.ndarray:
        T = np.eye(4)
        T[:3, :3] = self.R
        T[:3, 3] = self.translation
        return T

    def inverse(self) -> "Pose":
        w, x, y, z = self.rotation
        conj = np.array([w, -x, -y, -z])
        return Pose(conj, -quat_to_matrix(conj) @ self.translation)

    def __mul__(self, other: "Pose") -> "Pose":
        """Composition: ``(a * b)(p) == a(b(p))``."""
        if not isinstance(other, Pose):
            return NotImplemented
        q = quat_multiply(self.rotation, other.rotation)
        return Pose(q, self.R @ other.translation + self.translation)

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Transform a single 3-vector or an ``(n, 3)`` array."""
        points = np.asarray(points, dtype=float)
        return points @ self.R.T + self.translation

    def rotation_angle(self) -> float:
        """Rotation magnitude in radians, in [0, pi]."""
        w = min(1.0, abs(float(self.rotation[0])))
        v = float(np.linalg.norm(self.rotation[1:]))
        return 2.0 * np.arctan2(v, w)

    def to_tokens(self) -> list[str]:
        """The 7-number text form ``tx ty tz qw qx qy qz``."""
        return [repr(float(v)) for v in (*self.translation, *self.rotation)]

    @classmethod
    def from_tokens(cls, tokens: Iterable[str]) -> "Pose":
        vals = [float(v) for v in tokens]
        if len(vals) != 7:
            raise ValueError(f"pose needs 7 numbers, got {len(vals)}")
        return cls(vals[3:], vals[:3])

    def __repr__(self) -> str:
        t = ", ".join(f"{v:.6g}" for v in self.translation)
        q = ", ".join(f"{v:.6g}" for v in self.rotation)
        return f"Pose(t=[{t}], q=[{q}])"


def transform_point(pose: Pose, p: Sequence[float]) -> np.ndarray:
    return pose.apply(np.asarray(p, dtype=float))


def pose_error(a: Pose, b: Pose) -> tuple[float, float]:
    """(rotation angle in rad, translation distance in m) between two poses."""
    d = a.inverse() * b
    return d.rotation_angle(), float(np.linalg.norm(a.translation - b.translation))


def as_points(points) -> np.ndarray:
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise ValueError(f"expected an (n, 3) point array, got shape {pts.shape}")
    if not np.all(np.isfinite(pts)):
        raise ValueError("point coordinates must be finite")
    return pts


def _rigid_from_covariance(H: np.ndarray):
    """Rotation maximising trace(R H) for a 3x3 or stacked (m, 3, 3) cross-covariance."""
    U, S, Vt = np.linalg.svd(H)
    d = np.sign(np.linalg.det(Vt.swapaxes(-1, -2) @ U.swapaxes(-1, -2)))
    d = np.where(d == 0, 1.0, d)
    D = np.zeros(H.shape)
    D[..., 0, 0] = 1.0
    D[..., 1, 1] = 1.0
    D[..., 2, 2] = d
    R = Vt.swapaxes(-1, -2) @ D @ U.swapaxes(-1, -2)
    return R, S


def estimate_rigid_transform(src, dst) -> Pose:
    """Least-squares rigid transform taking ``src`` onto ``dst``.

    Minimises ``sum ||R @ src_i + t - dst_i||^2`` by centroid subtraction and an
    SVD of the cross-covariance, with the determinant sign fixed so that ``R``
    is a proper rotation.

    Raises:
        DegenerateInput: fewer than 3 pairs, or the source points are
            coincident/collinear (second singular value below
            ``DEGENERACY_RATIO`` times the first).
    """
    src = as_points(src)
    dst = as_points(dst)
    if src.shape != dst.shape:
        raise ValueError(f"src and dst differ in shape: {src.shape} vs {dst.shape}")
    if len(src) < 3:
        raise DegenerateInput(f"need at least 3 correspondences, got {len(src)}")
    cs = src.mean(axis=0)
    cd = dst.mean(axis=0)
    H = (src - cs).T @ (dst - cd)
    R, S = _rigid_from_covariance(H)
    if not S[0] > 0 or S[1] < DEGENERACY_RATIO * S[0]:
        raise DegenerateInput("source points are coincident or collinear")
    return Pose.from_matrix(R, cd - R @ cs)


def estimate_rigid_batch(src: np.ndarray, dst: np.ndarray):
    """Vectorised fit over ``(m, k, 3)`` stacks of correspondences.

    Returns ``(R, t, ok)`` with ``R`` of shape ``(m, 3, 3)``, ``t`` of shape
    ``(m, 3)`` and ``ok`` flagging the non-degenerate samples.
    """
    cs = src.mean(axis=1, keepdims=True)
    cd = dst.mean(axis=1, keepdims=True)
    H = (src - cs).swapaxes(1, 2) @ (dst - cd)
    R, S = _rigid_from_covariance(H)
    ok = (S[:, 0] > 0) & (S[:, 1] >= DEGENERACY_RATIO * S[:, 0])
    t = cd[:, 0, :] - np.einsum("mij,mj->mi", R, cs[:, 0, :])
    return R, t, ok


def residuals(pose: Pose, src, dst) -> np.ndarray:
    """Per-pair 3D prediction errors ``||pose(src_i) - dst_i||``."""
    return np.linalg.norm(pose.apply(src) - np.asarray(dst, dtype=float), axis=1)


def rms_residual(pose: Pose, src, dst) -> float:
    r = residuals(pose, src, dst)
    return float(np.sqrt(np.mean(r * r))) if len(r) else 0.0
