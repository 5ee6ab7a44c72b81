"""Robustness, accuracy and runtime metrics over localization reports."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ..errors import LengthMismatch
from ..estimation import LocalizationReport, Outcome
from ..geometry import Pose

TASKS = ("nn64", "coarse", "nn3d", "ransac", "total")
CATEGORIES = tuple(o.value for o in Outcome)


@dataclass
class EvalConfig:
    """``failure_threshold`` applies per map axis (X corridor, Y lateral, Z up)."""

    failure_threshold: float = 0.5

    def __post_init__(self):
        if not self.failure_threshold > 0:
            raise ValueError("failure_threshold must be > 0")


@dataclass
class FrameEval:
    frame_index: int
    category: str
    trans_error: np.ndarray | None = None  # estimate - truth, map frame
    axis_angles: np.ndarray | None = None  # radians between U, V, W axes


@dataclass
class MetricsReport:
    approach: str
    total: int
    counts: dict = field(default_factory=dict)
    rmse_xyz: np.ndarray = field(default_factory=lambda: np.full(3, np.nan))
    rmse_angles_deg: np.ndarray = field(default_factory=lambda: np.full(3, np.nan))
    mean_times: dict = field(default_factory=dict)
    wrong_pose: int = 0
    frames: list = field(default_factory=list)

    @property
    def success_rate(self) -> float:
        return self.counts.get("success", 0) / self.total if self.total else 0.0


def axis_angles(estimate: Pose, truth: Pose) -> np.ndarray:
    """Angles between corresponding columns (U, V, W axes) of the two rotations.

    Equal to ``arccos(clip(u . u'))`` but evaluated as ``atan2(|u x u'|, u . u')``,
    which stays accurate for tiny angles.
    """
    a, b = estimate.R, truth.R
    dots = np.einsum("ij,ij->j", a, b)
    cross = np.linalg.norm(np.cross(a.T, b.T), axis=1)
    return np.arctan2(cross, dots)


def classify(report: LocalizationReport, truth: Pose, config: EvalConfig) -> FrameEval:
    """Place one frame in exactly one outcome category.

    A pipeline success whose pose misses the threshold on any axis counts as
    ``failure_fine``: the final estimate exists but is wrong.
    """
    if report.outcome is not Outcome.SUCCESS or report.pose is None:
        cat = report.outcome.value if report.outcome is not Outcome.SUCCESS else Outcome.FAILURE_FINE.value
        return FrameEval(report.frame_index, cat)
    err = report.pose.translation - truth.translation
    ang = axis_angles(report.pose, truth)
    if np.any(np.abs(err) > config.failure_threshold):
        return FrameEval(report.frame_index, Outcome.FAILURE_FINE.value, err, ang)
    return FrameEval(report.frame_index, Outcome.SUCCESS.value, err, ang)


def _rms(x: np.ndarray) -> np.ndarray:
    return np.sqrt(np.mean(x * x, axis=0))


def evaluate(reports: Sequence[LocalizationReport], ground_truth: Sequence[Pose],
             config: EvalConfig | None = None, approach: str | None = None) -> MetricsReport:
    """Aggregate per-frame reports against aligned ground-truth poses.

    RMSE values cover successful frames only and are NaN when there are none.

    Raises:
        LengthMismatch: ``reports`` and ``ground_truth`` differ in length.
    """
    config = config or EvalConfig()
    if len(reports) != len(ground_truth):
        raise LengthMismatch(f"{len(reports)} reports vs {len(ground_truth)} ground-truth poses")
    name = approach or (reports[0].approach if reports else "")
    out = MetricsReport(name, len(reports), {c: 0 for c in CATEGORIES})
    errs, angs, times = [], [], {t: [] for t in TASKS}
    for rep, gt in zip(reports, ground_truth):
        fe = classify(rep, gt, config)
        out.frames.append(fe)
        out.counts[fe.category] += 1
        if fe.category == Outcome.SUCCESS.value:
            errs.append(fe.trans_error)
            angs.append(fe.axis_angles)
        elif rep.outcome is Outcome.SUCCESS:
            out.wrong_pose += 1
        for t in TASKS:
            times[t].append(getattr(rep.timings, t))
    if errs:
        out.rmse_xyz = _rms(np.array(errs))
        out.rmse_angles_deg = np.degrees(_rms(np.array(angs)))
    out.mean_times = {t: float(np.mean(v)) if v else 0.0 for t, v in times.items()}
    return out
