"""Pose estimation: coarse consistency-based pose, RANSAC refinement, and the
end-to-end localizers (two-stage pipeline and descriptor-only baseline)."""
from __future__ import annotations

import enum
import time
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import DegenerateInput
from .feature_map import FeatureMap, ObservationFrame
from .geometry import Pose, estimate_rigid_batch, estimate_rigid_transform, rms_residual
from .index import DescriptorIndex, MapIndices, QueryTimer
from .matching import Correspondence, match_batch_descriptor, max_consistent_subset, spatial_match, to_arrays


class Outcome(str, enum.Enum):
    SUCCESS = "success"
    FAILURE_COARSE = "failure_coarse"
    FAILURE_FINE = "failure_fine"
    FAILURE_INSUFFICIENT = "failure_insufficient"


class LocalizationFailure(Exception):
    outcome: Outcome


class InsufficientFeatures(LocalizationFailure):
    outcome = Outcome.FAILURE_INSUFFICIENT


class CoarseFailure(LocalizationFailure):
    """No acceptable coarse pose after all frame features were matched."""

    outcome = Outcome.FAILURE_COARSE

    def __init__(self, consumed: int, clique_size: int):
        super().__init__(f"no coarse pose after {consumed} descriptor matches (largest clique {clique_size})")
        self.consumed = consumed
        self.clique_size = clique_size


class FineFailure(LocalizationFailure):
    outcome = Outcome.FAILURE_FINE

    def __init__(self, message: str, inliers: int = 0):
        super().__init__(message)
        self.inliers = inliers


@dataclass
class CoarseParams:
    batch: int = 8
    epsilon: float = 0.10
    min_clique: int = 4
    max_rms: float = 0.05

    def __post_init__(self):
        if self.batch < 1 or self.min_clique < 3 or not self.max_rms > 0 or not self.epsilon > 0:
            raise ValueError("coarse params need batch >= 1, min_clique >= 3, epsilon > 0, max_rms > 0")


@dataclass
class RansacParams:
    iterations: int = 200
    inlier_tol: float = 0.05
    min_inliers: int = 10
    sample_size: int = 3
    rng_seed: int = 0

    def __post_init__(self):
        if self.iterations < 1 or not self.inlier_tol > 0 or self.min_inliers < 3 or self.sample_size < 3:
            raise ValueError("ransac params need iterations >= 1, inlier_tol > 0, min_inliers >= 3, sample_size >= 3")


@dataclass
class SpatialParams:
    radius: float = 0.5
    kappa: float = 2.0
    floor: float = 0.1


@dataclass
class StageTimes:
    nn64: float = 0.0
    coarse: float = 0.0
    nn3d: float = 0.0
    ransac: float = 0.0
    total: float = 0.0


@dataclass
class Counts:
    n_features: int = 0
    m_queries: int = 0
    clique: int = 0
    spatial: int = 0
    correspondences: int = 0
    inliers: int = 0


@dataclass
class LocalizationReport:
    frame_index: int
    approach: str
    outcome: Outcome
    pose: Optional[Pose] = None
    timings: StageTimes = field(default_factory=StageTimes)
    counts: Counts = field(default_factory=Counts)

    @property
    def success(self) -> bool:
        return self.outcome is Outcome.SUCCESS


@dataclass
class CoarseEstimate:
    pose: Pose
    consumed: int
    subset: list[Correspondence]
    rms: float


def coarse_pose(frame: ObservationFrame, index: DescriptorIndex, fmap: FeatureMap,
                params: CoarseParams | None = None, nn_timer: QueryTimer | None = None,
                stage_timer: QueryTimer | None = None) -> CoarseEstimate:
    """Grow a 1-NN match pool batch by batch until its largest consistent
    subset yields an acceptable rigid fit.

    Raises:
        InsufficientFeatures: the frame has fewer than ``min_clique`` features.
        CoarseFailure: all features matched without an acceptable estimate.
    """
    params = params or CoarseParams()
    if len(frame) < params.min_clique:
        raise InsufficientFeatures(f"frame has {len(frame)} features, need {params.min_clique}")
    pool: list[Correspondence] = []
    best_clique = 0
    start = 0
    while start < len(frame):
        pool.extend(match_batch_descriptor(frame, index, start, params.batch, nn_timer))
        start = len(pool)
        t0 = time.perf_counter()
        try:
            subset = max_consistent_subset(pool, frame, fmap, params.epsilon)
            best_clique = max(best_clique, len(subset))
            if len(subset) >= params.min_clique:
                obs, ids, _ = to_arrays(subset)
                src, dst = frame.positions[obs], fmap.positions[ids]
                try:
                    pose = estimate_rigid_transform(src, dst)
                except DegenerateInput:
                    continue
                rms = rms_residual(pose, src, dst)
                if rms <= params.max_rms:
                    return CoarseEstimate(pose, start, subset, rms)
        finally:
            if stage_timer is not None:
                stage_timer.add(time.perf_counter() - t0, 1)
    raise CoarseFailure(start, best_clique)


@dataclass
class RansacEstimate:
    pose: Pose
    inliers: np.ndarray  # positions into the correspondence list


def _count_inliers(R, t, src, dst, tol):
    tol2 = tol * tol
    counts = np.empty(len(R), np.int64)
    step = max(1, 400_000 // max(1, len(src)))
    for s in range(0, len(R), step):
        pred = np.einsum("mij,nj->mni", R[s : s + step], src) + t[s : s + step, None, :]
        diff = pred - dst[None]
        counts[s : s + step] = (np.einsum("mni,mni->mn", diff, diff) <= tol2).sum(axis=1)
    return counts


def _inlier_mask(pose: Pose, src, dst, tol):
    diff = pose.apply(src) - dst
    return np.einsum("ni,ni->n", diff, diff) <= tol * tol


def ransac_pose(correspondences: Sequence[Correspondence], frame: ObservationFrame, fmap: FeatureMap,
                params: RansacParams | None = None, rng: np.random.Generator | None = None) -> RansacEstimate:
    """Fixed-iteration RANSAC over minimal samples, then one refit on the
    best model's inliers.

    Degenerate (collinear) samples are discarded. The refit replaces the
    sample model only if it keeps at least as many inliers.

    Raises:
        FineFailure: fewer correspondences than ``sample_size`` or fewer than
            ``min_inliers`` inliers for the best model.
    """
    obs, ids, _ = to_arrays(correspondences)
    return ransac_points(frame.positions[obs], fmap.positions[ids], params, rng)


def ransac_points(src: np.ndarray, dst: np.ndarray, params: RansacParams | None = None,
                  rng: np.random.Generator | None = None) -> RansacEstimate:
    """:func:`ransac_pose` on raw ``(n, 3)`` camera/map point arrays."""
    params = params or RansacParams()
    n = len(src)
    if n < params.sample_size:
        raise FineFailure(f"{n} correspondences, need {params.sample_size}")
    rng = rng if rng is not None else np.random.default_rng(params.rng_seed)

    samples = np.stack([rng.choice(n, params.sample_size, replace=False) for _ in range(params.iterations)])
    R, t, ok = estimate_rigid_batch(src[samples], dst[samples])
    if not ok.any():
        raise FineFailure("every sample was degenerate")
    R, t = R[ok], t[ok]
    counts = _count_inliers(R, t, src, dst, params.inlier_tol)
    best = int(np.argmax(counts))
    if counts[best] < params.min_inliers:
        raise FineFailure(f"best model has {counts[best]} inliers, need {params.min_inliers}", int(counts[best]))

    sample_pose = Pose.from_matrix(R[best], t[best])
    mask = _inlier_mask(sample_pose, src, dst, params.inlier_tol)
    pose = sample_pose
    try:
        refit = estimate_rigid_transform(src[mask], dst[mask])
        refit_mask = _inlier_mask(refit, src, dst, params.inlier_tol)
        if refit_mask.sum() >= mask.sum():
            pose, mask = refit, refit_mask
    except DegenerateInput:
        pass
    return RansacEstimate(pose, np.flatnonzero(mask))


def frame_rng(seed: int, frame_index: int) -> np.random.Generator:
    return np.random.default_rng((seed, frame_index))


PROPOSED = "proposed"


def localize(frame: ObservationFrame, fmap: FeatureMap, indices: MapIndices,
             coarse_params: CoarseParams | None = None, ransac_params: RansacParams | None = None,
             spatial_params: SpatialParams | None = None) -> LocalizationReport:
    """Two-stage localization of one frame; never raises on valid input."""
    t_start = time.perf_counter()
    coarse_params = coarse_params or CoarseParams()
    ransac_params = ransac_params or RansacParams()
    spatial_params = spatial_params or SpatialParams()
    report = LocalizationReport(frame.frame_index, PROPOSED, Outcome.FAILURE_INSUFFICIENT)
    report.counts.n_features = len(frame)
    nn = QueryTimer()
    stage = QueryTimer()
    try:
        try:
            coarse = coarse_pose(frame, indices.descriptor, fmap, coarse_params, nn, stage)
        finally:
            report.timings.nn64 = nn.seconds
            report.timings.coarse = stage.seconds
            report.counts.m_queries = nn.queries
        report.counts.clique = len(coarse.subset)

        t0 = time.perf_counter()
        matches = spatial_match(frame, coarse.pose, indices.spatial, fmap, spatial_params.radius,
                                spatial_params.kappa, spatial_params.floor)
        report.timings.nn3d = time.perf_counter() - t0
        report.counts.spatial = report.counts.correspondences = len(matches)

        t0 = time.perf_counter()
        try:
            fine = ransac_pose(matches, frame, fmap, ransac_params, frame_rng(ransac_params.rng_seed, frame.frame_index))
        finally:
            report.timings.ransac = time.perf_counter() - t0
        report.pose = fine.pose
        report.counts.inliers = len(fine.inliers)
        report.outcome = Outcome.SUCCESS
    except CoarseFailure as exc:
        report.outcome = exc.outcome
        report.counts.clique = exc.clique_size
    except FineFailure as exc:
        report.outcome = exc.outcome
        report.counts.inliers = exc.inliers
    except InsufficientFeatures as exc:
        report.outcome = exc.outcome
    report.timings.total = time.perf_counter() - t_start
    return report


def baseline_name(k: int) -> str:
    return f"baseline{k}"


def localize_baseline(frame: ObservationFrame, fmap: FeatureMap, index: DescriptorIndex, k: int = 1,
                      ransac_params: RansacParams | None = None) -> LocalizationReport:
    """Descriptor-only localization: every feature to its k nearest map
    descriptors, all k candidates fed to RANSAC."""
    if k < 1:
        raise ValueError("k must be >= 1")
    t_start = time.perf_counter()
    ransac_params = ransac_params or RansacParams()
    report = LocalizationReport(frame.frame_index, baseline_name(k), Outcome.FAILURE_FINE)
    report.counts.n_features = len(frame)
    obs = ids = np.zeros(0, np.int64)
    if len(frame):
        nn = QueryTimer()
        knn_ids, _ = index.knn_arrays(frame.descriptors, k, nn)
        report.timings.nn64 = nn.seconds
        report.counts.m_queries = nn.queries
        obs = np.repeat(np.arange(len(frame)), [len(i) for i in knn_ids])
        ids = np.concatenate(knn_ids)
    report.counts.correspondences = len(obs)
    t0 = time.perf_counter()
    try:
        fine = ransac_points(frame.positions[obs], fmap.positions[ids], ransac_params,
                             frame_rng(ransac_params.rng_seed, frame.frame_index))
        report.pose = fine.pose
        report.counts.inliers = len(fine.inliers)
        report.outcome = Outcome.SUCCESS
    except FineFailure as exc:
        report.counts.inliers = exc.inliers
    report.timings.ransac = time.perf_counter() - t0
    report.timings.total = time.perf_counter() - t_start
    return report
