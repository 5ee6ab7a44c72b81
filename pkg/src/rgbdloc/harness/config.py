"""Flat ``key = value`` experiment configuration.

Lines are ``key = value``; ``#`` starts a comment; blank lines are ignored.
Tuple values are whitespace separated, optional paths may be left empty.
Every key is listed in :data:`KEY_DOCS` with its default. Later sources
override earlier ones (defaults, then file, then ``--set key=value``).
"""
from __future__ import annotations

import dataclasses
import typing
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Iterable, Mapping, Optional

from ..errors import ConfigError
from ..estimation import CoarseParams, RansacParams, SpatialParams
from ..feature_map import MapBuildParams
from ..index import EXACT, KDFOREST, KDForestParams
from ..simworld import SensorSpec, WorldSpec


@dataclass
class ExperimentConfig:
    # world
    world_seed: int = 0
    volume_min: tuple = (0.0, 0.0, 0.0)
    volume_max: tuple = (30.0, 4.0, 3.0)
    landmark_count: int = 55_000
    prototype_count: int = 20
    repeat_fraction: float = 0.3
    prototype_sigma: float = 0.005
    descriptor_dim: int = 64
    descriptor_major_dims: int = 3
    descriptor_minor_scale: float = 0.003
    # sensor
    fov_h: float = 57.0
    fov_v: float = 43.0
    range_min: float = 0.5
    range_max: float = 5.0
    depth_noise_a: float = 0.002
    descriptor_noise: float = 0.01
    detection_prob: float = 0.5
    max_features_per_frame: int = 500
    # trajectories
    sim_seed: int = 1
    mapping_frames: int = 600
    eval_frames: int = 200
    # map building
    assoc_radius: float = 0.10
    assoc_threshold: float = 0.5
    default_match_std: float = 0.25
    # localization
    descriptor_index: str = KDFOREST
    kdforest_trees: int = 4
    kdforest_checks: int = 64
    kdforest_leaf_size: int = 8
    kdforest_seed: int = 0
    coarse_batch: int = 8
    consistency_epsilon: float = 0.10
    min_clique: int = 4
    coarse_max_rms: float = 0.05
    spatial_radius: float = 0.5
    gate_kappa: float = 2.0
    gate_floor: float = 0.1
    ransac_iterations: int = 200
    inlier_tol: float = 0.05
    min_inliers: int = 10
    ransac_seed: int = 0
    # evaluation and output
    baselines: tuple = (1, 10, 20)
    failure_threshold: float = 0.5
    map_file: Optional[str] = None
    frames_file: Optional[str] = None
    output_dir: str = "results"
    jobs: int = 1

    def validate(self) -> None:
        if self.descriptor_index not in (EXACT, KDFOREST):
            raise ConfigError(f"descriptor_index must be {EXACT!r} or {KDFOREST!r}")
        if self.mapping_frames < 0 or self.eval_frames < 0:
            raise ConfigError("frame counts must be >= 0")
        if self.jobs < 1:
            raise ConfigError("jobs must be >= 1")
        if not self.failure_threshold > 0:
            raise ConfigError("failure_threshold must be > 0")
        if any(k < 1 for k in self.baselines):
            raise ConfigError("baseline k values must be >= 1")
        for name in ("volume_min", "volume_max"):
            if len(getattr(self, name)) != 3:
                raise ConfigError(f"{name} needs three values")
        try:
            self.world_spec().validate()
            self.sensor_spec().validate()
            self.coarse_params()
            self.ransac_params()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def world_spec(self) -> WorldSpec:
        return WorldSpec(tuple(self.volume_min), tuple(self.volume_max), self.landmark_count, self.prototype_count,
                         self.repeat_fraction, self.prototype_sigma, self.descriptor_dim,
                         self.descriptor_major_dims, self.descriptor_minor_scale, self.world_seed)

    def sensor_spec(self) -> SensorSpec:
        return SensorSpec(self.fov_h, self.fov_v, self.range_min, self.range_max, self.depth_noise_a,
                          self.descriptor_noise, self.detection_prob, self.max_features_per_frame)

    def build_params(self) -> MapBuildParams:
        return MapBuildParams(self.assoc_radius, self.assoc_threshold, self.default_match_std)

    def forest_params(self) -> KDForestParams:
        return KDForestParams(trees=self.kdforest_trees, checks=self.kdforest_checks,
                              leaf_size=self.kdforest_leaf_size, seed=self.kdforest_seed)

    def coarse_params(self) -> CoarseParams:
        return CoarseParams(self.coarse_batch, self.consistency_epsilon, self.min_clique, self.coarse_max_rms)

    def ransac_params(self) -> RansacParams:
        return RansacParams(self.ransac_iterations, self.inlier_tol, self.min_inliers, rng_seed=self.ransac_seed)

    def spatial_params(self) -> SpatialParams:
        return SpatialParams(self.spatial_radius, self.gate_kappa, self.gate_floor)


KEY_DOCS = {
    "world_seed": "seed of the landmark generator",
    "volume_min": "corridor box lower corner, metres (x y z)",
    "volume_max": "corridor box upper corner, metres (x y z)",
    "landmark_count": "number of world landmarks",
    "prototype_count": "size of the repeated-descriptor prototype pool",
    "repeat_fraction": "fraction of landmarks cloned from a prototype",
    "prototype_sigma": "per-component perturbation of prototype clones",
    "descriptor_dim": "descriptor length",
    "descriptor_major_dims": "descriptor components with unit variance before normalisation",
    "descriptor_minor_scale": "standard deviation of the remaining components",
    "fov_h": "horizontal field of view, degrees",
    "fov_v": "vertical field of view, degrees",
    "range_min": "nearest observable depth, metres",
    "range_max": "farthest observable depth, metres",
    "depth_noise_a": "depth noise coefficient a in sigma_z = a z^2",
    "descriptor_noise": "per-component descriptor noise before renormalisation",
    "detection_prob": "probability that a visible landmark is detected",
    "max_features_per_frame": "strongest features kept per frame",
    "sim_seed": "seed of the frame renderer (mapping uses it, evaluation uses it + 1)",
    "mapping_frames": "frames rendered along the mapping sweep",
    "eval_frames": "frames rendered along the evaluation path",
    "assoc_radius": "map building: association radius, metres",
    "assoc_threshold": "map building: maximum descriptor distance for association",
    "default_match_std": "match_std for features seen once when no statistics exist",
    "descriptor_index": "descriptor search: exact or kdforest",
    "kdforest_trees": "randomized kd-trees in the forest",
    "kdforest_checks": "leaf points examined per query",
    "kdforest_leaf_size": "maximum points per kd-tree leaf",
    "kdforest_seed": "seed of the forest construction",
    "coarse_batch": "descriptor matches added per coarse iteration",
    "consistency_epsilon": "pairwise distance tolerance of the consistency graph, metres",
    "min_clique": "smallest consistent subset accepted for a coarse pose",
    "coarse_max_rms": "maximum residual RMS of an accepted coarse pose, metres",
    "spatial_radius": "search radius around predicted positions, metres",
    "gate_kappa": "descriptor gate multiplier on match_std",
    "gate_floor": "lower bound of the descriptor gate",
    "ransac_iterations": "RANSAC hypotheses per frame",
    "inlier_tol": "RANSAC inlier distance, metres",
    "min_inliers": "inliers required for a fine pose",
    "ransac_seed": "RANSAC seed (combined with the frame index)",
    "baselines": "k values of the descriptor-only baselines",
    "failure_threshold": "per-axis translation error counted as failure, metres",
    "map_file": "existing FMAP file to localize against (empty: build one)",
    "frames_file": "existing FRAMES file with ground truth (empty: simulate)",
    "output_dir": "directory receiving CSV and SVG results",
    "jobs": "worker threads for per-frame localization",
}


def _field_types():
    hints = typing.get_type_hints(ExperimentConfig)
    return {f.name: hints[f.name] for f in fields(ExperimentConfig)}


def _convert(key: str, raw: str, default):
    raw = raw.strip()
    try:
        if isinstance(default, tuple):
            cast = type(default[0]) if default else float
            return tuple(cast(v) for v in raw.replace(",", " ").split())
        if default is None:
            return raw or None
        if isinstance(default, bool):
            if raw.lower() not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(raw)
            return raw.lower() in ("true", "1", "yes")
        if isinstance(default, int):
            return int(raw.replace("_", ""))
        if isinstance(default, float):
            return float(raw)
        return raw
    except ValueError:
        raise ConfigError(f"bad value for {key}: {raw!r}") from None


def parse_pairs(lines: Iterable[str], source: str = "<config>") -> dict[str, str]:
    out = {}
    known = _field_types()
    for n, line in enumerate(lines, 1):
        text = line.split("#", 1)[0].strip()
        if not text:
            continue
        if "=" not in text:
            raise ConfigError(f"{source}:{n}: expected 'key = value'")
        key, value = (s.strip() for s in text.split("=", 1))
        if key not in known:
            raise ConfigError(f"{source}:{n}: unknown key {key!r}")
        out[key] = value
    return out


def apply_overrides(config: ExperimentConfig, pairs: Mapping[str, str]) -> ExperimentConfig:
    defaults = ExperimentConfig()
    changes = {}
    for key, raw in pairs.items():
        if key not in KEY_DOCS:
            raise ConfigError(f"unknown key {key!r}")
        changes[key] = _convert(key, raw, getattr(defaults, key))
    cfg = dataclasses.replace(config, **changes)
    cfg.validate()
    return cfg


def parse_set_args(items: Iterable[str]) -> dict[str, str]:
    """``["key=value", ...]`` from repeated ``--set`` flags."""
    out = {}
    for item in items:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        k, v = item.split("=", 1)
        out[k.strip()] = v
    return out


def load_config(path: str | Path | None = None, overrides: Mapping[str, str] | None = None) -> ExperimentConfig:
    """Defaults, then the file at ``path`` (if any), then ``overrides``.

    Raises:
        ConfigError: unreadable file, unknown key, malformed line or invalid value.
    """
    pairs: dict[str, str] = {}
    if path is not None:
        try:
            with open(path, encoding="utf-8") as fh:
                text = fh.read()
        except (OSError, UnicodeDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        pairs.update(parse_pairs(text.splitlines(), str(path)))
    pairs.update(overrides or {})
    return apply_overrides(ExperimentConfig(), pairs)


def _format(value) -> str:
    if value is None:
        return ""
    if isinstance(value, tuple):
        return " ".join(str(v) for v in value)
    return str(value)


def render_config(config: ExperimentConfig) -> str:
    """Config file text with one documented line per key."""
    lines = []
    for f in fields(config):
        lines.append(f"# {KEY_DOCS[f.name]}")
        lines.append(f"{f.name} = {_format(getattr(config, f.name))}")
    return "\n".join(lines) + "\n"
