"""End-to-end benchmark: simulate or load data, localize every evaluation
frame with the two-stage pipeline and the descriptor-only baselines, and
emit CSV tables plus SVG figures."""
from __future__ import annotations

import csv
import io
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from ..errors import FormatError
from ..estimation import PROPOSED, LocalizationReport, baseline_name, localize, localize_baseline
from ..feature_map import FeatureMap, ObservationFrame, build_map, load_map, read_frames
from ..index import MapIndices
from ..simworld import (
    TrajectorySpec,
    World,
    corridor_evaluation_waypoints,
    corridor_mapping_waypoints,
    generate_world,
    simulate,
)
from . import svg
from .config import ExperimentConfig
from .metrics import CATEGORIES, TASKS, EvalConfig, MetricsReport, evaluate

log = logging.getLogger(__name__)

ROBUSTNESS_HEADER = ["approach", "total", *CATEGORIES, "success_rate"]
RMSE_HEADER = ["approach", "rmse_x_m", "rmse_y_m", "rmse_z_m", "rmse_alpha_deg", "rmse_beta_deg", "rmse_gamma_deg"]


@dataclass
class Scenario:
    fmap: Optional[FeatureMap]
    frames: list[ObservationFrame]
    world: Optional[World] = None
    build_seconds: float = 0.0


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    approaches: list[str]
    reports: dict[str, list[LocalizationReport]] = field(default_factory=dict)
    metrics: dict[str, MetricsReport] = field(default_factory=dict)
    files: dict[str, Path] = field(default_factory=dict)
    scenario: Optional[Scenario] = None


def approach_names(config: ExperimentConfig) -> list[str]:
    return [baseline_name(k) for k in config.baselines] + [PROPOSED]


def simulate_mapping(world: World, config: ExperimentConfig):
    poses = TrajectorySpec(corridor_mapping_waypoints(config.world_spec()), config.mapping_frames).poses()
    return simulate(world, config.sensor_spec(), poses, config.sim_seed)


def simulate_evaluation(world: World, config: ExperimentConfig):
    poses = TrajectorySpec(corridor_evaluation_waypoints(config.world_spec()), config.eval_frames).poses()
    return simulate(world, config.sensor_spec(), poses, config.sim_seed + 1)


def prepare_scenario(config: ExperimentConfig) -> Scenario:
    """Load or generate the map and the evaluation frames named by ``config``.

    Nothing is generated when there are no evaluation frames.

    Raises:
        OSError / FormatError: unreadable or malformed input files.
    """
    frames: list[ObservationFrame] = []
    world = None
    if config.frames_file:
        frames = read_frames(config.frames_file)
        if any(f.ground_truth is None for f in frames):
            raise FormatError(f"{config.frames_file}: evaluation frames need ground-truth poses")
    elif config.eval_frames:
        world = generate_world(config.world_spec())
        frames, _ = simulate_evaluation(world, config)
    if not frames:
        return Scenario(None, [], world)

    t0 = time.perf_counter()
    if config.map_file:
        fmap = load_map(config.map_file)
    else:
        world = world or generate_world(config.world_spec())
        mapping, _ = simulate_mapping(world, config)
        fmap = build_map(mapping, config.build_params())
    return Scenario(fmap, frames, world, time.perf_counter() - t0)


def make_localizer(approach: str, fmap: FeatureMap, indices: MapIndices,
                   config: ExperimentConfig) -> Callable[[ObservationFrame], LocalizationReport]:
    if approach == PROPOSED:
        cp, rp, sp = config.coarse_params(), config.ransac_params(), config.spatial_params()
        return lambda fr: localize(fr, fmap, indices, cp, rp, sp)
    for k in config.baselines:
        if approach == baseline_name(k):
            rp = config.ransac_params()
            return lambda fr, k=k: localize_baseline(fr, fmap, indices.descriptor, k, rp)
    raise ValueError(f"unknown approach {approach!r}")


def localize_all(frames: Sequence[ObservationFrame], localizer, jobs: int = 1) -> list[LocalizationReport]:
    """Run ``localizer`` over frames on ``jobs`` threads; output is sorted by frame index."""
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            reports = list(pool.map(localizer, frames))
    else:
        reports = [localizer(f) for f in frames]
    return sorted(reports, key=lambda r: r.frame_index)


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def robustness_rows(metrics: dict[str, MetricsReport]):
    return [[name, m.total, *(m.counts[c] for c in CATEGORIES), repr(m.success_rate)] for name, m in metrics.items()]


def rmse_rows(metrics: dict[str, MetricsReport]):
    return [[name, *(repr(float(v)) for v in m.rmse_xyz), *(repr(float(v)) for v in m.rmse_angles_deg)]
            for name, m in metrics.items()]


def runtime_rows(metrics: dict[str, MetricsReport], approaches: Sequence[str]):
    return [[task, *(repr(metrics[a].mean_times[task]) for a in approaches)] for task in TASKS]


def write_outputs(result: ExperimentResult, out_dir: str | Path) -> dict[str, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    m, names = result.metrics, result.approaches
    texts = {
        "robustness.csv": _csv_text(ROBUSTNESS_HEADER, robustness_rows(m)),
        "rmse.csv": _csv_text(RMSE_HEADER, rmse_rows(m)),
        "runtimes.csv": _csv_text(["task", *names], runtime_rows(m, names) if m else []),
        "robustness.svg": svg.robustness_svg({a: x.success_rate for a, x in m.items()}),
        "rmse.svg": svg.rmse_svg({a: list(x.rmse_xyz) for a, x in m.items()},
                                 {a: list(x.rmse_angles_deg) for a, x in m.items()}),
    }
    frames = result.scenario.frames if result.scenario else []
    truth = np.array([f.ground_truth.translation[:2] for f in frames]).reshape(-1, 2)
    est = {}
    for a in ([PROPOSED] if PROPOSED in result.reports else []) + [a for a in names if a != PROPOSED]:
        reps = [r for r in result.reports.get(a, []) if r.pose is not None]
        est[a] = ([r.frame_index for r in reps], np.array([r.pose.translation[:2] for r in reps]).reshape(-1, 2))
    texts["trajectory.svg"] = svg.trajectory_svg(truth, est, [f.frame_index for f in frames])
    files = {}
    for name, text in texts.items():
        path = out / name
        path.write_text(text, encoding="utf-8")
        files[name] = path
    return files


def run_experiment(config: ExperimentConfig, output_dir: str | Path | None = None,
                   scenario: Scenario | None = None) -> ExperimentResult:
    """Localize the evaluation frames with every approach and write the result bundle.

    ``scenario`` may be passed to reuse already prepared data. With no
    evaluation frames the CSVs contain headers only.
    """
    config.validate()
    scenario = scenario if scenario is not None else prepare_scenario(config)
    result = ExperimentResult(config, approach_names(config), scenario=scenario)
    if scenario.frames:
        truth = [f.ground_truth for f in scenario.frames]
        t0 = time.perf_counter()
        indices = MapIndices.build(scenario.fmap, config.descriptor_index, config.forest_params())
        log.info("indexed %d map features in %.1f s", len(scenario.fmap), time.perf_counter() - t0)
        evalc = EvalConfig(config.failure_threshold)
        for name in result.approaches:
            t0 = time.perf_counter()
            reps = localize_all(scenario.frames, make_localizer(name, scenario.fmap, indices, config), config.jobs)
            result.reports[name] = reps
            result.metrics[name] = evaluate(reps, truth, evalc, name)
            log.info("%s: success %.3f in %.1f s", name, result.metrics[name].success_rate, time.perf_counter() - t0)
    result.files = write_outputs(result, output_dir if output_dir is not None else config.output_dir)
    return result
