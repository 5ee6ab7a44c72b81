"""End-to-end acceptance checks, one test per criterion.

Each test prints a measured-value line (visible with ``-s``); the terminal
summary lists PASS/FAIL per criterion.
"""
import csv
import time

import numpy as np
import pytest

from oracles import consistency_masks, exhaustive_max_cliques, planted_instance, random_rotation
from rgbdloc.estimation import Outcome, RansacParams, ransac_points
from rgbdloc.feature_map import FeatureMap, load_map, save_map
from rgbdloc.geometry import estimate_rigid_transform, pose_error
from rgbdloc.harness.config import ExperimentConfig, load_config
from rgbdloc.harness.experiment import run_experiment
from rgbdloc.index import EXACT, DescriptorIndex, SpatialIndex
from rgbdloc.matching import max_consistent_subset
from test_index import recall_test_set


def report(number, ok, detail):
    print(f"\ncriterion {number} {'PASS' if ok else 'FAIL'}: {detail}")


@pytest.mark.criterion(1, "rigid transform recovery on 1000 instances")
def test_transform_recovery():
    rng = np.random.default_rng(1)
    cases = []
    while len(cases) < 1000:
        n = int(rng.integers(3, 50))
        src = rng.uniform(-5, 5, (n, 3))
        s = np.linalg.svd(src - src.mean(axis=0), compute_uv=False)
        if s[1] < 1e-3 * s[0]:
            continue
        truth = random_rotation(rng)
        cases.append((src, truth.apply(src), truth))
    t0 = time.perf_counter()
    worst_ang = worst_dt = 0.0
    for src, dst, truth in cases:
        ang, dt = pose_error(estimate_rigid_transform(src, dst), truth)
        worst_ang, worst_dt = max(worst_ang, ang), max(worst_dt, dt)
    elapsed = time.perf_counter() - t0
    ok = worst_ang < 1e-9 and worst_dt < 1e-9 and elapsed < 1.0
    report(1, ok, f"max rot {worst_ang:.2e} rad, max trans {worst_dt:.2e} m, {elapsed:.3f} s")
    assert worst_ang < 1e-9 and worst_dt < 1e-9
    assert elapsed < 1.0


@pytest.mark.criterion(2, "greedy consistent subset vs exhaustive maximum clique")
def test_clique_oracle_equivalence():
    rng = np.random.default_rng(77)
    general = []
    for _ in range(500):
        m = int(rng.integers(4, 9))
        general.append(planted_instance(rng, m, int(rng.integers(0, 12 - m + 1)), extent=1.0))
    isolated = []
    for _ in range(200):
        m = int(rng.integers(4, 9))
        isolated.append(planted_instance(rng, m, int(rng.integers(0, 12 - m + 1)), isolate=True))

    t0 = time.perf_counter()
    equal = 0
    for frame, fmap, matches, _ in general:
        got = frozenset(c.obs_index for c in max_consistent_subset(matches, frame, fmap, 0.1))
        equal += got in exhaustive_max_cliques(consistency_masks(frame.positions, fmap.positions, 0.1))
    planted_ok = sum({c.obs_index for c in max_consistent_subset(mt, fr, fm, 0.1)} == planted
                     for fr, fm, mt, planted in isolated)
    elapsed = time.perf_counter() - t0
    ok = equal >= 475 and planted_ok == len(isolated) and elapsed < 10
    report(2, ok, f"{equal}/500 equal to a maximum clique, planted {planted_ok}/{len(isolated)}, {elapsed:.2f} s")
    assert equal >= 475
    assert planted_ok == len(isolated)
    assert elapsed < 10


@pytest.mark.criterion(3, "RANSAC with 50% outliers")
def test_ransac_robustness():
    good = 0
    for trial in range(100):
        rng = np.random.default_rng(trial)
        truth = random_rotation(rng)
        src = rng.uniform(-2, 2, (200, 3))
        dst = truth.apply(src)
        dst[:100] += rng.normal(0, 0.01, (100, 3))
        dst[100:] = rng.uniform(dst.min(axis=0) - 1, dst.max(axis=0) + 1, (100, 3))
        est = ransac_points(src, dst, RansacParams(iterations=200, rng_seed=trial))
        ang, dt = pose_error(est.pose, truth)
        good += dt < 0.02 and np.degrees(ang) < 0.5
    report(3, good >= 95, f"{good}/100 trials within 0.02 m and 0.5 deg")
    assert good >= 95


@pytest.mark.criterion(4, "spatial radius exactness and descriptor recall")
def test_index_correctness():
    rng = np.random.default_rng(4)
    pos = rng.uniform(0, 10, (10_000, 3))
    fmap = FeatureMap(pos, np.ones((10_000, 1)), np.zeros(10_000), np.ones(10_000, int))
    spatial = SpatialIndex(fmap)
    centres = rng.uniform(0, 10, (100, 3))
    radii = rng.uniform(0.1, 1.0, 100)
    exact = 0
    for c, r in zip(centres, radii):
        got = {i for i, _ in spatial.radius(c, r)}
        exact += got == set(np.flatnonzero(np.linalg.norm(pos - c, axis=1) <= r).tolist())

    dmap, queries = recall_test_set()
    approx, _ = DescriptorIndex(dmap).knn_arrays(queries, 1)
    truth, _ = DescriptorIndex(dmap, EXACT).knn_arrays(queries, 1)
    recall = float(np.mean([a[0] == b[0] for a, b in zip(approx, truth)]))
    ok = exact == 100 and recall >= 0.9
    report(4, ok, f"radius {exact}/100 exact, recall@1 {recall:.2f}")
    assert exact == 100
    assert recall >= 0.9


@pytest.fixture(scope="module")
def canonical(tmp_path_factory):
    out = tmp_path_factory.mktemp("canonical")
    t0 = time.perf_counter()
    result = run_experiment(ExperimentConfig(), out)
    return result, time.perf_counter() - t0


@pytest.mark.slow
@pytest.mark.criterion(5, "robustness gap on the canonical scenario")
def test_robustness_gap(canonical):
    result, elapsed = canonical
    fmap = result.scenario.fmap
    prop = result.metrics["proposed"].success_rate
    base = result.metrics["baseline1"].success_rate
    n_eval = result.metrics["proposed"].total
    ok = prop >= base + 0.20 and prop >= 0.6 and elapsed < 600 and len(fmap) >= 50_000 and n_eval == 200
    report(5, ok, f"proposed {prop:.3f} vs baseline1 {base:.3f}, map {len(fmap)}, {elapsed:.0f} s")
    assert len(fmap) >= 50_000 and n_eval == 200
    assert prop >= base + 0.20
    assert prop >= 0.6
    assert elapsed < 600


@pytest.mark.slow
@pytest.mark.criterion(6, "accuracy of successful estimates")
def test_accuracy(canonical):
    result, _ = canonical
    worst_t = worst_r = 0.0
    for m in result.metrics.values():
        if m.counts[Outcome.SUCCESS.value] == 0:
            continue
        worst_t = max(worst_t, float(np.max(m.rmse_xyz)))
        worst_r = max(worst_r, float(np.max(m.rmse_angles_deg)))
    prop = result.metrics["proposed"]
    ok = worst_t <= 0.10 and worst_r <= 3.0 and prop.counts[Outcome.SUCCESS.value] > 0
    report(6, ok, f"max translational RMSE {worst_t:.4f} m, max rotational RMSE {worst_r:.3f} deg")
    assert prop.counts[Outcome.SUCCESS.value] > 0
    assert worst_t <= 0.10
    assert worst_r <= 3.0


@pytest.mark.slow
@pytest.mark.criterion(7, "matching cost ordering")
def test_cost_ordering(canonical):
    result, _ = canonical
    prop = result.reports["proposed"]
    base = result.reports["baseline1"]
    n_mean = np.mean([r.counts.n_features for r in prop])
    m_mean = np.mean([r.counts.m_queries for r in prop])
    t64 = sum(r.timings.nn64 for r in prop) / sum(r.counts.m_queries for r in prop)
    spatial = [r for r in prop if r.timings.nn3d > 0]
    t3 = sum(r.timings.nn3d for r in spatial) / sum(r.counts.n_features for r in spatial)
    prop_matching = sum(r.timings.nn64 + r.timings.nn3d for r in prop)
    base_matching = sum(r.timings.nn64 for r in base)
    ok = m_mean <= n_mean / 5 and t3 < t64 and prop_matching < base_matching
    report(7, ok, f"M {m_mean:.1f} vs N {n_mean:.1f}, t3D {t3:.2e} s vs t64D {t64:.2e} s, "
                  f"matching {prop_matching:.2f} s vs baseline1 {base_matching:.2f} s")
    assert m_mean <= n_mean / 5
    assert t3 < t64
    assert prop_matching < base_matching


@pytest.mark.slow
@pytest.mark.criterion(8, "coarse failures report no pose and stop early")
def test_failure_semantics(canonical):
    result, _ = canonical
    reps = result.reports["proposed"]
    coarse = [r for r in reps if r.outcome is Outcome.FAILURE_COARSE]
    success = [r for r in reps if r.outcome is Outcome.SUCCESS]
    with_pose = sum(r.pose is not None for r in coarse)
    t_coarse = np.mean([r.timings.total for r in coarse]) if coarse else float("nan")
    t_success = np.mean([r.timings.total for r in success])
    ok = with_pose == 0 and bool(coarse) and t_coarse < t_success
    report(8, ok, f"{len(coarse)} coarse failures, {with_pose} with pose, "
                  f"mean total {t_coarse * 1e3:.1f} ms vs success {t_success * 1e3:.1f} ms")
    assert with_pose == 0
    assert coarse, "scenario produced no coarse failures to compare"
    assert t_coarse < t_success


@pytest.mark.criterion(9, "map persistence and run determinism")
def test_persistence_and_determinism(tmp_path):
    rng = np.random.default_rng(9)
    n = 10_000
    fmap = FeatureMap(rng.uniform(-50, 50, (n, 3)), rng.standard_normal((n, 64)), rng.uniform(0, 1, n),
                      rng.integers(1, 1000, n))
    save_map(fmap, tmp_path / "m.fmap")
    back = load_map(tmp_path / "m.fmap")
    exact = all(np.array_equal(getattr(fmap, f), getattr(back, f))
                for f in ("positions", "descriptors", "match_std", "n_obs"))

    cfg = load_config(overrides=dict(landmark_count="6000", volume_max="10 4 3", mapping_frames="120",
                                     eval_frames="16"))
    outs = []
    for i in range(2):
        d = tmp_path / f"run{i}"
        run_experiment(cfg, d)
        outs.append({name: (d / name).read_bytes() for name in ("robustness.csv", "rmse.csv")})
    identical = outs[0] == outs[1]
    with open(tmp_path / "run0" / "runtimes.csv") as fh:
        tasks = [row[0] for row in csv.reader(fh)][1:]
    ok = exact and identical and tasks == ["nn64", "coarse", "nn3d", "ransac", "total"]
    report(9, ok, f"round trip exact {exact}, non-timing CSVs identical {identical}")
    assert exact
    assert identical
    assert tasks == ["nn64", "coarse", "nn3d", "ransac", "total"]
