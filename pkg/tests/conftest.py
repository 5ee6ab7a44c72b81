import numpy as np
import pytest

from rgbdloc.feature_map import FeatureMap, ObservationFrame
from rgbdloc.geometry import Pose


def unit(x):
    x = np.asarray(x, float)
    return x / np.linalg.norm(x, axis=-1, keepdims=True)


def random_map(rng, n, dim=64, extent=10.0) -> FeatureMap:
    return FeatureMap(rng.uniform(0, extent, (n, 3)), unit(rng.standard_normal((n, dim))),
                      rng.uniform(0.01, 0.3, n), rng.integers(1, 9, n))


def frame_from_map(fmap: FeatureMap, ids, pose: Pose, frame_index=0, strengths=None, desc_noise=0.0, rng=None):
    """Camera-frame observation of map features ``ids`` seen from ``pose``."""
    ids = np.asarray(ids)
    desc = fmap.descriptors[ids]
    if desc_noise:
        desc = unit(desc + desc_noise * rng.standard_normal(desc.shape))
    s = np.linspace(1.0, 0.1, len(ids)) if strengths is None else strengths
    return ObservationFrame(pose.inverse().apply(fmap.positions[ids]), desc, s, pose, frame_index)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# one PASS/FAIL summary line per acceptance criterion
_CRITERIA: dict[int, tuple[str, bool]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion implemented by a test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or (rep.when != "call" and rep.passed):
        return
    number, title = mark.args
    ok = rep.passed and not rep.skipped
    prev = _CRITERIA.get(number)
    _CRITERIA[number] = (title, ok if prev is None else prev[1] and ok)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        title, ok = _CRITERIA[number]
        terminalreporter.write_line(f"criterion {number} {'PASS' if ok else 'FAIL'}: {title}")
