import math
import xml.etree.ElementTree as ET

import numpy as np

from rgbdloc.harness.svg import rmse_svg, robustness_svg, trajectory_svg

NS = "{http://www.w3.org/2000/svg}"


def parse(text):
    root = ET.fromstring(text)
    assert (root.get("width"), root.get("height"), root.get("viewBox")) == ("800", "600", "0 0 800 600")
    assert root.find(f"{NS}rect[@id='background']") is not None
    assert root.find(f"{NS}text[@id='title']") is not None
    assert root.find(f"{NS}g[@id='axes']") is not None
    return root


def bars(root, gid):
    return root.find(f".//{NS}g[@id='{gid}']").findall(f"{NS}rect")


def test_robustness_bar_heights_proportional():
    root = parse(robustness_svg({"a": 0.25, "b": 1.0, "c": 0.0}))
    b = bars(root, "bars")
    assert [x.get("data-approach") for x in b] == ["a", "b", "c"]
    h = [float(x.get("height")) for x in b]
    assert h[2] == 0 and abs(h[0] / h[1] - 0.25) < 1e-2
    # bars share a baseline
    assert len({round(float(x.get("y")) + float(x.get("height")), 1) for x in b}) == 1


def test_rmse_panels_and_nan():
    root = parse(rmse_svg({"p": [0.01, 0.02, float("nan")], "q": [0.04, 0.0, 0.01]},
                          {"p": [1.0, 2.0, 3.0], "q": [0.5, 0.5, 0.5]}))
    t = bars(root, "translation")
    r = bars(root, "rotation")
    assert len(t) == 6 and len(r) == 6
    nan_bar = [x for x in t if x.get("data-approach") == "p" and x.get("data-metric") == "z"][0]
    assert math.isnan(float(nan_bar.get("data-value"))) and float(nan_bar.get("height")) == 0
    assert {x.get("data-metric") for x in r} == {"alpha", "beta", "gamma"}
    tall = max(t, key=lambda x: float(x.get("height")))
    assert tall.get("data-approach") == "q" and tall.get("data-metric") == "x"


def test_trajectory_markers_and_orientation():
    truth = np.array([[0.0, 0.0], [10.0, 0.0], [10.0, 2.0]])
    root = parse(trajectory_svg(truth, {"proposed": ([0, 2], truth[[0, 2]] + 0.1)}))
    gt = root.find(f"{NS}g[@id='ground-truth']").findall(f"{NS}path")
    est = root.find(f"{NS}g[@id='estimate-proposed']").findall(f"{NS}path")
    assert [int(p.get("data-frame")) for p in gt] == [0, 1, 2]
    assert [int(p.get("data-frame")) for p in est] == [0, 2]
    assert all(p.get("class") == "plus" for p in gt) and all(p.get("class") == "cross" for p in est)

    def centre(p):
        nums = [float(v) for v in p.get("d").replace("M", " ").replace("H", " ").replace("V", " ").split()]
        return nums[0] + 4, nums[1]

    (x0, y0), (x1, y1), (x2, y2) = (centre(p) for p in gt)
    assert x1 > x0 and abs(y1 - y0) < 1e-6  # +X to the right
    assert y2 < y1  # +Y up
    # equal aspect: 10 m along X is five times 2 m along Y
    assert abs((x1 - x0) / (y1 - y2) - 5.0) < 0.01


def test_empty_inputs_still_valid():
    parse(robustness_svg({}))
    parse(rmse_svg({}, {}))
    parse(trajectory_svg(np.zeros((0, 2)), {}))


def test_names_are_escaped():
    root = parse(robustness_svg({"a<b&c": 0.5}))
    assert bars(root, "bars")[0].get("data-approach") == "a<b&c"
