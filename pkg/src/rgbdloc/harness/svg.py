"""Direct SVG emission for the result figures.

Every figure is an 800x600 ``<svg>`` with a ``<rect id="background">``, a
``<text id="title">`` and ``<g id="axes">`` holding the axis lines and tick
labels. Data elements carry ``data-*`` attributes so tests can check parsed
geometry instead of bytes:

* ``robustness.svg``: ``<g id="bars">`` with one ``<rect class="bar">`` per
  approach (``data-approach``, ``data-value`` = success rate in [0, 1]).
* ``rmse.svg``: ``<g id="translation">`` and ``<g id="rotation">`` panels,
  each with ``<rect class="bar">`` per (approach, axis) carrying
  ``data-approach``, ``data-metric`` (``x``/``y``/``z`` or
  ``alpha``/``beta``/``gamma``) and ``data-value`` (m or degrees). NaN values
  are drawn with zero height.
* ``trajectory.svg``: top view (map X right, Y up). ``<g id="ground-truth">``
  holds one ``<path class="plus">`` per frame, ``<g id="estimate-<approach>">``
  one ``<path class="cross">`` per reported pose; both carry ``data-frame``,
  ``data-x`` and ``data-y`` in metres.
"""
from __future__ import annotations

import math
from typing import Mapping, Sequence
from xml.sax.saxutils import escape, quoteattr

import numpy as np

WIDTH, HEIGHT = 800, 600
MARGIN = dict(left=70, right=30, top=50, bottom=70)
PALETTE = ["#1f77b4", "#ff7f0e", "#2ca02c", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"]


def _num(v: float) -> str:
    return f"{v:.2f}"


def _attrs(**kw) -> str:
    parts = []
    for k, v in kw.items():
        if v is None:
            continue
        parts.append(f"{k.rstrip('_').replace('_', '-')}={quoteattr(str(v))}")
    return " ".join(parts)


class _Doc:
    def __init__(self, title: str):
        self.lines = [
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
            f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">',
            f'<rect id="background" x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
            f'<text id="title" x="{WIDTH / 2}" y="28" text-anchor="middle" font-size="16">{escape(title)}</text>',
        ]

    def add(self, line: str) -> None:
        self.lines.append(line)

    def text(self) -> str:
        return "\n".join(self.lines + ["</svg>"]) + "\n"


def _nice_max(v: float) -> float:
    if not v > 0 or not math.isfinite(v):
        return 1.0
    mag = 10 ** math.floor(math.log10(v))
    for m in (1, 2, 2.5, 5, 10):
        if v <= m * mag:
            return m * mag
    return 10 * mag


def _value_axis(doc: _Doc, x0, y0, x1, y1, vmax, label, ticks=5):
    """Left value axis for a plot area spanning (x0, y0)-(x1, y1)."""
    doc.add(f'<line x1="{x0}" y1="{y1}" x2="{x1}" y2="{y1}" stroke="black"/>')
    doc.add(f'<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}" stroke="black"/>')
    for i in range(ticks + 1):
        v = vmax * i / ticks
        y = y1 - (y1 - y0) * i / ticks
        doc.add(f'<line x1="{x0 - 4}" y1="{_num(y)}" x2="{x0}" y2="{_num(y)}" stroke="black"/>')
        doc.add(f'<text x="{x0 - 6}" y="{_num(y + 4)}" text-anchor="end">{v:g}</text>')
    cy = (y0 + y1) / 2
    doc.add(f'<text x="{x0 - 48}" y="{_num(cy)}" text-anchor="middle" '
            f'transform="rotate(-90 {x0 - 48} {_num(cy)})">{escape(label)}</text>')


def robustness_svg(rates: Mapping[str, float]) -> str:
    doc = _Doc("Successful estimates per approach")
    x0, y0 = MARGIN["left"], MARGIN["top"]
    x1, y1 = WIDTH - MARGIN["right"], HEIGHT - MARGIN["bottom"]
    doc.add('<g id="axes">')
    _value_axis(doc, x0, y0, x1, y1, 1.0, "success rate")
    doc.add("</g>")
    doc.add('<g id="bars">')
    n = max(1, len(rates))
    slot = (x1 - x0) / n
    for i, (name, rate) in enumerate(rates.items()):
        h = (y1 - y0) * min(max(rate, 0.0), 1.0)
        x = x0 + slot * (i + 0.2)
        doc.add(f'<rect class="bar" {_attrs(data_approach=name, data_value=repr(float(rate)))} '
                f'x="{_num(x)}" y="{_num(y1 - h)}" width="{_num(slot * 0.6)}" height="{_num(h)}" '
                f'fill="{PALETTE[i % len(PALETTE)]}"/>')
        doc.add(f'<text x="{_num(x + slot * 0.3)}" y="{y1 + 18}" text-anchor="middle">{escape(name)}</text>')
        doc.add(f'<text x="{_num(x + slot * 0.3)}" y="{_num(y1 - h - 6)}" text-anchor="middle">{100 * rate:.1f}%</text>')
    doc.add("</g>")
    return doc.text()


def _grouped_panel(doc: _Doc, gid: str, metrics: Sequence[str], values: Mapping[str, Sequence[float]],
                   x0, y0, x1, y1, label):
    finite = [v for vals in values.values() for v in vals if math.isfinite(v)]
    vmax = _nice_max(max(finite, default=0.0))
    _value_axis(doc, x0, y0, x1, y1, vmax, label)
    doc.add(f'<g id="{gid}">')
    groups = len(metrics)
    napp = max(1, len(values))
    slot = (x1 - x0) / max(1, groups)
    bw = slot * 0.8 / napp
    for g, metric in enumerate(metrics):
        gx = x0 + slot * (g + 0.1)
        for a, (name, vals) in enumerate(values.items()):
            v = float(vals[g])
            h = (y1 - y0) * (v / vmax) if math.isfinite(v) else 0.0
            x = gx + a * bw
            doc.add(f'<rect class="bar" {_attrs(data_approach=name, data_metric=metric, data_value=repr(v))} '
                    f'x="{_num(x)}" y="{_num(y1 - h)}" width="{_num(bw)}" height="{_num(h)}" '
                    f'fill="{PALETTE[a % len(PALETTE)]}"/>')
        doc.add(f'<text x="{_num(x0 + slot * (g + 0.5))}" y="{y1 + 16}" text-anchor="middle">{metric}</text>')
    doc.add("</g>")


def rmse_svg(rmse_xyz: Mapping[str, Sequence[float]], rmse_deg: Mapping[str, Sequence[float]]) -> str:
    doc = _Doc("Translational and rotational RMS errors")
    mid = WIDTH / 2
    y0, y1 = MARGIN["top"], HEIGHT - MARGIN["bottom"] - 30
    doc.add('<g id="axes">')
    _grouped_panel(doc, "translation", ("x", "y", "z"), rmse_xyz, MARGIN["left"], y0, mid - 30, y1, "RMSE (m)")
    _grouped_panel(doc, "rotation", ("alpha", "beta", "gamma"), rmse_deg, mid + 70, y0,
                   WIDTH - MARGIN["right"], y1, "RMSE (deg)")
    doc.add("</g>")
    doc.add('<g id="legend">')
    for i, name in enumerate(rmse_xyz):
        x = MARGIN["left"] + 130 * i
        doc.add(f'<rect x="{x}" y="{HEIGHT - 30}" width="12" height="12" fill="{PALETTE[i % len(PALETTE)]}"/>')
        doc.add(f'<text x="{x + 16}" y="{HEIGHT - 20}">{escape(name)}</text>')
    doc.add("</g>")
    return doc.text()


def trajectory_svg(truth_xy: np.ndarray, estimates: Mapping[str, tuple[np.ndarray, np.ndarray]],
                   frame_ids: Sequence[int] | None = None) -> str:
    """Top view. ``estimates`` maps approach -> (frame indices, (n, 2) XY)."""
    doc = _Doc("Trajectory, top view")
    truth_xy = np.asarray(truth_xy, float).reshape(-1, 2)
    frame_ids = list(range(len(truth_xy))) if frame_ids is None else list(frame_ids)
    pts = [truth_xy] + [np.asarray(xy, float).reshape(-1, 2) for _, xy in estimates.values()]
    allp = np.concatenate(pts) if sum(len(p) for p in pts) else np.zeros((1, 2))
    lo, hi = allp.min(axis=0), allp.max(axis=0)
    pad = 0.05 * max(float(np.max(hi - lo)), 1.0)
    lo, hi = lo - pad, hi + pad
    x0, y0 = MARGIN["left"], MARGIN["top"]
    x1, y1 = WIDTH - MARGIN["right"], HEIGHT - MARGIN["bottom"]
    scale = min((x1 - x0) / (hi[0] - lo[0]), (y1 - y0) / (hi[1] - lo[1]))  # equal aspect

    def to_px(p):
        return x0 + (p[0] - lo[0]) * scale, y1 - (p[1] - lo[1]) * scale

    doc.add('<g id="axes">')
    doc.add(f'<line x1="{x0}" y1="{y1}" x2="{x1}" y2="{y1}" stroke="black"/>')
    doc.add(f'<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}" stroke="black"/>')
    doc.add(f'<text x="{(x0 + x1) / 2}" y="{y1 + 40}" text-anchor="middle">X (m)</text>')
    doc.add(f'<text x="{x0 - 45}" y="{(y0 + y1) / 2}" text-anchor="middle" '
            f'transform="rotate(-90 {x0 - 45} {(y0 + y1) / 2})">Y (m)</text>')
    step = _nice_max((hi[0] - lo[0]) / 8)
    for v in np.arange(math.ceil(lo[0] / step) * step, hi[0], step):
        px, _ = to_px((v, lo[1]))
        doc.add(f'<text x="{_num(px)}" y="{y1 + 18}" text-anchor="middle">{v:g}</text>')
    doc.add("</g>")

    def marker(cls, px, py):
        r = 4
        if cls == "plus":
            return f"M {_num(px - r)} {_num(py)} H {_num(px + r)} M {_num(px)} {_num(py - r)} V {_num(py + r)}"
        return (f"M {_num(px - r)} {_num(py - r)} L {_num(px + r)} {_num(py + r)} "
                f"M {_num(px - r)} {_num(py + r)} L {_num(px + r)} {_num(py - r)}")

    doc.add('<g id="ground-truth" stroke="red" fill="none">')
    for f, p in zip(frame_ids, truth_xy):
        px, py = to_px(p)
        doc.add(f'<path class="plus" {_attrs(data_frame=f, data_x=repr(float(p[0])), data_y=repr(float(p[1])))} '
                f'd="{marker("plus", px, py)}"/>')
    doc.add("</g>")
    for i, (name, (ids, xy)) in enumerate(estimates.items()):
        color = "blue" if i == 0 else PALETTE[(i + 1) % len(PALETTE)]
        doc.add(f'<g id={quoteattr("estimate-" + name)} stroke="{color}" fill="none">')
        for f, p in zip(ids, np.asarray(xy, float).reshape(-1, 2)):
            px, py = to_px(p)
            doc.add(f'<path class="cross" {_attrs(data_frame=int(f), data_x=repr(float(p[0])), data_y=repr(float(p[1])))} '
                    f'd="{marker("cross", px, py)}"/>')
        doc.add("</g>")
    return doc.text()
