"""Text persistence of localization reports.

Format: a ``REPORTS 1`` header, then one whitespace-separated line per report::

    frame_index approach outcome tx ty tz qw qx qy qz nn64 coarse nn3d ransac total \\
        n_features m_queries clique spatial correspondences inliers

Pose tokens are ``-`` when the report carries no pose.
"""
from __future__ import annotations

from dataclasses import fields
from pathlib import Path
from typing import Iterable

from ..errors import FormatError
from ..estimation import Counts, LocalizationReport, Outcome, StageTimes
from ..geometry import Pose

MAGIC = "REPORTS"
VERSION = 1
_TIME_FIELDS = [f.name for f in fields(StageTimes)]
_COUNT_FIELDS = [f.name for f in fields(Counts)]
_NTOK = 3 + 7 + len(_TIME_FIELDS) + len(_COUNT_FIELDS)


def format_report(r: LocalizationReport) -> str:
    pose = r.pose.to_tokens() if r.pose is not None else ["-"] * 7
    times = [repr(float(getattr(r.timings, f))) for f in _TIME_FIELDS]
    counts = [str(int(getattr(r.counts, f))) for f in _COUNT_FIELDS]
    return " ".join([str(r.frame_index), r.approach, r.outcome.value, *pose, *times, *counts])


def parse_report(line: str) -> LocalizationReport:
    tok = line.split()
    if len(tok) != _NTOK:
        raise FormatError(f"report line has {len(tok)} fields, expected {_NTOK}")
    try:
        idx = int(tok[0])
        outcome = Outcome(tok[2])
        pose = None if tok[3] == "-" else Pose.from_tokens(tok[3:10])
        t = tok[10 : 10 + len(_TIME_FIELDS)]
        c = tok[10 + len(_TIME_FIELDS) :]
        timings = StageTimes(*(float(v) for v in t))
        counts = Counts(*(int(v) for v in c))
    except ValueError as exc:
        raise FormatError(f"bad report line: {exc}") from None
    return LocalizationReport(idx, tok[1], outcome, pose, timings, counts)


def write_reports(reports: Iterable[LocalizationReport], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{MAGIC} {VERSION}\n")
        for r in reports:
            fh.write(format_report(r) + "\n")


def read_reports(path: str | Path) -> list[LocalizationReport]:
    with open(path, encoding="utf-8") as fh:
        lines = [ln for ln in fh.read().splitlines() if ln.strip()]
    if not lines or lines[0].split() != [MAGIC, str(VERSION)]:
        raise FormatError(f"{path}: missing '{MAGIC} {VERSION}' header")
    return [parse_report(ln) for ln in lines[1:]]
