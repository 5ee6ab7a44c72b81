"""FastAPI application serving localization against one loaded map.

The map and its indices are built once at startup and shared read-only by
all requests.
"""
from __future__ import annotations

from dataclasses import asdict
from pathlib import Path
from typing import Optional

import numpy as np
from fastapi import FastAPI, HTTPException

from ..estimation import PROPOSED, Counts, LocalizationReport, Outcome, StageTimes, baseline_name, localize_baseline
from ..feature_map import FeatureMap, ObservationFrame, load_map
from ..geometry import Pose
from ..harness.config import ExperimentConfig
from ..harness.experiment import make_localizer
from ..index import MapIndices
from .schemas import Health, LocalizeRequest, LocalizeResponse, MapInfo, PoseOut

MAX_BASELINE_K = 100


def frame_from_request(frame, dim: int) -> ObservationFrame:
    feats = frame.features
    if not feats:
        return ObservationFrame(np.zeros((0, 3)), np.zeros((0, dim)), np.zeros(0), frame_index=frame.frame_index)
    desc = np.array([f.descriptor for f in feats], float)
    if desc.shape[1] != dim or any(len(f.descriptor) != dim for f in feats):
        raise HTTPException(422, f"descriptors must have length {dim}")
    return ObservationFrame(np.array([f.position for f in feats], float), desc,
                            np.array([f.strength for f in feats], float), frame_index=frame.frame_index)


def report_to_response(r: LocalizationReport) -> LocalizeResponse:
    pose = None
    if r.pose is not None:
        pose = PoseOut(translation=r.pose.translation.tolist(), rotation=r.pose.rotation.tolist())
    return LocalizeResponse(frame_index=r.frame_index, approach=r.approach, outcome=r.outcome.value, pose=pose,
                            timings=asdict(r.timings), counts=asdict(r.counts))


def response_to_report(resp: dict) -> LocalizationReport:
    """Inverse of :func:`report_to_response` on the decoded JSON body."""
    pose = resp.get("pose")
    return LocalizationReport(
        resp["frame_index"], resp["approach"], Outcome(resp["outcome"]),
        Pose(pose["rotation"], pose["translation"]) if pose else None,
        StageTimes(**resp["timings"]), Counts(**resp["counts"]))


def create_app(fmap: FeatureMap | str | Path, config: Optional[ExperimentConfig] = None) -> FastAPI:
    """Application bound to ``fmap`` (a map or a path to an FMAP file)."""
    config = config or ExperimentConfig()
    if not isinstance(fmap, FeatureMap):
        fmap = load_map(fmap)
    indices = MapIndices.build(fmap, config.descriptor_index, config.forest_params()) if len(fmap) else None
    localizers: dict[str, object] = {}

    def localizer_for(approach: str):
        if approach not in localizers:
            if approach == PROPOSED:
                localizers[approach] = make_localizer(PROPOSED, fmap, indices, config)
            else:
                k = approach[len("baseline"):]
                if not (k.isdigit() and approach == baseline_name(int(k)) and 1 <= int(k) <= MAX_BASELINE_K):
                    raise HTTPException(422, f"unknown approach {approach!r}")
                rp = config.ransac_params()
                localizers[approach] = lambda fr, k=int(k): localize_baseline(fr, fmap, indices.descriptor, k, rp)
        return localizers[approach]

    app = FastAPI(title="rgbdloc", summary="Global 6-DoF localization in a sparse feature map")

    @app.get("/health", response_model=Health)
    def health():
        return Health(status="ok", features=len(fmap))

    @app.get("/map", response_model=MapInfo)
    def map_info():
        return MapInfo(features=len(fmap), descriptor_dim=fmap.descriptor_dim,
                       descriptor_index=config.descriptor_index, frame_id=fmap.frame_id)

    @app.post("/localize", response_model=LocalizeResponse)
    def localize_frame(req: LocalizeRequest):
        if indices is None:
            raise HTTPException(409, "map is empty")
        frame = frame_from_request(req.frame, fmap.descriptor_dim)
        return report_to_response(localizer_for(req.approach)(frame))

    return app


def frame_to_request(frame: ObservationFrame, approach: str = PROPOSED) -> dict:
    return {
        "approach": approach,
        "frame": {
            "frame_index": frame.frame_index,
            "features": [
                {"position": p.tolist(), "descriptor": d.tolist(), "strength": float(s)}
                for p, d, s in zip(frame.positions, frame.descriptors, frame.strengths)
            ],
        },
    }
