from typing import Optional

from pydantic import BaseModel, Field


class FeatureIn(BaseModel):
    position: list[float] = Field(min_length=3, max_length=3, description="camera frame, metres")
    descriptor: list[float]
    strength: float = Field(gt=0, le=1)


class FrameIn(BaseModel):
    frame_index: int = 0
    features: list[FeatureIn] = []


class LocalizeRequest(BaseModel):
    frame: FrameIn
    approach: str = Field("proposed", description="'proposed' or 'baseline<k>'")


class PoseOut(BaseModel):
    translation: list[float]
    rotation: list[float] = Field(description="unit quaternion w x y z")


class TimingsOut(BaseModel):
    nn64: float
    coarse: float
    nn3d: float
    ransac: float
    total: float


class CountsOut(BaseModel):
    n_features: int
    m_queries: int
    clique: int
    spatial: int
    correspondences: int
    inliers: int


class LocalizeResponse(BaseModel):
    frame_index: int
    approach: str
    outcome: str
    pose: Optional[PoseOut] = None
    timings: TimingsOut
    counts: CountsOut


class MapInfo(BaseModel):
    features: int
    descriptor_dim: int
    descriptor_index: str
    frame_id: str


class Health(BaseModel):
    status: str
    features: int
