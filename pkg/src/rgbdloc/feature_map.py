"""Landmark database: map features, observation frames, map building and file I/O."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Optional, Sequence

import numpy as np

from .errors import DimensionMismatch, FormatError, MissingGroundTruth
from .geometry import Pose

DEFAULT_DESCRIPTOR_DIM = 64
# match_std used when no feature of the map was observed twice
DEFAULT_MATCH_STD = 0.25

MAP_MAGIC = "FMAP"
FRAMES_MAGIC = "FRAMES"
FORMAT_VERSION = 1


@dataclass(frozen=True)
class MapFeature:
    id: int
    position: np.ndarray
    descriptor: np.ndarray
    match_std: float
    n_obs: int


class FeatureMap:
    """Immutable columnar store of map features.

    Feature ``i`` lives in row ``i`` of every array, so ids are dense in
    ``[0, count)``.
    """

    def __init__(self, positions, descriptors, match_std, n_obs, frame_id: str = "map"):
        positions = np.array(positions, dtype=float).reshape(-1, 3)
        descriptors = np.array(descriptors, dtype=float)
        if descriptors.ndim != 2:
            raise DimensionMismatch("descriptors must be a 2-D array")
        match_std = np.array(match_std, dtype=float).reshape(-1)
        n_obs = np.array(n_obs, dtype=np.int64).reshape(-1)
        n = len(positions)
        if not (len(descriptors) == len(match_std) == len(n_obs) == n):
            raise DimensionMismatch("feature arrays differ in length")
        if not np.all(np.isfinite(positions)) or not np.all(np.isfinite(descriptors)):
            raise ValueError("feature positions and descriptors must be finite")
        if np.any(match_std < 0) or np.any(n_obs < 1):
            raise ValueError("match_std must be >= 0 and n_obs >= 1")
        for a in (positions, descriptors, match_std, n_obs):
            a.setflags(write=False)
        self.positions = positions
        self.descriptors = descriptors
        self.match_std = match_std
        self.n_obs = n_obs
        self.frame_id = frame_id

    @classmethod
    def empty(cls, descriptor_dim: int = DEFAULT_DESCRIPTOR_DIM) -> "FeatureMap":
        return cls(np.zeros((0, 3)), np.zeros((0, descriptor_dim)), [], [])

    @classmethod
    def from_features(cls, features: Sequence[MapFeature], descriptor_dim: Optional[int] = None) -> "FeatureMap":
        features = sorted(features, key=lambda f: f.id)
        if [f.id for f in features] != list(range(len(features))):
            raise ValueError("feature ids must be dense in [0, count)")
        if not features:
            return cls.empty(descriptor_dim or DEFAULT_DESCRIPTOR_DIM)
        return cls(
            [f.position for f in features],
            [f.descriptor for f in features],
            [f.match_std for f in features],
            [f.n_obs for f in features],
        )

    @property
    def descriptor_dim(self) -> int:
        return self.descriptors.shape[1]

    def __len__(self) -> int:
        return len(self.positions)

    def __getitem__(self, i: int) -> MapFeature:
        return MapFeature(int(i), self.positions[i], self.descriptors[i], float(self.match_std[i]), int(self.n_obs[i]))

    def __iter__(self) -> Iterator[MapFeature]:
        return (self[i] for i in range(len(self)))

    @property
    def features(self) -> list[MapFeature]:
        return list(self)

    def equals(self, other: "FeatureMap") -> bool:
        """Field-exact comparison (bitwise for floats)."""
        return (
            self.descriptor_dim == other.descriptor_dim
            and np.array_equal(self.positions, other.positions)
            and np.array_equal(self.descriptors, other.descriptors)
            and np.array_equal(self.match_std, other.match_std)
            and np.array_equal(self.n_obs, other.n_obs)
        )


@dataclass
class ObservationFrame:
    """One sensor reading: camera-frame points, descriptors and detector response."""

    positions: np.ndarray
    descriptors: np.ndarray
    strengths: np.ndarray
    ground_truth: Optional[Pose] = None
    frame_index: int = 0

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=float).reshape(-1, 3)
        self.descriptors = np.asarray(self.descriptors, dtype=float)
        if self.descriptors.ndim == 1:
            self.descriptors = self.descriptors.reshape(len(self.positions), -1)
        self.strengths = np.asarray(self.strengths, dtype=float).reshape(-1)
        if not (len(self.positions) == len(self.descriptors) == len(self.strengths)):
            raise DimensionMismatch("frame arrays differ in length")

    @classmethod
    def empty(cls, descriptor_dim: int = DEFAULT_DESCRIPTOR_DIM, frame_index: int = 0, ground_truth=None):
        return cls(np.zeros((0, 3)), np.zeros((0, descriptor_dim)), np.zeros(0), ground_truth, frame_index)

    @property
    def descriptor_dim(self) -> int:
        return self.descriptors.shape[1]

    def __len__(self) -> int:
        return len(self.positions)

    def strength_order(self) -> np.ndarray:
        """Feature indices by descending detection strength (stable on ties)."""
        return np.argsort(-self.strengths, kind="stable")


@dataclass
class MapBuildParams:
    assoc_radius: float = 0.10
    assoc_threshold: float = 0.5
    default_match_std: float = DEFAULT_MATCH_STD


class _Growable:
    def __init__(self, width: int, dtype=float):
        self.data = np.zeros((64, width), dtype=dtype)
        self.n = 0

    def append(self, row) -> None:
        if self.n == len(self.data):
            self.data = np.concatenate([self.data, np.zeros_like(self.data)])
        self.data[self.n] = row
        self.n += 1

    @property
    def view(self) -> np.ndarray:
        return self.data[: self.n]


class MapBuilder:
    """Accumulates posed frames into a :class:`FeatureMap`.

    Observations are moved into the map frame with the frame's ground-truth
    pose. Within a frame, candidate (observation, feature) pairs closer than
    ``assoc_radius`` in space and ``assoc_threshold`` in descriptor space are
    accepted greedily by ascending descriptor distance, one-to-one; leftover
    observations become new features. Each accepted pair feeds a running mean
    of position and descriptor and a Welford estimate of the spread of the
    descriptor distances, which becomes ``match_std``.

    ``distance_log``, when given, receives ``(feature_id, distance)`` for every
    association.
    """

    def __init__(self, params: MapBuildParams | None = None, descriptor_dim: Optional[int] = None,
                 distance_log: Optional[list] = None):
        self.params = params or MapBuildParams()
        self.descriptor_dim = descriptor_dim
        self.distance_log = distance_log
        self._pos: Optional[_Growable] = None
        self._desc: Optional[_Growable] = None
        self._stats = _Growable(4)  # n_obs, n_dist, mean_dist, m2_dist
        self._grid: dict[tuple, list[int]] = {}
        self._cell_of: list[tuple] = []

    def _cell(self, p) -> tuple:
        r = self.params.assoc_radius
        return (math.floor(p[0] / r), math.floor(p[1] / r), math.floor(p[2] / r))

    def _neighbours(self, p) -> list[int]:
        cx, cy, cz = self._cell(p)
        out: list[int] = []
        grid = self._grid
        for dx in (-1, 0, 1):
            for dy in (-1, 0, 1):
                for dz in (-1, 0, 1):
                    ids = grid.get((cx + dx, cy + dy, cz + dz))
                    if ids:
                        out.extend(ids)
        return out

    def add_frame(self, frame: ObservationFrame) -> None:
        if frame.ground_truth is None:
            raise MissingGroundTruth(f"frame {frame.frame_index} has no ground-truth pose")
        if self.descriptor_dim is None:
            self.descriptor_dim = frame.descriptor_dim
        if frame.descriptor_dim != self.descriptor_dim:
            raise DimensionMismatch(
                f"frame {frame.frame_index} has descriptor dim {frame.descriptor_dim}, map uses {self.descriptor_dim}"
            )
        if self._pos is None:
            self._pos = _Growable(3)
            self._desc = _Growable(self.descriptor_dim)
        if len(frame) == 0:
            return
        world = frame.ground_truth.apply(frame.positions)
        r = self.params.assoc_radius
        theta = self.params.assoc_threshold

        pairs = []
        if theta > 0 and self._pos.n:
            positions = self._pos.view
            descriptors = self._desc.view
            for i, p in enumerate(world):
                cand = self._neighbours(p)
                if not cand:
                    continue
                cand = np.asarray(cand)
                sd = np.linalg.norm(positions[cand] - p, axis=1)
                keep = sd <= r
                if not keep.any():
                    continue
                cand, sd = cand[keep], sd[keep]
                dd = np.linalg.norm(descriptors[cand] - frame.descriptors[i], axis=1)
                ok = dd < theta
                for j, d, s in zip(cand[ok], dd[ok], sd[ok]):
                    pairs.append((float(d), float(s), i, int(j)))
        pairs.sort()

        used_obs: set[int] = set()
        used_feat: set[int] = set()
        for d, _, i, j in pairs:
            if i in used_obs or j in used_feat:
                continue
            used_obs.add(i)
            used_feat.add(j)
            self._associate(j, world[i], frame.descriptors[i], d)

        for i in range(len(frame)):
            if i not in used_obs:
                self._insert(world[i], frame.descriptors[i])

    def _associate(self, j: int, p: np.ndarray, desc: np.ndarray, dist: float) -> None:
        st = self._stats.data[j]
        st[0] += 1
        n = st[0]
        # Welford update over the match distances
        st[1] += 1
        delta = dist - st[2]
        st[2] += delta / st[1]
        st[3] += delta * (dist - st[2])
        self._desc.data[j] += (desc - self._desc.data[j]) / n
        self._pos.data[j] += (p - self._pos.data[j]) / n
        if self.distance_log is not None:
            self.distance_log.append((j, dist))
        cell = self._cell(self._pos.data[j])
        if cell != self._cell_of[j]:
            self._grid[self._cell_of[j]].remove(j)
            self._grid.setdefault(cell, []).append(j)
            self._cell_of[j] = cell

    def _insert(self, p: np.ndarray, desc: np.ndarray) -> None:
        j = self._pos.n
        self._pos.append(p)
        self._desc.append(desc)
        self._stats.append((1, 0, 0.0, 0.0))
        cell = self._cell(p)
        self._grid.setdefault(cell, []).append(j)
        self._cell_of.append(cell)

    def build(self) -> FeatureMap:
        if self._pos is None:
            return FeatureMap.empty(self.descriptor_dim or DEFAULT_DESCRIPTOR_DIM)
        st = self._stats.view
        n_obs = st[:, 0].astype(np.int64)
        n_dist = st[:, 1]
        std = np.zeros(len(st))
        seen = n_dist >= 1
        std[seen] = np.sqrt(np.maximum(st[seen, 3], 0.0) / n_dist[seen])
        repeated = n_obs >= 2
        fallback = float(std[repeated].mean()) if repeated.any() else self.params.default_match_std
        std[~repeated] = fallback
        return FeatureMap(self._pos.view.copy(), self._desc.view.copy(), std, n_obs)


def build_map(frames: Iterable[ObservationFrame], params: MapBuildParams | None = None,
              distance_log: Optional[list] = None) -> FeatureMap:
    builder = MapBuilder(params, distance_log=distance_log)
    for frame in frames:
        builder.add_frame(frame)
    return builder.build()


# ---------------------------------------------------------------- file formats

def _fmt(values) -> str:
    return " ".join(repr(v) for v in values)


def save_map(fmap: FeatureMap, path) -> None:
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        fh.write(f"{MAP_MAGIC} {FORMAT_VERSION} {fmap.descriptor_dim} {len(fmap)}\n")
        pos = fmap.positions.tolist()
        desc = fmap.descriptors.tolist()
        std = fmap.match_std.tolist()
        nobs = fmap.n_obs.tolist()
        for i in range(len(fmap)):
            fh.write(f"{i} {_fmt(pos[i])} {std[i]!r} {nobs[i]} {_fmt(desc[i])}\n")


def _parse_header(line: str, magic: str, nfields: int) -> list[int]:
    parts = line.split()
    if len(parts) != nfields or parts[0] != magic:
        raise FormatError(f"bad header {line.strip()!r}, expected {magic}")
    try:
        nums = [int(p) for p in parts[1:]]
    except ValueError as exc:
        raise FormatError(f"bad header {line.strip()!r}") from exc
    if nums[0] != FORMAT_VERSION:
        raise FormatError(f"unsupported {magic} version {nums[0]}")
    if nums[1] < 1:
        raise FormatError(f"bad descriptor dimension {nums[1]}")
    return nums


def load_map(path) -> FeatureMap:
    path = Path(path)
    with path.open("r", encoding="utf-8") as fh:
        header = fh.readline()
        _, dim, count = _parse_header(header, MAP_MAGIC, 4)
        if count < 0:
            raise FormatError(f"bad feature count {count}")
        rows = []
        for lineno, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            parts = line.split()
            if len(parts) != dim + 6:
                raise FormatError(f"{path}:{lineno}: expected {dim + 6} fields, got {len(parts)}")
            rows.append(parts)
    if len(rows) != count:
        raise FormatError(f"{path}: header announces {count} features, found {len(rows)}")
    if not rows:
        return FeatureMap.empty(dim)
    try:
        ids = np.array([int(r[0]) for r in rows])
        n_obs = np.array([int(r[5]) for r in rows], dtype=np.int64)
        nums = np.array([r[1:5] + r[6:] for r in rows], dtype=float)
    except ValueError as exc:
        raise FormatError(f"{path}: non-numeric field") from exc
    if not np.array_equal(ids, np.arange(count)):
        raise FormatError(f"{path}: feature ids must be 0..{count - 1} in order")
    return FeatureMap(nums[:, 0:3], nums[:, 4:], nums[:, 3], n_obs)


def write_frames(frames: Sequence[ObservationFrame], path, descriptor_dim: Optional[int] = None) -> None:
    path = Path(path)
    if descriptor_dim is None:
        descriptor_dim = frames[0].descriptor_dim if frames else DEFAULT_DESCRIPTOR_DIM
    with path.open("w", encoding="utf-8") as fh:
        fh.write(f"{FRAMES_MAGIC} {FORMAT_VERSION} {descriptor_dim}\n")
        for fr in frames:
            if fr.descriptor_dim != descriptor_dim:
                raise DimensionMismatch(f"frame {fr.frame_index} has descriptor dim {fr.descriptor_dim}")
            head = f"FRAME {fr.frame_index}"
            if fr.ground_truth is not None:
                head += " POSE " + " ".join(fr.ground_truth.to_tokens())
            fh.write(head + "\n")
            pos = fr.positions.tolist()
            desc = fr.descriptors.tolist()
            strength = fr.strengths.tolist()
            for i in range(len(fr)):
                fh.write(f"{_fmt(pos[i])} {strength[i]!r} {_fmt(desc[i])}\n")
            fh.write("END\n")


def read_frames(path) -> list[ObservationFrame]:
    path = Path(path)
    frames: list[ObservationFrame] = []
    with path.open("r", encoding="utf-8") as fh:
        _, dim = _parse_header(fh.readline(), FRAMES_MAGIC, 3)
        head = None
        rows: list[list[str]] = []
        for lineno, line in enumerate(fh, start=2):
            parts = line.split()
            if not parts:
                continue
            if head is None:
                if parts[0] != "FRAME" or len(parts) not in (2, 10) or (len(parts) == 10 and parts[2] != "POSE"):
                    raise FormatError(f"{path}:{lineno}: expected FRAME header")
                head = parts
                rows = []
            elif parts[0] == "END":
                frames.append(_make_frame(head, rows, dim, path))
                head = None
            else:
                if len(parts) != dim + 4:
                    raise FormatError(f"{path}:{lineno}: expected {dim + 4} fields, got {len(parts)}")
                rows.append(parts)
        if head is not None:
            raise FormatError(f"{path}: frame {head[1]} not terminated by END")
    return frames


def _make_frame(head: list[str], rows: list[list[str]], dim: int, path) -> ObservationFrame:
    try:
        index = int(head[1])
        pose = Pose.from_tokens(head[3:]) if len(head) == 10 else None
        data = np.array(rows, dtype=float).reshape(-1, dim + 4)
    except ValueError as exc:
        raise FormatError(f"{path}: bad frame {head[1]}") from exc
    return ObservationFrame(data[:, :3], data[:, 4:], data[:, 3], pose, index)


def write_gen_sidecar(records: Iterable[tuple[int, int, int]], path) -> None:
    """Generative association ``frame_index obs_index landmark_id``; test oracles only."""
    with Path(path).open("w", encoding="utf-8") as fh:
        for f, o, l in records:
            fh.write(f"{f} {o} {l}\n")


def read_gen_sidecar(path) -> dict[int, np.ndarray]:
    out: dict[int, list[tuple[int, int]]] = {}
    with Path(path).open("r", encoding="utf-8") as fh:
        for line in fh:
            parts = line.split()
            if not parts:
                continue
            f, o, l = (int(p) for p in parts)
            out.setdefault(f, []).append((o, l))
    result = {}
    for f, items in out.items():
        items.sort()
        result[f] = np.array([l for _, l in items], dtype=np.int64)
    return result
