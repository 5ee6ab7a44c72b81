"""Nearest-neighbour indices over a FeatureMap.

Two indices back the localizer: k-NN search in descriptor space (exact brute
force or a randomized kd-forest) and exact fixed-radius search over the 3D
feature positions. Both are built once and never mutated by queries, so they
can be shared across threads.
"""
from __future__ import annotations

import heapq
import time
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.spatial import cKDTree

from .errors import DimensionMismatch, EmptyMap
from .feature_map import FeatureMap

EXACT = "exact"
KDFOREST = "kdforest"


@dataclass
class QueryTimer:
    """Accumulated wall-clock time and query count for one kind of search."""

    seconds: float = 0.0
    queries: int = 0

    def add(self, seconds: float, queries: int) -> None:
        self.seconds += seconds
        self.queries += queries

    @property
    def per_query(self) -> float:
        return self.seconds / self.queries if self.queries else 0.0

    def merge(self, other: "QueryTimer") -> "QueryTimer":
        return QueryTimer(self.seconds + other.seconds, self.queries + other.queries)


@dataclass
class TimingModel:
    """Matching cost summary: ``M * t_64d + N * t_3d`` for the two-stage matcher."""

    t_64d: float
    t_3d: float
    n_features: float
    m_queries: float

    @property
    def proposed_cost(self) -> float:
        return self.m_queries * self.t_64d + self.n_features * self.t_3d

    @property
    def descriptor_only_cost(self) -> float:
        return self.n_features * self.t_64d


@dataclass
class KDForestParams:
    trees: int = 4
    checks: int = 64
    leaf_size: int = 8
    top_dims: int = 5
    sample_size: int = 100
    seed: int = 0


class _KDTree:
    """One randomized kd-tree, flat-list layout for fast Python traversal."""

    __slots__ = ("dim", "val", "left", "right", "leaf")

    def __init__(self, data: np.ndarray, params: KDForestParams, rng: np.random.Generator):
        self.dim: list[int] = []
        self.val: list[float] = []
        self.left: list[int] = []
        self.right: list[int] = []
        self.leaf: list[Optional[np.ndarray]] = []
        self._build(data, params, rng)

    def _new(self) -> int:
        self.dim.append(-1)
        self.val.append(0.0)
        self.left.append(-1)
        self.right.append(-1)
        self.leaf.append(None)
        return len(self.dim) - 1

    def _build(self, data, params, rng):
        root = self._new()
        stack = [(root, np.arange(len(data)))]
        while stack:
            node, idx = stack.pop()
            if len(idx) <= params.leaf_size:
                self.leaf[node] = idx
                continue
            sample = idx if len(idx) <= params.sample_size else rng.choice(idx, params.sample_size, replace=False)
            pts = data[sample]
            var = pts.var(axis=0)
            top = np.argsort(-var, kind="stable")[: params.top_dims]
            d = int(top[rng.integers(len(top))])
            v = float(pts[:, d].mean())
            go_left = data[idx, d] < v
            nl = int(go_left.sum())
            if nl == 0 or nl == len(idx):
                # fall back to the median along the widest dimension
                d = int(top[0])
                col = data[idx, d]
                v = float(np.median(col))
                go_left = col < v
                nl = int(go_left.sum())
                if nl == 0 or nl == len(idx):
                    self.leaf[node] = idx
                    continue
            self.dim[node] = d
            self.val[node] = v
            lo, hi = self._new(), self._new()
            self.left[node] = lo
            self.right[node] = hi
            stack.append((hi, idx[~go_left]))
            stack.append((lo, idx[go_left]))


class DescriptorIndex:
    """k-NN search over map descriptors.

    ``algorithm`` is ``"exact"`` (brute force, returns the true k-NN) or
    ``"kdforest"`` (best-bin-first search over randomized kd-trees, stopping
    after ``checks`` points have been examined).
    """

    def __init__(self, fmap: FeatureMap, algorithm: str = KDFOREST, forest: KDForestParams | None = None):
        if algorithm not in (EXACT, KDFOREST):
            raise ValueError(f"unknown descriptor index algorithm {algorithm!r}")
        self.map = fmap
        self.algorithm = algorithm
        self.forest_params = forest or KDForestParams()
        self._data = np.ascontiguousarray(fmap.descriptors)
        self._sqnorm = np.einsum("ij,ij->i", self._data, self._data)
        self._trees: list[_KDTree] = []
        if algorithm == KDFOREST and len(fmap):
            rng = np.random.default_rng(self.forest_params.seed)
            self._trees = [_KDTree(self._data, self.forest_params, rng) for _ in range(self.forest_params.trees)]

    @property
    def dim(self) -> int:
        return self._data.shape[1]

    def __len__(self) -> int:
        return len(self._data)

    def _check(self, queries: np.ndarray, k: int) -> np.ndarray:
        if k < 1:
            raise ValueError("k must be >= 1")
        if not len(self._data):
            raise EmptyMap("descriptor index over an empty map")
        q = np.asarray(queries, dtype=float)
        if q.shape[-1] != self.dim:
            raise DimensionMismatch(f"query dim {q.shape[-1]} != map dim {self.dim}")
        return q

    def knn(self, query, k: int = 1, timer: QueryTimer | None = None) -> list[tuple[int, float]]:
        """k nearest map features to one descriptor, ascending by distance then id."""
        return self.knn_batch(np.asarray(query, dtype=float)[None, :], k, timer)[0]

    def knn_batch(self, queries, k: int = 1, timer: QueryTimer | None = None) -> list[list[tuple[int, float]]]:
        q = self._check(queries, k).reshape(-1, self.dim)
        t0 = time.perf_counter()
        if self.algorithm == EXACT:
            ids, dists = self._exact(q, k)
        else:
            ids, dists = self._forest(q, k)
        if timer is not None:
            timer.add(time.perf_counter() - t0, len(q))
        return [list(zip(i.tolist(), d.tolist())) for i, d in zip(ids, dists)]

    def knn_arrays(self, queries, k: int = 1, timer: QueryTimer | None = None):
        """Like :meth:`knn_batch` but returns lists of (ids, distances) arrays."""
        q = self._check(queries, k).reshape(-1, self.dim)
        t0 = time.perf_counter()
        out = self._exact(q, k) if self.algorithm == EXACT else self._forest(q, k)
        if timer is not None:
            timer.add(time.perf_counter() - t0, len(q))
        return out

    def _rank(self, q: np.ndarray, cand: np.ndarray, k: int):
        d = np.sqrt(np.einsum("ij,ij->i", self._data[cand] - q, self._data[cand] - q))
        order = np.lexsort((cand, d))[:k]
        return cand[order], d[order]

    def _exact(self, q: np.ndarray, k: int):
        n = len(self._data)
        k_eff = min(k, n)
        margin = min(n, k_eff + 8)
        ids, dists = [], []
        for s in range(0, len(q), 64):
            block = q[s : s + 64]
            d2 = self._sqnorm[None, :] - 2.0 * block @ self._data.T
            if margin < n:
                cand = np.argpartition(d2, margin - 1, axis=1)[:, :margin]
            else:
                cand = np.broadcast_to(np.arange(n), (len(block), n))
            for row, c in zip(block, cand):
                i, d = self._rank(row, np.sort(c), k_eff)
                ids.append(i)
                dists.append(d)
        return ids, dists

    def _forest(self, q: np.ndarray, k: int):
        checks = max(self.forest_params.checks, k)
        trees = self._trees
        ids, dists = [], []
        for row in q:
            qv = row.tolist()
            heap: list[tuple[float, int, int, int]] = []
            found: list[np.ndarray] = []
            count = 0
            for t, tree in enumerate(trees):
                count += self._descend(tree, t, 0, 0.0, qv, heap, found)
            while heap and count < checks:
                bound, _, t, node = heapq.heappop(heap)
                count += self._descend(trees[t], t, node, bound, qv, heap, found)
            cand = np.unique(np.concatenate(found))
            i, d = self._rank(row, cand, k)
            ids.append(i)
            dists.append(d)
        return ids, dists

    @staticmethod
    def _descend(tree: _KDTree, t: int, node: int, bound: float, qv, heap, found) -> int:
        dim, val, left, right, leaf = tree.dim, tree.val, tree.left, tree.right, tree.leaf
        while dim[node] >= 0:
            diff = qv[dim[node]] - val[node]
            if diff < 0:
                near, far = left[node], right[node]
            else:
                near, far = right[node], left[node]
            heapq.heappush(heap, (bound + diff * diff, far * 31 + t, t, far))
            node = near
        pts = leaf[node]
        found.append(pts)
        return len(pts)


class SpatialIndex:
    """Exact radius search over feature positions (kd-tree)."""

    def __init__(self, fmap: FeatureMap):
        self.map = fmap
        self._pos = np.ascontiguousarray(fmap.positions)
        self._tree = cKDTree(self._pos) if len(fmap) else None

    def __len__(self) -> int:
        return len(self._pos)

    def radius(self, center, radius: float, timer: QueryTimer | None = None) -> list[tuple[int, float]]:
        """All features within ``radius`` of ``center``, ascending by distance then id."""
        ids, d = self.radius_batch(np.asarray(center, dtype=float)[None, :], radius, timer)[0]
        return list(zip(ids.tolist(), d.tolist()))

    def radius_batch(self, centers, radius: float, timer: QueryTimer | None = None):
        """Per-centre ``(ids, distances)`` arrays, each sorted ascending."""
        if not radius > 0:
            raise ValueError("radius must be > 0")
        if self._tree is None:
            raise EmptyMap("spatial index over an empty map")
        c = np.asarray(centers, dtype=float).reshape(-1, 3)
        t0 = time.perf_counter()
        hits = self._tree.query_ball_point(c, radius)
        out = []
        for center, h in zip(c, hits):
            ids = np.asarray(h, dtype=np.int64)
            d = np.linalg.norm(self._pos[ids] - center, axis=1) if len(ids) else np.zeros(0)
            keep = d <= radius
            ids, d = ids[keep], d[keep]
            order = np.lexsort((ids, d))
            out.append((ids[order], d[order]))
        if timer is not None:
            timer.add(time.perf_counter() - t0, len(c))
        return out


@dataclass
class MapIndices:
    descriptor: DescriptorIndex
    spatial: SpatialIndex

    @classmethod
    def build(cls, fmap: FeatureMap, algorithm: str = KDFOREST, forest: KDForestParams | None = None) -> "MapIndices":
        return cls(DescriptorIndex(fmap, algorithm, forest), SpatialIndex(fmap))
