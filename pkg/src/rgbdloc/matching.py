"""Data association between frame features and map features.

Three matchers feed the estimators:

* batched 1-NN matching in descriptor space, consuming frame features in
  descending detection strength;
* a greedy maximum-clique search over the pairwise rigid-consistency graph
  of the matches (rigid motion preserves inter-point distances);
* pose-guided spatial matching, which looks for each observed feature only
  near its predicted map position and gates candidates by descriptor
  distance against the feature's mapping-time ``match_std``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .errors import ExhaustedFeatures
from .feature_map import FeatureMap, ObservationFrame
from .geometry import Pose
from .index import DescriptorIndex, QueryTimer, SpatialIndex


class Correspondence(NamedTuple):
    obs_index: int
    map_id: int
    desc_distance: float


def to_arrays(matches: Sequence[Correspondence]):
    """``(obs_index, map_id, desc_distance)`` arrays for a list of matches."""
    if not matches:
        return np.zeros(0, np.int64), np.zeros(0, np.int64), np.zeros(0)
    obs, ids, dist = zip(*matches)
    return np.asarray(obs, np.int64), np.asarray(ids, np.int64), np.asarray(dist, float)


def match_batch_descriptor(frame: ObservationFrame, index: DescriptorIndex, start: int, batch: int,
                           timer: QueryTimer | None = None) -> list[Correspondence]:
    """1-NN matches for positions ``[start, start + batch)`` of the strength ordering."""
    if start < 0 or batch < 1:
        raise ValueError("need start >= 0 and batch >= 1")
    if start >= len(frame):
        raise ExhaustedFeatures(f"start {start} >= {len(frame)} frame features")
    sel = frame.strength_order()[start : start + batch]
    ids, dists = index.knn_arrays(frame.descriptors[sel], 1, timer)
    return [Correspondence(int(o), int(i[0]), float(d[0])) for o, i, d in zip(sel, ids, dists)]


@dataclass
class ConsistencyGraph:
    matches: list[Correspondence]
    adjacency: np.ndarray

    @classmethod
    def build(cls, matches: Sequence[Correspondence], frame: ObservationFrame, fmap: FeatureMap,
              epsilon: float) -> "ConsistencyGraph":
        obs, ids, _ = to_arrays(matches)
        p = frame.positions[obs]
        q = fmap.positions[ids]
        dp = np.linalg.norm(p[:, None, :] - p[None, :, :], axis=2)
        dq = np.linalg.norm(q[:, None, :] - q[None, :, :], axis=2)
        adj = np.abs(dp - dq) <= epsilon
        np.fill_diagonal(adj, True)
        return cls(list(matches), adj)

    @property
    def degrees(self) -> np.ndarray:
        return self.adjacency.sum(axis=1) - 1


def greedy_clique(adjacency: np.ndarray, desc_distance: np.ndarray, obs_index: np.ndarray) -> list[int]:
    """Greedy clique: start at the highest-degree vertex, keep adding the
    highest-degree vertex adjacent to every member.

    Ties fall to the smaller descriptor distance, then the smaller
    observation index. Returns member positions in insertion order.
    """
    n = len(adjacency)
    if n == 0:
        return []
    degree = adjacency.sum(axis=1) - 1
    # rank = position in (degree desc, distance asc, obs asc) order
    order = np.lexsort((obs_index, desc_distance, -degree))
    rank = np.empty(n, np.int64)
    rank[order] = np.arange(n)
    members = [int(order[0])]
    allowed = adjacency[order[0]].copy()
    allowed[order[0]] = False
    while allowed.any():
        cand = np.flatnonzero(allowed)
        best = int(cand[np.argmin(rank[cand])])
        members.append(best)
        allowed &= adjacency[best]
        allowed[best] = False
    return members


def max_consistent_subset(matches: Sequence[Correspondence], frame: ObservationFrame, fmap: FeatureMap,
                          epsilon: float) -> list[Correspondence]:
    """Largest (greedily found) set of pairwise rigid-consistent matches."""
    if not epsilon > 0:
        raise ValueError("epsilon must be > 0")
    if not matches:
        return []
    graph = ConsistencyGraph.build(matches, frame, fmap, epsilon)
    obs, _, dist = to_arrays(matches)
    return [graph.matches[i] for i in greedy_clique(graph.adjacency, dist, obs)]


def gate_thresholds(fmap: FeatureMap, ids: np.ndarray, kappa: float, floor: float) -> np.ndarray:
    return np.maximum(kappa * fmap.match_std[ids], floor)


def spatial_match(frame: ObservationFrame, coarse: Pose, spatial: SpatialIndex, fmap: FeatureMap,
                  radius: float, kappa: float, floor: float = 0.1,
                  timer: QueryTimer | None = None) -> list[Correspondence]:
    """Best descriptor-gated map candidate near each feature's predicted position.

    A candidate within ``radius`` of the prediction is admissible when its
    descriptor distance is at most ``max(kappa * match_std, floor)``; the
    admissible candidate with the smallest descriptor distance (then smallest
    id) is kept, so each observation yields at most one correspondence.
    """
    if not radius > 0 or not kappa > 0:
        raise ValueError("radius and kappa must be > 0")
    if len(frame) == 0 or len(fmap) == 0:
        return []
    predicted = coarse.apply(frame.positions)
    hits = spatial.radius_batch(predicted, radius, timer)
    counts = np.array([len(h[0]) for h in hits])
    if counts.sum() == 0:
        return []
    obs = np.repeat(np.arange(len(frame)), counts)
    cand = np.concatenate([h[0] for h in hits])
    diff = fmap.descriptors[cand] - frame.descriptors[obs]
    dd = np.sqrt(np.einsum("ij,ij->i", diff, diff))
    ok = dd <= gate_thresholds(fmap, cand, kappa, floor)
    obs, cand, dd = obs[ok], cand[ok], dd[ok]
    if not len(obs):
        return []
    order = np.lexsort((cand, dd, obs))
    obs, cand, dd = obs[order], cand[order], dd[order]
    first = np.ones(len(obs), bool)
    first[1:] = obs[1:] != obs[:-1]
    return [Correspondence(int(o), int(c), float(d)) for o, c, d in zip(obs[first], cand[first], dd[first])]
