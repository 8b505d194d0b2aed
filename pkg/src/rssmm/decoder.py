"""Max-log-probability trajectory decoding over the road graph.

A dynamic-programming (Viterbi) sweep maximizes the summed observation
and transition log-scores over all edge-feasible node sequences. The
two-stage variant first decodes on a coarse graph, then restricts a fine
graph to a corridor around the coarse path and decodes there, which keeps
the per-stage cost linear in sequence length for a bounded neighborhood
size.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import BaseStation, RssmmError, RssObservationSequence
from .mobility import AdaptiveMobilityModel, FixedMobilityModel, UnassignedSlot
from .propagation import PropagationModel, observation_score_matrix
from .road_graph import Corridor, RoadGraph, build_corridor, \
    build_transition_edges, hop_limit_for

__all__ = [
    "NoFeasiblePath",
    "DecodeProblem",
    "DecodedPath",
    "TwoStageSpec",
    "TwoStageResult",
    "decode_single_stage",
    "decode_two_stage",
    "make_transition_scorer",
    "FixedTransitionScores",
    "AdaptiveTransitionScores",
]


class NoFeasiblePath(RssmmError, ValueError):
    """Every state's cumulative score is -inf at some slot."""


@dataclass(frozen=True)
class FixedTransitionScores:
    """Slot-independent per-edge transition log-scores."""

    scores: np.ndarray  # aligned with graph.trans_src

    def edge_scores(self, t: int) -> np.ndarray:
        return self.scores


class AdaptiveTransitionScores:
    """Per-edge transition log-scores that depend on the slot's group."""

    def __init__(self, graph: RoadGraph, model: AdaptiveMobilityModel, delta: float):
        self.model = model
        self.speeds = graph.trans_hops * (graph.gamma / delta)
        self._cache: dict[int, np.ndarray] = {}

    def edge_scores(self, t: int) -> np.ndarray:
        if not (1 <= t <= len(self.model.group_of_slot)):
            raise UnassignedSlot(f"no group assigned for destination slot {t}")
        a = int(self.model.group_of_slot[t - 1])
        cached = self._cache.get(a)
        if cached is None:
            v = float(self.model.v_avr[a])
            s2 = float(self.model.sigma_v_sq[a])
            cached = -0.5 * math.log(2.0 * math.pi * s2) \
                - (self.speeds - v) ** 2 / (2.0 * s2)
            self._cache[a] = cached
        return cached


def make_transition_scorer(graph: RoadGraph,
                           mobility: FixedMobilityModel | AdaptiveMobilityModel,
                           delta: float):
    if graph.trans_ptr is None:
        raise RssmmError("transition edges not built; call build_transition_edges")
    if isinstance(mobility, FixedMobilityModel):
        speeds = graph.trans_hops * (graph.gamma / delta)
        scores = -0.5 * math.log(2.0 * math.pi * mobility.sigma_v_sq) \
            - (speeds - mobility.v_avr) ** 2 / (2.0 * mobility.sigma_v_sq)
        return FixedTransitionScores(scores=scores)
    if isinstance(mobility, AdaptiveMobilityModel):
        return AdaptiveTransitionScores(graph, mobility, delta)
    raise TypeError(f"unsupported mobility model {type(mobility).__name__}")


@dataclass(frozen=True)
class DecodeProblem:
    """A graph with transition structure, observation scores, and a
    transition scorer, ready for decoding."""

    graph: RoadGraph
    obs_scores: np.ndarray  # (T, N) log-probabilities; empty slots all zero
    transitions: FixedTransitionScores | AdaptiveTransitionScores

    def __post_init__(self):
        if self.graph.trans_ptr is None:
            raise RssmmError("transition edges not built; call build_transition_edges")
        if self.obs_scores.ndim != 2 or self.obs_scores.shape[1] != self.graph.n_nodes:
            raise ValueError(
                f"obs_scores shape {self.obs_scores.shape} does not match "
                f"{self.graph.n_nodes} nodes"
            )

    @property
    def t_total(self) -> int:
        return int(self.obs_scores.shape[0])


@dataclass(frozen=True)
class DecodedPath:
    """One node per slot, with the score split it was selected under."""

    nodes: np.ndarray        # (T,) node ids
    positions: np.ndarray    # (T, 2)
    total_score: float
    obs_scores: np.ndarray   # (T,)
    trans_scores: np.ndarray  # (T - 1,)


def decode_single_stage(problem: DecodeProblem) -> DecodedPath:
    """Highest-scoring edge-feasible node sequence, by dynamic programming.

    Per slot, each state's best predecessor is searched only over its
    transition neighborhood. Ties are broken toward the lowest node index
    both along the sweep and at the terminal state, so repeated runs are
    bit-identical.
    """
    graph = problem.graph
    t_total = problem.t_total
    n = graph.n_nodes
    if n == 0:
        raise NoFeasiblePath("graph has no nodes")
    ptr = graph.trans_ptr
    src = graph.trans_src
    n_edges = src.shape[0]
    seg_starts = ptr[:-1]
    seg_len = np.diff(ptr)
    empty_seg = seg_len == 0
    edge_pos = np.arange(n_edges, dtype=np.int64)

    scores = problem.obs_scores[0].astype(float).copy()
    if not np.any(scores > -np.inf):
        raise NoFeasiblePath("all states are -inf at slot 0")
    back = np.zeros((t_total, n), dtype=np.int64)

    # reduceat needs in-range offsets; empty segments are fixed up after.
    red_starts = np.minimum(seg_starts, max(n_edges - 1, 0))

    for t in range(1, t_total):
        trans = problem.transitions.edge_scores(t)
        if n_edges:
            cand = scores[src] + trans
            seg_max = np.maximum.reduceat(cand, red_starts)
            hit = cand == np.repeat(seg_max, seg_len)
            first = np.minimum.reduceat(np.where(hit, edge_pos, n_edges), red_starts)
        else:
            seg_max = np.full(n, -np.inf)
            first = np.full(n, -1, dtype=np.int64)
        if np.any(empty_seg):
            seg_max = np.where(empty_seg, -np.inf, seg_max)
            first = np.where(empty_seg, -1, first)
        back[t] = np.where(first >= 0, src[np.maximum(first, 0)] if n_edges else -1, -1)
        scores = seg_max + problem.obs_scores[t]
        if not np.any(scores > -np.inf):
            raise NoFeasiblePath(f"all states are -inf at slot {t}")

    end = int(np.argmax(scores))
    total = float(scores[end])
    path = np.empty(t_total, dtype=np.int64)
    path[t_total - 1] = end
    for t in range(t_total - 1, 0, -1):
        end = int(back[t, end])
        if end < 0:
            raise NoFeasiblePath(f"state at slot {t} has no predecessor")
        path[t - 1] = end

    obs_breakdown = problem.obs_scores[np.arange(t_total), path].astype(float)
    trans_breakdown = np.empty(max(t_total - 1, 0))
    for t in range(1, t_total):
        trans = problem.transitions.edge_scores(t)
        lo, hi = ptr[path[t]], ptr[path[t] + 1]
        pos = np.searchsorted(src[lo:hi], path[t - 1])
        trans_breakdown[t - 1] = trans[lo + pos]
    return DecodedPath(
        nodes=path,
        positions=graph.nodes[path],
        total_score=total,
        obs_scores=obs_breakdown,
        trans_scores=trans_breakdown,
    )


@dataclass
class TwoStageSpec:
    """Graphs and limits shared by both decoding stages.

    `coarse` must already have transition edges; `fine` only needs base
    adjacency, because its transition structure is built inside the
    corridor for each decode. Corridor subgraphs are memoized on the
    member set, so repeated decodes over the same corridor (common once
    alternating optimization stabilizes) skip the rebuild.
    """

    coarse: RoadGraph
    fine: RoadGraph
    v_max: float
    delta: float
    corridor_radius: float
    slack: int = 1
    _sub_cache: tuple[bytes, RoadGraph] | None = None


@dataclass(frozen=True)
class TwoStageResult:
    stage1: DecodedPath   # on the coarse graph
    stage2: DecodedPath   # on the fine graph (original node ids)
    corridor: Corridor
    obs_dropped: int


def _expand_members(fine: RoadGraph, members: np.ndarray, depth: int) -> np.ndarray:
    """Members plus everything within `depth` base hops of them.

    This padding makes hop counts inside the corridor subgraph agree with
    the full fine graph for all pairs within the transition reach, so
    decoded scores equal the full-graph objective values.
    """
    if depth <= 0:
        return members
    dist = {int(m): 0 for m in members}
    frontier = list(int(m) for m in members)
    while frontier:
        nxt = []
        for u in frontier:
            du = dist[u]
            if du >= depth:
                continue
            for v in fine.base_adj[fine.base_ptr[u]:fine.base_ptr[u + 1]]:
                v = int(v)
                if v not in dist:
                    dist[v] = du + 1
                    nxt.append(v)
        frontier = nxt
    return np.asarray(sorted(dist), dtype=np.int64)


def decode_two_stage(spec: TwoStageSpec,
                     seq: RssObservationSequence,
                     stations: dict[int, BaseStation],
                     prop_model: PropagationModel,
                     mobility: FixedMobilityModel | AdaptiveMobilityModel,
                     extra_corridor_points: np.ndarray | None = None,
                     closure_hops: int | None = None) -> TwoStageResult:
    """Coarse decode, corridor restriction, fine decode.

    `extra_corridor_points` are appended to the coarse path when growing
    the corridor; passing the previous iteration's trajectory there keeps
    alternating optimization monotone, since the refined search space then
    always contains the incumbent path. The corridor is padded by
    `closure_hops` base hops (default: the transition reach) so in-corridor
    hop counts match the full fine graph.
    """
    coarse_obs = observation_score_matrix(prop_model, stations, seq, spec.coarse.nodes)
    coarse_problem = DecodeProblem(
        graph=spec.coarse,
        obs_scores=coarse_obs.matrix,
        transitions=make_transition_scorer(spec.coarse, mobility, spec.delta),
    )
    stage1 = decode_single_stage(coarse_problem)

    seed_points = stage1.positions
    if extra_corridor_points is not None and len(extra_corridor_points):
        seed_points = np.vstack([seed_points, np.atleast_2d(extra_corridor_points)])
    corridor = build_corridor(spec.fine, seed_points, spec.corridor_radius)
    k_fine = hop_limit_for(spec.v_max, spec.delta, spec.fine.gamma, spec.slack)
    if closure_hops is None:
        closure_hops = k_fine - 1
    if closure_hops > 0:
        corridor = Corridor(
            fine=spec.fine,
            members=_expand_members(spec.fine, corridor.members, closure_hops),
            radius=corridor.radius,
        )
    key = corridor.members.tobytes()
    if spec._sub_cache is not None and spec._sub_cache[0] == key:
        sub = spec._sub_cache[1]
    else:
        sub = build_transition_edges(corridor.subgraph(), spec.v_max, spec.delta,
                                     slack=spec.slack)
        spec._sub_cache = (key, sub)
    fine_obs = observation_score_matrix(prop_model, stations, seq, sub.nodes)
    fine_problem = DecodeProblem(
        graph=sub,
        obs_scores=fine_obs.matrix,
        transitions=make_transition_scorer(sub, mobility, spec.delta),
    )
    decoded = decode_single_stage(fine_problem)
    stage2 = DecodedPath(
        nodes=corridor.members[decoded.nodes],
        positions=decoded.positions,
        total_score=decoded.total_score,
        obs_scores=decoded.obs_scores,
        trans_scores=decoded.trans_scores,
    )
    return TwoStageResult(stage1=stage1, stage2=stage2, corridor=corridor,
                          obs_dropped=fine_obs.dropped)
