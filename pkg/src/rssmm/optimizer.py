"""Alternating optimization drivers for trajectory reconstruction.

Both drivers initialize from the speed-constrained rough trajectory,
snap it to the fine graph, then alternate closed-form model fitting with
two-stage decoding until the node sequence stops changing. The corridor
of each decode is seeded with the previous trajectory in addition to the
coarse path, and padded by one transition neighborhood of base hops, so
the refined search space always contains the incumbent path and every
accepted iteration can only raise the joint objective.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import BaseStation, RssmmError, RssObservationSequence, SolverConfig, \
    Trajectory
from .decoder import TwoStageSpec, decode_two_stage
from .mobility import AdaptiveMobilityModel, FixedMobilityModel, SIGMA_V_MIN, \
    fit_mobility, group_time_slots, normalized_signal_differences
from .msr import MsrProblem, MsrSolution, anchor_estimates_nearest, \
    anchor_estimates_weighted, solve as msr_solve
from .propagation import LabeledRssSet, PathLossParams, PropagationModel, \
    SIGMA_MIN_DB, _clamped_distance, fit_propagation, label_observations, \
    observation_log_prob
from .road_graph import RoadGraph, RoadNetwork, _bfs_hops, build_nodes, \
    build_transition_edges, hop_limit_for

__all__ = [
    "InfeasibleTrajectory",
    "IterationRecord",
    "Diagnostics",
    "HreResult",
    "HreaResult",
    "joint_log_likelihood",
    "run_hre",
    "run_hrea",
]


class InfeasibleTrajectory(RssmmError, ValueError):
    """A consecutive node pair is not a transition edge."""


@dataclass(frozen=True)
class IterationRecord:
    iteration: int
    objective: float
    changed_nodes: int
    corridor_size: int
    obs_dropped: int


@dataclass(frozen=True)
class Diagnostics:
    iterations: tuple[IterationRecord, ...]
    converged: bool
    msr: MsrSolution

    @property
    def non_convergence(self) -> bool:
        return not self.converged

    def objectives(self) -> np.ndarray:
        return np.array([r.objective for r in self.iterations])


@dataclass(frozen=True)
class HreResult:
    trajectory: Trajectory
    nodes: np.ndarray
    theta: PropagationModel
    diagnostics: Diagnostics


@dataclass(frozen=True)
class HreaResult:
    trajectory: Trajectory
    nodes: np.ndarray
    theta: PropagationModel
    phi: AdaptiveMobilityModel
    diagnostics: Diagnostics


def joint_log_likelihood(seq: RssObservationSequence,
                         trajectory_nodes,
                         theta: PropagationModel,
                         stations: dict[int, BaseStation],
                         graph: RoadGraph,
                         mobility: FixedMobilityModel | AdaptiveMobilityModel,
                         delta: float,
                         hop_limit: int | None = None) -> float:
    """Joint observation + transition log-likelihood of a graph trajectory.

    The uniform initial-state term is a constant and is dropped.
    Readings from stations absent from `theta` are dropped, matching the
    decoder. Raises InfeasibleTrajectory when a consecutive pair is
    farther than the hop limit on `graph`'s base adjacency.
    """
    nodes = np.asarray(trajectory_nodes, dtype=np.int64)
    if nodes.shape[0] != len(seq):
        raise ValueError(f"trajectory length {nodes.shape[0]} != sequence {len(seq)}")
    k = hop_limit if hop_limit is not None else graph.hop_limit
    if k is None:
        raise ValueError("graph has no hop limit; pass hop_limit explicitly")
    total = float(observation_log_prob(theta, stations, seq.slots[0],
                                       graph.nodes[nodes[0]], on_unknown="drop"))
    adaptive = isinstance(mobility, AdaptiveMobilityModel)
    for t in range(1, nodes.shape[0]):
        i, j = int(nodes[t - 1]), int(nodes[t])
        if i == j:
            hops = 0
        else:
            dist = _bfs_hops(graph.base_ptr, graph.base_adj, i,
                             max_depth=k - 1, target=j)
            hops = int(dist[j])
            if hops < 0:
                raise InfeasibleTrajectory(
                    f"nodes {i} -> {j} at slot {t} exceed the {k - 1}-hop reach"
                )
        speed = hops * graph.gamma / delta
        if adaptive:
            a = int(mobility.group_of_slot[t - 1])
            v, s2 = float(mobility.v_avr[a]), float(mobility.sigma_v_sq[a])
        else:
            v, s2 = mobility.v_avr, mobility.sigma_v_sq
        trans = -0.5 * math.log(2.0 * math.pi * s2) - (speed - v) ** 2 / (2.0 * s2)
        obs = observation_log_prob(theta, stations, seq.slots[t],
                                   graph.nodes[nodes[t]], on_unknown="drop")
        total = (total + trans) + obs
    return total


def _pooled_fallback(labeled: LabeledRssSet,
                     stations: dict[int, BaseStation]) -> PathLossParams | None:
    """One shared path-loss line pooled over every station's samples.

    Used to give stations whose own samples are rank deficient (all at
    one distance) a usable entry from the first iteration on, which keeps
    the set of scored readings fixed across iterations.
    """
    logd_parts = []
    rss_parts = []
    for bs_id, (pos, rss) in labeled.samples.items():
        d = _clamped_distance(stations[bs_id].position, pos)
        logd_parts.append(np.log10(d))
        rss_parts.append(np.asarray(rss, dtype=float))
    if not logd_parts:
        return None
    logd = np.concatenate(logd_parts)
    y = np.concatenate(rss_parts)
    n = float(len(y))
    s_l, s_ll = logd.sum(), float(logd @ logd)
    det = n * s_ll - s_l * s_l
    if n < 2 or det <= 1e-12 * max(n * s_ll, 1.0):
        return None
    alpha = (n * float(logd @ y) - s_l * y.sum()) / det
    beta = (s_ll * y.sum() - s_l * float(logd @ y)) / det
    resid = y - beta - alpha * logd
    sigma = max(math.sqrt(float(resid @ resid) / n), SIGMA_MIN_DB)
    return PathLossParams(alpha=alpha, beta=beta, sigma=sigma)


def _fit_theta(seq: RssObservationSequence, positions: np.ndarray,
               stations: dict[int, BaseStation],
               previous: PropagationModel | None) -> PropagationModel:
    """Per-station refit with carry-over and pooled fallback.

    Stations refit from the current labeling override previous entries;
    stations that cannot be fitted keep their previous entry, or receive
    the pooled fallback on the first iteration. The station universe is
    therefore fixed from the first fit, keeping objectives comparable
    across iterations.
    """
    labeled = label_observations(seq, positions)
    fitted = fit_propagation(labeled, stations).merged_over(previous)
    missing = [bs_id for bs_id in labeled.samples if bs_id not in fitted.params]
    if missing:
        fallback = _pooled_fallback(labeled, stations)
        if fallback is not None:
            params = dict(fitted.params)
            for bs_id in missing:
                params[bs_id] = fallback
            fitted = PropagationModel(params=params, skipped=fitted.skipped)
    return fitted


@dataclass(frozen=True)
class _Pipeline:
    coarse: RoadGraph
    fine: RoadGraph
    spec: TwoStageSpec
    k_fine: int


def _build_pipeline(network: RoadNetwork, config: SolverConfig,
                    delta: float) -> _Pipeline:
    coarse = build_transition_edges(
        build_nodes(network, config.gamma_coarse),
        config.v_max, delta, slack=config.hop_slack,
    )
    fine = build_nodes(network, config.gamma_fine)
    spec = TwoStageSpec(
        coarse=coarse, fine=fine, v_max=config.v_max, delta=delta,
        corridor_radius=config.effective_corridor_radius(),
        slack=config.hop_slack,
    )
    return _Pipeline(coarse=coarse, fine=fine, spec=spec,
                     k_fine=hop_limit_for(config.v_max, delta, config.gamma_fine,
                                          config.hop_slack))


def _run(seq: RssObservationSequence, network: RoadNetwork,
         stations: dict[int, BaseStation], config: SolverConfig,
         adaptive: bool, anchor: str = "nearest"):
    delta = seq.delta
    pipeline = _build_pipeline(network, config, delta)
    fine = pipeline.fine

    if anchor == "nearest":
        anchors = anchor_estimates_nearest(seq, stations)
    elif anchor == "weighted":
        anchors = anchor_estimates_weighted(seq, stations)
    else:
        raise ValueError(f"anchor must be 'nearest' or 'weighted', got {anchor!r}")
    msr_solution = msr_solve(MsrProblem(anchors=anchors,
                                        step_cap=config.v_max * delta))
    prev_nodes = fine.nearest_node(msr_solution.trajectory.positions)

    t_total = len(seq)
    fixed_mobility = FixedMobilityModel.from_config(config)
    groups = None
    if adaptive and t_total >= 2:
        rho = normalized_signal_differences(seq)
        groups = group_time_slots(rho, config.group_count)

    theta: PropagationModel | None = None
    phi: AdaptiveMobilityModel | None = None
    records: list[IterationRecord] = []
    converged = False
    stage2 = None

    for m in range(1, config.max_outer_iters + 1):
        theta = _fit_theta(seq, fine.nodes[prev_nodes], stations, theta)
        if adaptive and groups is not None:
            phi = fit_mobility(prev_nodes, fine, groups, delta, config.group_count)
            mobility = phi
        else:
            mobility = fixed_mobility
            if adaptive:
                phi = AdaptiveMobilityModel(
                    group_count=config.group_count,
                    group_of_slot=np.empty(0, dtype=np.int64),
                    v_avr=np.full(config.group_count, config.v_avr),
                    sigma_v_sq=np.full(
                        config.group_count,
                        max(fixed_mobility.sigma_v_sq, SIGMA_V_MIN ** 2)),
                )
        result = decode_two_stage(
            pipeline.spec, seq, stations, theta, mobility,
            extra_corridor_points=fine.nodes[prev_nodes],
            closure_hops=pipeline.k_fine - 1,
        )
        stage2 = result.stage2
        new_nodes = stage2.nodes
        changed = int(np.count_nonzero(new_nodes != prev_nodes))
        records.append(IterationRecord(
            iteration=m,
            objective=stage2.total_score,
            changed_nodes=changed,
            corridor_size=int(len(result.corridor.members)),
            obs_dropped=result.obs_dropped,
        ))
        if changed == 0:
            converged = True
            break
        prev_nodes = new_nodes

    diagnostics = Diagnostics(iterations=tuple(records), converged=converged,
                              msr=msr_solution)
    trajectory = Trajectory(positions=stage2.positions)
    if adaptive:
        return HreaResult(trajectory=trajectory, nodes=stage2.nodes, theta=theta,
                          phi=phi, diagnostics=diagnostics)
    return HreResult(trajectory=trajectory, nodes=stage2.nodes, theta=theta,
                     diagnostics=diagnostics)


def run_hre(seq: RssObservationSequence, network: RoadNetwork,
            stations: dict[int, BaseStation], config: SolverConfig,
            anchor: str = "nearest") -> HreResult:
    """Alternate propagation fitting and decoding under fixed mobility.

    Initializes with the speed-constrained rough trajectory snapped to
    the fine graph, fits the propagation model on the current labeling,
    decodes, and repeats until the node sequence is unchanged or the
    iteration cap is reached (reported via diagnostics.converged).
    """
    return _run(seq, network, stations, config, adaptive=False, anchor=anchor)


def run_hrea(seq: RssObservationSequence, network: RoadNetwork,
             stations: dict[int, BaseStation], config: SolverConfig,
             anchor: str = "nearest") -> HreaResult:
    """Like run_hre, with per-group mobility refitting each iteration.

    Transitions are grouped once up front by normalized signal
    difference; each iteration refits the per-group speed statistics from
    the current trajectory before decoding with the adaptive scores.
    """
    return _run(seq, network, stations, config, adaptive=True, anchor=anchor)
