"""Vehicle mobility models over the road graph.

A transition between consecutive slots is scored by the Gaussian
log-density of its implied speed, d(i, j) / delta, where d is the
along-road distance. The fixed model uses one (v_avr, sigma_v^2) pair
throughout; the adaptive model groups transitions by how fast the RSS
fingerprint changes and fits one pair per group.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import RssmmError, RssObservationSequence, SolverConfig, speed_variance_from_eta
from .road_graph import RoadGraph, routine_distance

__all__ = [
    "NotAnEdge",
    "UnassignedSlot",
    "AllUndefined",
    "FixedMobilityModel",
    "AdaptiveMobilityModel",
    "SIGMA_V_MIN",
    "normalized_signal_differences",
    "group_time_slots",
    "transition_log_prob_fixed",
    "transition_log_prob_adaptive",
    "fit_mobility",
]

# Floor (m/s) on per-group speed std so zero-variance groups keep finite
# log-densities; the floor applies to the variance as SIGMA_V_MIN**2.
SIGMA_V_MIN = 0.1


class NotAnEdge(RssmmError, ValueError):
    """The node pair is not a transition edge of the graph."""


class UnassignedSlot(RssmmError, KeyError):
    """No mobility group is assigned to this transition slot."""


class AllUndefined(RssmmError, ValueError):
    """No consecutive slot pair shares a base station."""


@dataclass(frozen=True)
class FixedMobilityModel:
    """Single Gaussian speed model N(v_avr, sigma_v_sq)."""

    v_avr: float
    v_max: float
    eta: float
    sigma_v_sq: float

    def __post_init__(self):
        if self.sigma_v_sq <= 0:
            raise ValueError(f"sigma_v_sq must be positive, got {self.sigma_v_sq}")

    @classmethod
    def from_config(cls, config: SolverConfig) -> "FixedMobilityModel":
        s2 = speed_variance_from_eta(config.v_max, config.v_avr, config.eta,
                                     mode=config.eta_mode)
        return cls(v_avr=config.v_avr, v_max=config.v_max, eta=config.eta,
                   sigma_v_sq=s2)


@dataclass(frozen=True)
class AdaptiveMobilityModel:
    """Per-group Gaussian speed models with a slot-to-group assignment.

    group_of_slot[s] is the group of the transition from slot s to slot
    s + 1 (0-based, length T - 1).
    """

    group_count: int
    group_of_slot: np.ndarray
    v_avr: np.ndarray     # (A,)
    sigma_v_sq: np.ndarray  # (A,)

    def __post_init__(self):
        g = np.asarray(self.group_of_slot, dtype=np.int64)
        v = np.asarray(self.v_avr, dtype=float)
        s2 = np.asarray(self.sigma_v_sq, dtype=float)
        if v.shape != (self.group_count,) or s2.shape != (self.group_count,):
            raise ValueError("per-group parameter arrays must have length group_count")
        if np.any(s2 < SIGMA_V_MIN ** 2 - 1e-15):
            raise ValueError("group variances must respect the floor")
        if g.size and (g.min() < 0 or g.max() >= self.group_count):
            raise ValueError("group assignments out of range")
        for name, arr in (("group_of_slot", g), ("v_avr", v), ("sigma_v_sq", s2)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)


def normalized_signal_differences(seq: RssObservationSequence) -> np.ndarray:
    """Mean absolute RSS change over stations common to adjacent slots.

    Returns one value per transition (length T - 1). Transitions whose
    slot pair shares no station are undefined and are filled from the
    nearest defined transition in time (earlier wins ties), so the
    grouping downstream always sees a full assignment.
    """
    t_total = len(seq)
    if t_total < 2:
        raise ValueError(f"need at least two slots, got {t_total}")
    rho = np.full(t_total - 1, np.nan)
    for t in range(t_total - 1):
        cur = {o.bs_id: o.rss for o in seq.slots[t]}
        nxt = {o.bs_id: o.rss for o in seq.slots[t + 1]}
        common = cur.keys() & nxt.keys()
        if common:
            rho[t] = sum(abs(nxt[q] - cur[q]) for q in common) / len(common)
    defined = np.flatnonzero(~np.isnan(rho))
    if defined.size == 0:
        raise AllUndefined("no consecutive slot pair shares a base station")
    if defined.size < rho.size:
        undefined = np.flatnonzero(np.isnan(rho))
        gaps = np.abs(undefined[:, None] - defined[None, :])
        # argmin takes the first minimum, and `defined` is ascending, so
        # ties resolve to the earlier defined transition.
        rho[undefined] = rho[defined[np.argmin(gaps, axis=1)]]
    return rho


def group_time_slots(rho: np.ndarray, group_count: int) -> np.ndarray:
    """Partition transitions into equal-width bins of the rho range.

    Bin a (0-based) covers [rho_min + a*w, rho_min + (a+1)*w) with
    w = (rho_max - rho_min) / A; the maximum closes into the last bin.
    A degenerate range (or A = 1) puts everything in bin 0.
    """
    if group_count < 1:
        raise ValueError(f"group_count must be >= 1, got {group_count}")
    rho = np.asarray(rho, dtype=float)
    lo, hi = float(rho.min()), float(rho.max())
    if group_count == 1 or hi <= lo:
        return np.zeros(rho.shape, dtype=np.int64)
    width = (hi - lo) / group_count
    bounds = lo + width * np.arange(1, group_count)
    groups = np.searchsorted(bounds, rho, side="right")
    return groups.astype(np.int64)


def _gauss_log(speed: float, v_avr: float, sigma_sq: float) -> float:
    return -0.5 * math.log(2.0 * math.pi * sigma_sq) \
        - (speed - v_avr) ** 2 / (2.0 * sigma_sq)


def _edge_distance(graph: RoadGraph, i: int, j: int) -> float:
    if graph.trans_ptr is None:
        raise RssmmError("transition edges not built; call build_transition_edges")
    hops = graph.edge_hops(i, j)
    if hops is None:
        raise NotAnEdge(f"({i}, {j}) is not a transition edge")
    return hops * graph.gamma


def transition_log_prob_fixed(model: FixedMobilityModel, graph: RoadGraph,
                              i: int, j: int, delta: float) -> float:
    """Gaussian log-density of the speed implied by moving i -> j."""
    graph._check(i)
    graph._check(j)
    d = _edge_distance(graph, i, j)
    return _gauss_log(d / delta, model.v_avr, model.sigma_v_sq)


def transition_log_prob_adaptive(model: AdaptiveMobilityModel, graph: RoadGraph,
                                 i: int, j: int, t: int, delta: float) -> float:
    """Like the fixed score, with the group parameters of transition t-1.

    `t` is the 0-based destination slot; the transition into slot t is
    assignment index t - 1.
    """
    graph._check(i)
    graph._check(j)
    if not (1 <= t <= len(model.group_of_slot)):
        raise UnassignedSlot(f"no group assigned for destination slot {t}")
    d = _edge_distance(graph, i, j)
    a = int(model.group_of_slot[t - 1])
    return _gauss_log(d / delta, float(model.v_avr[a]), float(model.sigma_v_sq[a]))


def fit_mobility(trajectory_nodes, graph: RoadGraph, group_of_slot,
                 delta: float, group_count: int) -> AdaptiveMobilityModel:
    """Closed-form per-group speed statistics of a graph trajectory.

    Each group's mean speed is the average of d(x_t, x_{t+1}) / delta
    over its transitions, and its variance is the mean squared deviation
    floored at SIGMA_V_MIN**2. Groups without any (finite-speed)
    transition inherit the global statistics.
    """
    nodes = np.asarray(trajectory_nodes, dtype=np.int64)
    groups = np.asarray(group_of_slot, dtype=np.int64)
    if len(nodes) < 2:
        raise ValueError("need at least two trajectory nodes")
    if groups.shape[0] != len(nodes) - 1:
        raise ValueError(
            f"group assignment length {groups.shape[0]} != transitions {len(nodes) - 1}"
        )
    speeds = np.empty(len(nodes) - 1)
    for t in range(len(nodes) - 1):
        speeds[t] = routine_distance(graph, int(nodes[t]), int(nodes[t + 1])) / delta
    finite = np.isfinite(speeds)
    if not np.any(finite):
        raise ValueError("no finite-speed transition in the trajectory")
    global_mean = float(speeds[finite].mean())
    global_var = float(np.mean((speeds[finite] - global_mean) ** 2))
    floor = SIGMA_V_MIN ** 2
    v_avr = np.empty(group_count)
    sigma_sq = np.empty(group_count)
    for a in range(group_count):
        sel = (groups == a) & finite
        if not np.any(sel):
            v_avr[a] = global_mean
            sigma_sq[a] = max(global_var, floor)
            continue
        v_avr[a] = float(speeds[sel].mean())
        sigma_sq[a] = max(float(np.mean((speeds[sel] - v_avr[a]) ** 2)), floor)
    return AdaptiveMobilityModel(group_count=group_count, group_of_slot=groups,
                                 v_avr=v_avr, sigma_v_sq=sigma_sq)
