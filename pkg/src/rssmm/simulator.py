"""Synthetic scenario generation.

Builds deterministic road networks, drives a vehicle along them under a
commanded speed profile, and samples RSS readings from randomly placed
stations under the log-distance model, with optional random data removal.
Everything is driven by one seeded generator, so a seed fully determines
a scenario.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import BaseStation, RssmmError, RssObservation, RssObservationSequence, \
    Trajectory
from .propagation import MIN_DISTANCE_M
from .road_graph import RoadNetwork

__all__ = [
    "BadParams",
    "Scenario",
    "gen_network",
    "gen_stations",
    "gen_drive",
    "sample_rss",
    "apply_missing",
    "gen_scenario",
    "constant_profile",
    "regime_profile",
    "wandering_profile",
]


class BadParams(RssmmError, ValueError):
    """Invalid generator parameters."""


@dataclass(frozen=True)
class Scenario:
    network: RoadNetwork
    stations: tuple[BaseStation, ...]
    truth: Trajectory
    speeds: np.ndarray  # commanded speed into each slot; speeds[0] is 0
    seq: RssObservationSequence
    theta_true: dict[int, tuple[float, float, float]]  # id -> (alpha, beta, sigma)
    seed: int


def gen_network(kind: str, **params) -> RoadNetwork:
    """Deterministic road network of the requested kind.

    grid: rows x cols intersections spaced `spacing` meters, one polyline
    per row and per column. ring_radial: a closed ring of `spokes`
    vertices at `radius` plus one spoke road from the center to each.
    """
    if kind == "grid":
        rows = int(params.get("rows", 5))
        cols = int(params.get("cols", 5))
        spacing = float(params.get("spacing", 200.0))
        if rows < 2 or cols < 2 or spacing <= 0:
            raise BadParams(f"grid needs rows, cols >= 2 and spacing > 0, "
                            f"got {rows}x{cols} @ {spacing}")
        polys = []
        for r in range(rows):
            polys.append([(c * spacing, r * spacing) for c in range(cols)])
        for c in range(cols):
            polys.append([(c * spacing, r * spacing) for r in range(rows)])
        return RoadNetwork(polylines=tuple(np.array(p, dtype=float) for p in polys))
    if kind == "ring_radial":
        spokes = int(params.get("spokes", 6))
        radius = float(params.get("radius", 400.0))
        if spokes < 3 or radius <= 0:
            raise BadParams(f"ring_radial needs spokes >= 3 and radius > 0, "
                            f"got {spokes}, {radius}")
        ring_pts = [(radius * math.cos(2 * math.pi * i / spokes),
                     radius * math.sin(2 * math.pi * i / spokes))
                    for i in range(spokes)]
        ring = ring_pts + [ring_pts[0]]
        polys = [np.array(ring, dtype=float)]
        for pt in ring_pts:
            polys.append(np.array([(0.0, 0.0), pt], dtype=float))
        return RoadNetwork(polylines=tuple(polys))
    raise BadParams(f"unknown network kind {kind!r}")


def gen_stations(network: RoadNetwork, count: int, rng: np.random.Generator,
                 margin: float = 150.0, placement: str = "uniform",
                 lateral: tuple[float, float] = (8.0, 60.0)) -> tuple[BaseStation, ...]:
    """Station deployment over the network.

    "uniform" scatters stations over the expanded bounding box;
    "roadside" puts each at a random arclength of a random road, offset
    laterally by a distance drawn from `lateral`, mimicking cells that
    line streets.
    """
    if count < 1:
        raise BadParams(f"need at least one station, got {count}")
    if placement == "uniform":
        lo, hi = network.bounds()
        pts = rng.uniform(lo - margin, hi + margin, size=(count, 2))
        return tuple(BaseStation(id=i, position=pts[i]) for i in range(count))
    if placement != "roadside":
        raise BadParams(f"unknown placement {placement!r}")
    polys = network.polylines
    lengths = np.array([
        float(np.linalg.norm(np.diff(p, axis=0), axis=1).sum()) for p in polys
    ])
    probs = lengths / lengths.sum()
    out = []
    for i in range(count):
        poly = polys[int(rng.choice(len(polys), p=probs))]
        seg = np.diff(poly, axis=0)
        seg_len = np.linalg.norm(seg, axis=1)
        cum = np.concatenate([[0.0], np.cumsum(seg_len)])
        s = rng.uniform(0.0, cum[-1])
        j = min(int(np.searchsorted(cum[1:], s)), len(seg_len) - 1)
        frac = (s - cum[j]) / seg_len[j] if seg_len[j] > 0 else 0.0
        base = poly[j] + frac * seg[j]
        tangent = seg[j] / seg_len[j]
        normal = np.array([-tangent[1], tangent[0]])
        offset = rng.uniform(*lateral) * (1.0 if rng.random() < 0.5 else -1.0)
        out.append(BaseStation(id=i, position=base + offset * normal))
    return tuple(out)


def constant_profile(t_total: int, speed: float) -> np.ndarray:
    out = np.full(t_total, float(speed))
    out[0] = 0.0
    return out


def regime_profile(t_total: int, speeds, segment_len: int) -> np.ndarray:
    """Piecewise-constant profile cycling through `speeds`."""
    if segment_len < 1:
        raise BadParams(f"segment_len must be >= 1, got {segment_len}")
    speeds = list(speeds)
    out = np.empty(t_total)
    for t in range(t_total):
        out[t] = speeds[(t // segment_len) % len(speeds)]
    out[0] = 0.0
    return out


def wandering_profile(t_total: int, v_avr: float, v_max: float,
                      rng: np.random.Generator, pull: float = 0.05,
                      jitter: float = 0.8) -> np.ndarray:
    """Mean-reverting random speed walk around v_avr, clipped to the cap."""
    out = np.empty(t_total)
    v = v_avr
    lo, hi = 0.0, 0.98 * v_max
    for t in range(t_total):
        v = v + pull * (v_avr - v) + jitter * rng.standard_normal()
        v = min(max(v, lo), hi)
        out[t] = v
    out[0] = 0.0
    return out


class _MicroGraph:
    """Exact-vertex graph over polyline points, for driving simulation."""

    def __init__(self, network: RoadNetwork):
        index: dict[tuple[float, float], int] = {}
        self.points: list[np.ndarray] = []
        self.adj: dict[int, list[int]] = {}

        def vertex(pt) -> int:
            key = (float(pt[0]), float(pt[1]))
            if key not in index:
                index[key] = len(self.points)
                self.points.append(np.asarray(pt, dtype=float))
                self.adj[index[key]] = []
            return index[key]

        for poly in network.polylines:
            ids = [vertex(p) for p in poly]
            for a, b in zip(ids[:-1], ids[1:]):
                if a == b:
                    continue
                if b not in self.adj[a]:
                    self.adj[a].append(b)
                if a not in self.adj[b]:
                    self.adj[b].append(a)
        for v in self.adj:
            self.adj[v].sort()

    def edge_length(self, a: int, b: int) -> float:
        return float(np.linalg.norm(self.points[a] - self.points[b]))


def gen_drive(network: RoadNetwork, slots: int, delta: float,
              speed_profile: np.ndarray,
              rng: np.random.Generator) -> tuple[Trajectory, np.ndarray]:
    """Random walk along the network under the commanded speed profile.

    The vehicle advances exactly speed * delta meters of arclength per
    slot, choosing uniformly among continuing roads at each junction and
    never making an immediate U-turn unless at a dead end. Returns the
    per-slot positions and the realized (= commanded) speeds.
    """
    if slots < 1:
        raise BadParams(f"slots must be >= 1, got {slots}")
    profile = np.asarray(speed_profile, dtype=float)
    if profile.shape[0] != slots:
        raise BadParams(f"speed profile length {profile.shape[0]} != slots {slots}")
    if np.any(profile < 0):
        raise BadParams("speeds must be nonnegative")
    micro = _MicroGraph(network)
    starts = [v for v in sorted(micro.adj) if micro.adj[v]]
    if not starts:
        raise BadParams("network has no traversable edges")
    u = starts[int(rng.integers(len(starts)))]
    v = micro.adj[u][int(rng.integers(len(micro.adj[u])))]
    along = 0.0

    positions = np.empty((slots, 2))
    positions[0] = micro.points[u]
    for t in range(1, slots):
        advance = float(profile[t]) * delta
        while advance > 0.0:
            remaining = micro.edge_length(u, v) - along
            if advance < remaining:
                along += advance
                advance = 0.0
            else:
                advance -= remaining
                arrived = v
                options = [w for w in micro.adj[arrived] if w != u]
                if not options:  # dead end: U-turn
                    options = [u]
                u = arrived
                v = options[int(rng.integers(len(options)))]
                along = 0.0
        length = micro.edge_length(u, v)
        frac = along / length if length > 0 else 0.0
        positions[t] = micro.points[u] + frac * (micro.points[v] - micro.points[u])
    realized = profile.copy()
    realized[0] = 0.0
    return Trajectory(positions=positions), realized


def _mean_rss(theta: tuple[float, float, float], station: BaseStation,
              position: np.ndarray) -> float:
    alpha, beta, _ = theta
    d = max(float(np.linalg.norm(station.position - position)), MIN_DISTANCE_M)
    return beta + alpha * math.log10(d)


def sample_rss(truth: Trajectory, stations: tuple[BaseStation, ...],
               theta_true: dict[int, tuple[float, float, float]],
               rng: np.random.Generator, delta: float,
               top_k: int | None = 7,
               radius: float | None = None) -> RssObservationSequence:
    """RSS readings per slot under the log-distance model.

    Visibility is the `top_k` stations strongest by model mean (lower id
    wins ties), or all stations within `radius` meters when given. Noise
    is Gaussian with each station's own sigma; sigma 0 yields exact
    model values.
    """
    if (top_k is None) == (radius is None):
        raise BadParams("specify exactly one of top_k or radius")
    slots = []
    for t in range(len(truth)):
        pos = truth.positions[t]
        if radius is not None:
            visible = [bs for bs in stations
                       if np.linalg.norm(bs.position - pos) <= radius]
        else:
            means = np.array([_mean_rss(theta_true[bs.id], bs, pos)
                              for bs in stations])
            order = np.argsort(-means, kind="stable")
            visible = [stations[i] for i in order[:top_k]]
        obs = []
        for bs in sorted(visible, key=lambda b: b.id):
            mean = _mean_rss(theta_true[bs.id], bs, pos)
            sigma = theta_true[bs.id][2]
            value = mean + (rng.normal(0.0, sigma) if sigma > 0 else 0.0)
            obs.append(RssObservation(bs_id=bs.id, rss=float(value)))
        slots.append(tuple(obs))
    return RssObservationSequence(slots=tuple(slots), delta=delta)


def apply_missing(seq: RssObservationSequence, rate: float,
                  seed: int | np.random.Generator) -> RssObservationSequence:
    """Remove each individual reading independently with probability rate."""
    if not (0.0 <= rate < 1.0):
        raise BadParams(f"rate must be in [0, 1), got {rate}")
    rng = seed if isinstance(seed, np.random.Generator) \
        else np.random.default_rng(seed)
    if rate == 0.0:
        return seq
    slots = []
    for slot in seq.slots:
        kept = tuple(o for o in slot if rng.random() >= rate)
        slots.append(kept)
    return RssObservationSequence(slots=tuple(slots), delta=seq.delta)


def gen_scenario(seed: int,
                 rows: int = 5, cols: int = 5, spacing: float = 200.0,
                 slots: int = 500, delta: float = 0.2,
                 n_stations: int | None = None,
                 sigma_range: tuple[float, float] = (1.0, 4.0),
                 alpha_range: tuple[float, float] = (-35.0, -20.0),
                 beta_range: tuple[float, float] = (-50.0, -30.0),
                 top_k: int = 7,
                 v_avr: float = 10.5, v_max: float = 22.2,
                 profile: str = "wandering",
                 regime_speeds=(8.0, 18.0), regime_len: int = 100,
                 missing_rate: float = 0.0,
                 placement: str = "uniform") -> Scenario:
    """One fully seeded synthetic scenario on a grid network."""
    rng = np.random.default_rng(seed)
    network = gen_network("grid", rows=rows, cols=cols, spacing=spacing)
    if n_stations is None:
        n_stations = rows * cols
    stations = gen_stations(network, n_stations, rng, placement=placement)
    theta_true = {
        bs.id: (
            float(rng.uniform(*alpha_range)),
            float(rng.uniform(*beta_range)),
            float(rng.uniform(*sigma_range)) if sigma_range[1] > 0 else 0.0,
        )
        for bs in stations
    }
    if profile == "wandering":
        speeds = wandering_profile(slots, v_avr, v_max, rng)
    elif profile == "constant":
        speeds = constant_profile(slots, v_avr)
    elif profile == "regimes":
        speeds = regime_profile(slots, regime_speeds, regime_len)
    else:
        raise BadParams(f"unknown speed profile {profile!r}")
    truth, realized = gen_drive(network, slots, delta, speeds, rng)
    seq = sample_rss(truth, stations, theta_true, rng, delta, top_k=top_k)
    if missing_rate > 0:
        seq = apply_missing(seq, missing_rate, rng)
    return Scenario(network=network, stations=stations, truth=truth,
                    speeds=realized, seq=seq, theta_true=theta_true, seed=seed)
