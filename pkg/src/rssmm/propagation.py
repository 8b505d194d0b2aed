"""Log-distance path-loss model: prediction, likelihood, closed-form fit.

Per base station q the received power follows
rss = beta_q + alpha_q * log10(distance) + noise, noise ~ N(0, sigma_q^2),
so the per-slot observation log-probability is a sum of Gaussian
log-densities over the stations observed in that slot.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .core import BaseStation, RssmmError, RssObservation, RssObservationSequence, \
    index_stations, worker_count

__all__ = [
    "ZeroDistance",
    "UnknownBs",
    "RankDeficient",
    "PathLossParams",
    "PropagationModel",
    "LabeledRssSet",
    "SIGMA_MIN_DB",
    "MIN_DISTANCE_M",
    "predict_rss",
    "observation_log_prob",
    "fit_propagation",
    "fit_single_bs",
    "label_observations",
    "observation_score_matrix",
]

# Floor on the fitted shadowing std: a perfectly fit station would
# otherwise produce unbounded log-density spikes in the decoder.
SIGMA_MIN_DB = 0.5
# Distances below 1 m are clamped so log10 never changes sign at
# sub-meter range; antennas are never at road level in this data model.
MIN_DISTANCE_M = 1.0

LOG_2PI = math.log(2.0 * math.pi)


class ZeroDistance(RssmmError, ValueError):
    """Evaluation point coincides with a base station position."""


class UnknownBs(RssmmError, KeyError):
    """No path-loss parameters are available for this base station."""


class RankDeficient(RssmmError, ValueError):
    """All sample distances coincide; the normal equations are singular."""


@dataclass(frozen=True)
class PathLossParams:
    alpha: float  # dB per decade of distance
    beta: float   # dB offset at 1 m
    sigma: float  # shadowing std, dB

    def __post_init__(self):
        if self.sigma <= 0 or not math.isfinite(self.sigma):
            raise ValueError(f"sigma must be positive, got {self.sigma}")


@dataclass(frozen=True)
class PropagationModel:
    """Per-station path-loss parameters, plus ids skipped during fitting."""

    params: dict[int, PathLossParams]
    skipped: tuple[int, ...] = ()

    def __contains__(self, bs_id: int) -> bool:
        return bs_id in self.params

    def __getitem__(self, bs_id: int) -> PathLossParams:
        try:
            return self.params[bs_id]
        except KeyError:
            raise UnknownBs(f"no path-loss parameters for station {bs_id}") from None

    def merged_over(self, previous: "PropagationModel | None") -> "PropagationModel":
        """This model, with missing stations inherited from `previous`."""
        if previous is None:
            return self
        merged = dict(previous.params)
        merged.update(self.params)
        return PropagationModel(params=merged, skipped=self.skipped)


@dataclass(frozen=True)
class LabeledRssSet:
    """Per-station (position, rss) samples used to fit the model."""

    samples: dict[int, tuple[np.ndarray, np.ndarray]]  # bs_id -> (N,2), (N,)

    def count(self, bs_id: int) -> int:
        if bs_id not in self.samples:
            return 0
        return int(self.samples[bs_id][1].shape[0])


def _clamped_distance(origin: np.ndarray, points: np.ndarray) -> np.ndarray:
    d = np.linalg.norm(np.atleast_2d(points) - origin, axis=1)
    if np.any(d == 0.0):
        raise ZeroDistance(f"evaluation point coincides with station at {origin}")
    return np.maximum(d, MIN_DISTANCE_M)


def predict_rss(model: PropagationModel, bs: BaseStation, position) -> float:
    """Mean RSS (dBm) at `position` for station `bs` under the model."""
    p = model[bs.id]
    d = _clamped_distance(bs.position, np.asarray(position, dtype=float))
    return float(p.beta + p.alpha * math.log10(d[0]))


def observation_log_prob(model: PropagationModel,
                         stations: dict[int, BaseStation],
                         observations: tuple[RssObservation, ...],
                         position,
                         on_unknown: str = "raise") -> float:
    """Log-probability of one slot's RSS set at a candidate position.

    Sums independent Gaussian log-densities over the observed stations;
    an empty slot contributes 0 (the log of an empty product). Stations
    missing from the model raise UnknownBs, or are silently dropped when
    on_unknown="drop".
    """
    total = 0.0
    pos = np.asarray(position, dtype=float)
    for obs in observations:
        if obs.bs_id not in model:
            if on_unknown == "drop":
                continue
            raise UnknownBs(f"no path-loss parameters for station {obs.bs_id}")
        p = model[obs.bs_id]
        bs = stations[obs.bs_id]
        d = _clamped_distance(bs.position, pos)[0]
        resid = obs.rss - p.beta - p.alpha * math.log10(d)
        total += -0.5 * LOG_2PI - math.log(p.sigma) - resid * resid / (2.0 * p.sigma ** 2)
    return total


def fit_single_bs(positions: np.ndarray, rss: np.ndarray,
                  origin: np.ndarray) -> PathLossParams:
    """Closed-form least squares of (alpha, beta) and the residual sigma.

    Solves the 2x2 normal equations of rss ~ alpha * log10(d) + beta;
    sigma^2 is the mean squared residual of the fitted line, floored at
    SIGMA_MIN_DB. Raises RankDeficient when every sample sits at the same
    (clamped) distance.
    """
    d = _clamped_distance(origin, positions)
    logd = np.log10(d)
    y = np.asarray(rss, dtype=float)
    n = float(len(y))
    if n < 2:
        raise RankDeficient("need at least two samples")
    s_l = logd.sum()
    s_ll = float(logd @ logd)
    det = n * s_ll - s_l * s_l
    if not math.isfinite(det) or det <= 1e-12 * max(n * s_ll, 1.0):
        raise RankDeficient("all sample distances coincide")
    s_y = y.sum()
    s_ly = float(logd @ y)
    alpha = (n * s_ly - s_l * s_y) / det
    beta = (s_ll * s_y - s_l * s_ly) / det
    resid = y - beta - alpha * logd
    sigma = math.sqrt(float(resid @ resid) / n)
    return PathLossParams(alpha=alpha, beta=beta, sigma=max(sigma, SIGMA_MIN_DB))


def fit_propagation(data: LabeledRssSet,
                    stations: dict[int, BaseStation]) -> PropagationModel:
    """Fit path-loss parameters per station from labeled samples.

    Stations with fewer than two samples, or whose samples all sit at one
    distance, cannot be fitted and are listed in the returned model's
    `skipped` field. Per-station fits are independent and run on a small
    thread pool when many stations are present.
    """
    ids = sorted(data.samples)
    params: dict[int, PathLossParams] = {}
    skipped: list[int] = []

    def fit_one(bs_id: int):
        pos, rss = data.samples[bs_id]
        try:
            return bs_id, fit_single_bs(pos, rss, stations[bs_id].position)
        except RankDeficient:
            return bs_id, None

    workers = min(worker_count(), len(ids)) if len(ids) >= 8 else 1
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(fit_one, ids))
    else:
        results = [fit_one(i) for i in ids]
    for bs_id, fitted in results:
        if fitted is None:
            skipped.append(bs_id)
        else:
            params[bs_id] = fitted
    return PropagationModel(params=params, skipped=tuple(skipped))


def label_observations(seq: RssObservationSequence,
                       positions: np.ndarray) -> LabeledRssSet:
    """Group the sequence's readings per station, labeled with positions.

    `positions` holds one planar point per slot (the current trajectory
    estimate); every reading in slot t is attributed to positions[t].
    """
    pos = np.asarray(positions, dtype=float)
    if pos.shape[0] != len(seq):
        raise ValueError(f"positions length {pos.shape[0]} != sequence length {len(seq)}")
    per_bs: dict[int, tuple[list[np.ndarray], list[float]]] = {}
    for t, slot in enumerate(seq.slots):
        for obs in slot:
            bucket = per_bs.setdefault(obs.bs_id, ([], []))
            bucket[0].append(pos[t])
            bucket[1].append(obs.rss)
    samples = {
        bs_id: (np.asarray(ps, dtype=float), np.asarray(ys, dtype=float))
        for bs_id, (ps, ys) in per_bs.items()
    }
    return LabeledRssSet(samples=samples)


@dataclass(frozen=True)
class ObservationScores:
    """Per-slot observation log-probabilities over a fixed candidate set."""

    matrix: np.ndarray  # (T, N)
    dropped: int        # readings from stations absent from the model


def observation_score_matrix(model: PropagationModel,
                             stations: dict[int, BaseStation],
                             seq: RssObservationSequence,
                             node_positions: np.ndarray) -> ObservationScores:
    """Observation log-probability of every slot at every candidate node.

    Readings from stations without model parameters are dropped (counted
    in the result); empty slots give all-zero rows, which lets the
    decoder bridge them on transitions alone.
    """
    nodes = np.asarray(node_positions, dtype=float)
    t_total = len(seq)
    matrix = np.zeros((t_total, nodes.shape[0]))
    dropped = 0

    logd_cache: dict[int, np.ndarray] = {}

    def logd_for(bs_id: int) -> np.ndarray:
        cached = logd_cache.get(bs_id)
        if cached is None:
            cached = np.log10(_clamped_distance(stations[bs_id].position, nodes))
            logd_cache[bs_id] = cached
        return cached

    for t, slot in enumerate(seq.slots):
        row = matrix[t]
        for obs in slot:
            if obs.bs_id not in model:
                dropped += 1
                continue
            p = model[obs.bs_id]
            resid = obs.rss - p.beta - p.alpha * logd_for(obs.bs_id)
            row -= 0.5 * LOG_2PI + math.log(p.sigma) + resid * resid / (2.0 * p.sigma ** 2)
    return ObservationScores(matrix=matrix, dropped=dropped)
