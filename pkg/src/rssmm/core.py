"""Shared domain types, solver configuration, and numeric utilities.

Everything here is immutable after construction and safe to share across
threads; the numeric routines are pure functions.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from statistics import NormalDist
from typing import Iterable, Mapping, Sequence

import numpy as np

__all__ = [
    "RssmmError",
    "DomainError",
    "InfeasibleEta",
    "BaseStation",
    "RssObservation",
    "RssObservationSequence",
    "Trajectory",
    "SolverConfig",
    "index_stations",
    "lambert_w_minus1",
    "speed_variance_from_eta",
    "worker_count",
]

# Branch point of the Lambert W function: W is real only for x >= -1/e.
BRANCH_POINT = -1.0 / math.e


class RssmmError(Exception):
    """Base class for all errors raised by this package."""


class DomainError(RssmmError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class InfeasibleEta(DomainError):
    """The requested peak density at v_max is unattainable in density mode."""


def _as_point(p) -> np.ndarray:
    a = np.asarray(p, dtype=float).reshape(2)
    if not np.all(np.isfinite(a)):
        raise ValueError(f"coordinates must be finite, got {a}")
    return a


@dataclass(frozen=True)
class BaseStation:
    """A fixed transmitter at a known planar position (meters, local frame)."""

    id: int
    position: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "position", _as_point(self.position))


def index_stations(stations: Iterable[BaseStation]) -> dict[int, BaseStation]:
    """Index stations by id, rejecting duplicate ids."""
    out: dict[int, BaseStation] = {}
    for bs in stations:
        if bs.id in out:
            raise ValueError(f"duplicate base station id {bs.id}")
        out[bs.id] = bs
    return out


@dataclass(frozen=True)
class RssObservation:
    """One RSS reading (dBm) attributed to one base station."""

    bs_id: int
    rss: float

    def __post_init__(self):
        if not math.isfinite(self.rss):
            raise ValueError(f"rss must be finite, got {self.rss}")


@dataclass(frozen=True)
class RssObservationSequence:
    """Per-slot sets of RSS readings sampled every `delta` seconds.

    Slots may be empty (sporadic data). Within a slot, base station ids
    must be distinct.
    """

    slots: tuple[tuple[RssObservation, ...], ...]
    delta: float

    def __post_init__(self):
        if self.delta <= 0 or not math.isfinite(self.delta):
            raise ValueError(f"delta must be positive, got {self.delta}")
        slots = tuple(tuple(s) for s in self.slots)
        if len(slots) < 1:
            raise ValueError("sequence must contain at least one slot")
        for t, slot in enumerate(slots):
            ids = [o.bs_id for o in slot]
            if len(set(ids)) != len(ids):
                raise ValueError(f"slot {t} has duplicate base station ids")
        object.__setattr__(self, "slots", slots)

    def __len__(self) -> int:
        return len(self.slots)

    def observed_ids(self) -> set[int]:
        """All base station ids appearing anywhere in the sequence."""
        return {o.bs_id for slot in self.slots for o in slot}


@dataclass(frozen=True)
class Trajectory:
    """Ordered planar positions (meters), one per time slot."""

    positions: np.ndarray

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=float)
        if pos.ndim != 2 or pos.shape[1] != 2:
            raise ValueError(f"positions must have shape (T, 2), got {pos.shape}")
        if pos.shape[0] < 1:
            raise ValueError("trajectory must contain at least one position")
        if not np.all(np.isfinite(pos)):
            raise ValueError("trajectory positions must be finite")
        pos.setflags(write=False)
        object.__setattr__(self, "positions", pos)

    def __len__(self) -> int:
        return int(self.positions.shape[0])


@dataclass(frozen=True)
class SolverConfig:
    """Tuning knobs shared by the reconstruction pipeline.

    `eta_mode` selects how the speed-density parameter eta is interpreted:
    "density" means the Gaussian speed density evaluated at v_max equals
    eta; "tail" means the probability of exceeding v_max equals eta. The
    density equation has no real solution for some otherwise reasonable
    parameter combinations, in which case only tail mode is usable.
    """

    v_max: float = 22.2
    v_avr: float = 10.5
    eta: float = 0.05
    gamma_coarse: float = 300.0
    gamma_fine: float = 2.0
    group_count: int = 10
    max_outer_iters: int = 30
    eta_mode: str = "tail"
    hop_slack: int = 1
    corridor_radius: float | None = None  # None -> 2 * gamma_coarse

    def __post_init__(self):
        if not (0 < self.v_avr < self.v_max):
            raise ValueError(f"need 0 < v_avr < v_max, got {self.v_avr}, {self.v_max}")
        if self.eta <= 0:
            raise ValueError(f"eta must be positive, got {self.eta}")
        if not (0 < self.gamma_fine <= self.gamma_coarse):
            raise ValueError(
                f"need 0 < gamma_fine <= gamma_coarse, got "
                f"{self.gamma_fine}, {self.gamma_coarse}"
            )
        if self.group_count < 1:
            raise ValueError(f"group_count must be >= 1, got {self.group_count}")
        if self.max_outer_iters < 1:
            raise ValueError(f"max_outer_iters must be >= 1, got {self.max_outer_iters}")
        if self.eta_mode not in ("density", "tail"):
            raise ValueError(f"eta_mode must be 'density' or 'tail', got {self.eta_mode!r}")
        if self.hop_slack < 0:
            raise ValueError(f"hop_slack must be >= 0, got {self.hop_slack}")

    def effective_corridor_radius(self) -> float:
        if self.corridor_radius is not None:
            return self.corridor_radius
        return 2.0 * self.gamma_coarse


def _w_bisect(x: float) -> float:
    """Bisection solve of w*exp(w) = x on the lower branch (w <= -1).

    w*exp(w) is monotone decreasing on (-inf, -1], from 0- down to -1/e,
    so [lo, -1] brackets the root once w*exp(w) at lo exceeds x.
    """
    lo, hi = -2.0, -1.0
    while lo * math.exp(lo) < x:
        lo *= 2.0
        if lo < -750.0:  # exp underflows; x is then effectively 0-
            break
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid * math.exp(mid) < x:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


def lambert_w_minus1(x: float) -> float:
    """Lower real branch W_-1 of the Lambert W function.

    Solves w * exp(w) = x for w <= -1, defined for -1/e <= x < 0. Uses
    Halley iteration (Corless et al., 1996) seeded from the branch-point
    series near -1/e and the asymptotic log expansion near 0-, with a
    bisection fallback when the iteration leaves the branch.

    Raises DomainError outside [-1/e, 0).
    """
    x = float(x)
    if not math.isfinite(x) or x >= 0.0 or x < BRANCH_POINT:
        raise DomainError(
            f"lambert_w_minus1 requires -1/e <= x < 0, got {x}"
        )
    if x == BRANCH_POINT:
        return -1.0

    # Seed: branch-point series for x near -1/e, log asymptotics otherwise.
    p2 = 2.0 * (math.e * x + 1.0)
    if p2 < 0.0:  # rounding just below the branch point
        p2 = 0.0
    if p2 < 0.5:
        p = -math.sqrt(p2)
        w = -1.0 + p - p * p / 3.0 + 11.0 / 72.0 * p2 * p
    else:
        l1 = math.log(-x)
        w = l1 - math.log(-l1)

    for _ in range(64):
        ew = math.exp(w)
        f = w * ew - x
        if abs(f) <= 1e-14:
            break
        wp1 = w + 1.0
        denom = ew * wp1 - (w + 2.0) * f / (2.0 * wp1)
        if denom == 0.0 or not math.isfinite(denom):
            w = _w_bisect(x)
            break
        step = f / denom
        w_new = w - step
        if w_new > -1.0 or not math.isfinite(w_new):
            w = _w_bisect(x)
            break
        converged = abs(step) <= 1e-16 * (1.0 + abs(w_new))
        w = w_new
        if converged:
            break

    if w > -1.0:
        w = -1.0
    if abs(w * math.exp(w) - x) > 1e-12:
        w = _w_bisect(x)
    return w


def speed_variance_from_eta(v_max: float, v_avr: float, eta: float,
                            mode: str = "density") -> float:
    """Speed variance implied by the speed-at-limit parameter eta.

    In "density" mode, returns the variance s2 such that the Gaussian
    speed density N(v_avr, s2) evaluated at v_max equals eta, taking the
    lower Lambert branch (the smaller of the two roots, s2 <= (v_max -
    v_avr)^2). In "tail" mode, returns ((v_max - v_avr) / z)^2 where z is
    the standard-normal upper-eta quantile, so P(v > v_max) = eta.

    Raises InfeasibleEta when the density equation has no real solution.
    """
    if v_max <= v_avr:
        raise DomainError(f"need v_max > v_avr, got {v_max} <= {v_avr}")
    if eta <= 0:
        raise DomainError(f"eta must be positive, got {eta}")
    gap = v_max - v_avr
    if mode == "density":
        a = -2.0 * math.pi * eta * eta * gap * gap
        if a < BRANCH_POINT:
            raise InfeasibleEta(
                f"peak density {eta} at v_max is unattainable for "
                f"v_max - v_avr = {gap:.6g} (Lambert argument {a:.6g} < -1/e); "
                f"use tail mode or a smaller eta"
            )
        return -(gap * gap) / lambert_w_minus1(a)
    if mode == "tail":
        if eta >= 0.5:
            raise DomainError(f"tail mode requires eta < 0.5, got {eta}")
        z = NormalDist().inv_cdf(1.0 - eta)
        return (gap / z) ** 2
    raise ValueError(f"mode must be 'density' or 'tail', got {mode!r}")


def worker_count() -> int:
    """Worker-parallelism cap from RSSMM_THREADS (0 or unset = auto)."""
    raw = os.environ.get("RSSMM_THREADS", "0")
    try:
        n = int(raw)
    except ValueError:
        n = 0
    if n <= 0:
        return os.cpu_count() or 1
    return n
