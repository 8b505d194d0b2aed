"""Maximum speed-constrained rough trajectory recovery.

Given one anchor point per slot (typically strongest-station positions),
finds the trajectory minimizing the summed squared anchor deviation
subject to a per-step distance cap, by a log-barrier interior-point
method with Newton centering:

    phi(X, c) = sum_t c * ||x_t - z_t||^2
                - sum_{t>=2} ln(cap - ||x_t - x_{t-1}||)

The step norm enters the barrier through a smoothed distance
sqrt(||d||^2 + EPS_SMOOTH^2), which removes the kink at zero-length steps
(repeated anchors make those common) at a cost of ~1e-12 m in the
solution; values, gradients, and Hessians are otherwise exact. The
Hessian is block tridiagonal and solved with a banded Cholesky, so one
Newton step costs O(T).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solveh_banded

from .core import BaseStation, RssmmError, RssObservationSequence, Trajectory

__all__ = [
    "EmptyFirstSlot",
    "InfeasiblePoint",
    "NewtonFailure",
    "MsrProblem",
    "MsrSolution",
    "anchor_estimates_nearest",
    "anchor_estimates_weighted",
    "barrier_value_grad_hess",
    "solve",
]

# Smoothing (meters) of the step norm inside the barrier; see module doc.
EPS_SMOOTH = 1e-6


class EmptyFirstSlot(RssmmError, ValueError):
    """The first slot has no observation to derive an anchor from."""


class InfeasiblePoint(RssmmError, ValueError):
    """A step distance reaches or exceeds the cap."""


class NewtonFailure(RssmmError, RuntimeError):
    """Line search could not restore feasibility or descent."""


@dataclass(frozen=True)
class MsrProblem:
    """Anchors, the per-step distance cap, and barrier parameters."""

    anchors: np.ndarray       # (T, 2)
    step_cap: float           # v_max * delta, meters
    c0: float = 1.0
    mu: float = 10.0
    eps_grad: float = 1e-8    # centering tolerance, scaled by (1 + c)
    eps_gap: float = 1e-3     # target suboptimality (T - 1) / c_final

    def __post_init__(self):
        z = np.asarray(self.anchors, dtype=float)
        if z.ndim != 2 or z.shape[1] != 2 or z.shape[0] < 1:
            raise ValueError(f"anchors must have shape (T >= 1, 2), got {z.shape}")
        if not np.all(np.isfinite(z)):
            raise ValueError("anchors must be finite")
        if self.step_cap <= 0:
            raise ValueError(f"step_cap must be positive, got {self.step_cap}")
        if self.c0 <= 0 or self.mu <= 1:
            raise ValueError("need c0 > 0 and mu > 1")
        z.setflags(write=False)
        object.__setattr__(self, "anchors", z)

    @property
    def t_total(self) -> int:
        return int(self.anchors.shape[0])


@dataclass(frozen=True)
class MsrSolution:
    trajectory: Trajectory
    c_final: float
    outer_iters: int
    inner_iters: int
    max_violation: float       # max step distance minus cap; <= 0 when interior
    suboptimality_bound: float  # (T - 1) / c_final
    objective: float           # sum of squared anchor deviations
    centering_history: tuple = field(default=(), repr=False)


def anchor_estimates_nearest(seq: RssObservationSequence,
                             stations: dict[int, BaseStation]) -> np.ndarray:
    """Strongest-station position per slot; empty slots carry forward."""
    anchors = np.empty((len(seq), 2))
    prev = None
    for t, slot in enumerate(seq.slots):
        if slot:
            best = max(slot, key=lambda o: o.rss)
            prev = stations[best.bs_id].position
        elif prev is None:
            raise EmptyFirstSlot("first slot has no observations")
        anchors[t] = prev
    return anchors


def anchor_estimates_weighted(seq: RssObservationSequence,
                              stations: dict[int, BaseStation]) -> np.ndarray:
    """Linear-power weighted centroid of observed station positions.

    Weights are 10^(rss / 10), i.e. the received power in milliwatts, so
    much-stronger stations dominate. Empty slots carry forward.
    """
    anchors = np.empty((len(seq), 2))
    prev = None
    for t, slot in enumerate(seq.slots):
        if slot:
            weights = np.array([10.0 ** (o.rss / 10.0) for o in slot])
            points = np.array([stations[o.bs_id].position for o in slot])
            prev = weights @ points / weights.sum()
        elif prev is None:
            raise EmptyFirstSlot("first slot has no observations")
        anchors[t] = prev
    return anchors


def _smooth_step_norms(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    d = x[1:] - x[:-1]
    r = np.sqrt(np.einsum("ij,ij->i", d, d) + EPS_SMOOTH ** 2)
    return d, r


def barrier_value_grad_hess(x: np.ndarray, problem: MsrProblem, c: float):
    """Value, gradient, and banded Hessian of the barrier objective.

    The Hessian is returned in symmetric banded storage (upper form, 4
    rows) over the flattened (2T,) variable ordering, ready for
    scipy.linalg.solveh_banded. Raises InfeasiblePoint when any step
    reaches the cap.
    """
    x = np.asarray(x, dtype=float).reshape(problem.t_total, 2)
    z = problem.anchors
    cap = problem.step_cap
    t_total = problem.t_total

    dev = x - z
    value = c * float(np.einsum("ij,ij->", dev, dev))
    grad = 2.0 * c * dev
    n_var = 2 * t_total
    band = np.zeros((4, n_var))  # upper symmetric banded, bandwidth 3
    band[3, 0::2] += 2.0 * c
    band[3, 1::2] += 2.0 * c

    if t_total >= 2:
        d, r = _smooth_step_norms(x)
        s = cap - r
        if np.any(s <= 0.0):
            worst = int(np.argmin(s))
            raise InfeasiblePoint(
                f"step {worst + 1} has distance {r[worst]:.6g} >= cap {cap:.6g}"
            )
        value -= float(np.log(s).sum())
        # d/dx_t of -ln(cap - r) is d / (r s); opposite sign at x_{t-1}.
        g_step = d / (r * s)[:, None]
        grad[1:] += g_step
        grad[:-1] -= g_step
        # Per-step 2x2 Hessian block: I/(r s) - (s - r) d d^T / (r^3 s^2).
        a = 1.0 / (r * s)
        b = (s - r) / (r ** 3 * s ** 2)
        hxx = a - b * d[:, 0] ** 2
        hyy = a - b * d[:, 1] ** 2
        hxy = -b * d[:, 0] * d[:, 1]
        for t in range(t_total - 1):
            i = 2 * t  # x-coordinate of x_t; pairs (i, i+1) and (i+2, i+3)
            for (da, db_, val) in ((0, 0, hxx[t]), (1, 1, hyy[t]), (0, 1, hxy[t])):
                # On-diagonal blocks at x_t and x_{t+1} add +val.
                _band_add(band, i + da, i + db_, val)
                _band_add(band, i + 2 + da, i + 2 + db_, val)
                # Off-diagonal block couples them with -val.
                _band_add(band, i + da, i + 2 + db_, -val)
                if da != db_:
                    _band_add(band, i + db_, i + 2 + da, -val)
    return value, grad.reshape(-1), band


def _band_add(band: np.ndarray, i: int, j: int, val: float):
    """Accumulate H[i, j] (j >= i) into upper banded storage."""
    if j < i:
        i, j = j, i
    band[3 - (j - i), j] += val


def _phi_value(x: np.ndarray, problem: MsrProblem, c: float) -> float:
    dev = x - problem.anchors
    value = c * float(np.einsum("ij,ij->", dev, dev))
    if problem.t_total >= 2:
        _, r = _smooth_step_norms(x)
        s = problem.step_cap - r
        if np.any(s <= 0.0):
            return math.inf
        value -= float(np.log(s).sum())
    return value


def _newton_centering(x: np.ndarray, problem: MsrProblem, c: float,
                      max_inner: int = 200):
    """Damped Newton minimization of phi(. , c) from a feasible point."""
    history = []
    inner = 0
    tol = problem.eps_grad * (1.0 + c)
    for _ in range(max_inner):
        value, grad, band = barrier_value_grad_hess(x, problem, c)
        gnorm = float(np.linalg.norm(grad))
        history.append((value, gnorm))
        if gnorm < tol:
            return x, inner, history
        step = _solve_banded_spd(band, grad).reshape(problem.t_total, 2)
        descent = float(grad @ step.reshape(-1))
        if descent <= 0:  # numerical loss of positive definiteness
            step = grad.reshape(problem.t_total, 2)
            descent = gnorm ** 2
        # Newton decrement below float resolution of phi: centered enough.
        if 0.5 * descent < 1e-13 * (1.0 + abs(value)):
            return x, inner, history
        alpha = 1.0
        accepted = False
        while alpha > 1e-16:
            candidate = x - alpha * step
            cand_value = _phi_value(candidate, problem, c)
            if cand_value <= value - 1e-4 * alpha * descent:
                x = candidate
                accepted = True
                break
            alpha *= 0.5
        inner += 1
        if not accepted:
            if gnorm < math.sqrt(tol):  # stalled by rounding, near-centered
                return x, inner, history
            raise NewtonFailure(
                f"line search stalled at c={c:.3g}, |grad|={gnorm:.3g}, "
                f"phi={value:.6g}"
            )
    return x, inner, history


def _solve_banded_spd(band: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    ridge = 0.0
    for attempt in range(6):
        try:
            b = band if ridge == 0.0 else _with_ridge(band, ridge)
            return solveh_banded(b, rhs)
        except np.linalg.LinAlgError:
            ridge = 1e-10 * float(np.abs(band[3]).max()) * (10.0 ** attempt) or 1e-10
    raise NewtonFailure("banded Hessian factorization failed")


def _with_ridge(band: np.ndarray, ridge: float) -> np.ndarray:
    out = band.copy()
    out[3] += ridge
    return out


def solve(problem: MsrProblem) -> MsrSolution:
    """Run the barrier method until the duality-style gap target is met.

    Starts from the anchor centroid repeated T times (all step distances
    zero, strictly inside the cap), Newton-centers at each penalty level
    c, then multiplies c by mu until c >= (T - 1) / eps_gap, which bounds
    the anchor-deviation suboptimality by eps_gap.
    """
    t_total = problem.t_total
    x = np.tile(problem.anchors.mean(axis=0), (t_total, 1))
    c = problem.c0
    target = (t_total - 1) / problem.eps_gap
    outer = 0
    inner_total = 0
    all_history = []
    while True:
        x, inner, history = _newton_centering(x, problem, c)
        outer += 1
        inner_total += inner
        all_history.append((c, inner, history[-1][1] if history else 0.0))
        if c >= target:
            break
        c *= problem.mu

    dev = x - problem.anchors
    objective = float(np.einsum("ij,ij->", dev, dev))
    if t_total >= 2:
        steps = np.linalg.norm(x[1:] - x[:-1], axis=1)
        max_violation = float(steps.max() - problem.step_cap)
    else:
        max_violation = -problem.step_cap
    return MsrSolution(
        trajectory=Trajectory(positions=x),
        c_final=c,
        outer_iters=outer,
        inner_iters=inner_total,
        max_violation=max_violation,
        suboptimality_bound=(t_total - 1) / c,
        objective=objective,
        centering_history=tuple(all_history),
    )
