"""Independent reference implementations used to derive expected values.

Everything here is deliberately dumb and slow: bisection, exhaustive
enumeration, brute-force BFS, grid search. Tests compare the package
against these, never the other way around.
"""

import itertools
import math
from collections import deque

import numpy as np


def lambert_bisect(x: float, lo: float = -80.0, hi: float = -1.0,
                   iters: int = 200) -> float:
    """Bisection solve of w * exp(w) = x on [lo, -1]."""
    assert -1.0 / math.e <= x < 0.0
    while lo * math.exp(lo) < x:
        lo *= 2.0
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if mid * math.exp(mid) < x:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


def bfs_hops_brute(n_nodes: int, edges: set[tuple[int, int]], source: int) -> dict[int, int]:
    """Plain BFS hop counts over an undirected edge set."""
    adj = {i: [] for i in range(n_nodes)}
    for a, b in edges:
        adj[a].append(b)
        adj[b].append(a)
    hops = {source: 0}
    queue = deque([source])
    while queue:
        u = queue.popleft()
        for v in adj[u]:
            if v not in hops:
                hops[v] = hops[u] + 1
                queue.append(v)
    return hops


def transition_pairs_brute(n_nodes: int, edges: set[tuple[int, int]], k: int) -> set[tuple[int, int]]:
    """All ordered pairs with BFS hop count strictly below k (self included)."""
    out = set()
    for s in range(n_nodes):
        for node, h in bfs_hops_brute(n_nodes, edges, s).items():
            if h < k:
                out.add((s, node))
    return out


def viterbi_enumerate(n_nodes: int, obs: np.ndarray, trans: dict[tuple[int, int], float]):
    """Exhaustive max over all feasible node sequences.

    `obs` is (T, N); `trans` maps ordered edges to scores (missing =
    infeasible). Accumulates scores in the same left-to-right order as an
    incremental decoder, so totals are bit-comparable. Returns
    (best_score, best_path); ties keep the first maximum in lexicographic
    path order.
    """
    t_total = obs.shape[0]
    best_score = -math.inf
    best_path = None
    for path in itertools.product(range(n_nodes), repeat=t_total):
        ok = all((path[t - 1], path[t]) in trans for t in range(1, t_total))
        if not ok:
            continue
        score = obs[0][path[0]]
        for t in range(1, t_total):
            score = (score + trans[(path[t - 1], path[t])]) + obs[t][path[t]]
        if score > best_score:
            best_score = score
            best_path = path
    return best_score, best_path


def grid_fit_oracle(logd: np.ndarray, rss: np.ndarray, alpha0: float, beta0: float,
                    half_steps: int = 5, step: float = 0.01):
    """SSE over a local (alpha, beta) grid around a candidate point."""
    best = (math.inf, None)
    for i in range(-half_steps, half_steps + 1):
        for j in range(-half_steps, half_steps + 1):
            a = alpha0 + i * step
            b = beta0 + j * step
            resid = rss - b - a * logd
            sse = float(resid @ resid)
            if sse < best[0]:
                best = (sse, (a, b))
    return best


def chain_dp_1d(anchors: np.ndarray, cap: float, grid_step: float = 0.01,
                pad: float = 1.0):
    """Exact minimum of sum (x_t - z_t)^2 s.t. |x_t - x_{t-1}| <= cap
    over a 1-D grid, by dynamic programming over the chain."""
    lo = anchors.min() - pad
    hi = anchors.max() + pad
    grid = np.arange(lo, hi + grid_step / 2, grid_step)
    cost = (grid - anchors[0]) ** 2
    for z in anchors[1:]:
        best_prev = np.full(grid.shape, math.inf)
        for gi, gx in enumerate(grid):
            mask = np.abs(grid - gx) <= cap + 1e-12
            best_prev[gi] = cost[mask].min()
        cost = best_prev + (grid - z) ** 2
    return float(cost.min())
