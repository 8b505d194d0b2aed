"""Baseline trajectory estimators and evaluation metrics.

QLE is the root-mean-square positional error between two equal-length
trajectories. TME compares the base-adjacency edge sets traversed by two
graph paths: (missed length + surplus length) / true length, in percent,
which can exceed 100% for badly wrong estimates.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass

import numpy as np

from .core import BaseStation, RssmmError, RssObservationSequence, Trajectory
from .msr import anchor_estimates_nearest, anchor_estimates_weighted
from .road_graph import RoadGraph

__all__ = [
    "LengthMismatch",
    "EmptyTruth",
    "EvaluationReport",
    "baseline_mar",
    "baseline_wcl",
    "qle",
    "tme",
    "path_edge_set",
    "evaluate",
]


class LengthMismatch(RssmmError, ValueError):
    """Estimate and truth have different slot counts."""


class EmptyTruth(RssmmError, ValueError):
    """The ground-truth path traverses no edges."""


@dataclass(frozen=True)
class EvaluationReport:
    qle: float                 # meters
    tme: float | None          # percent, None when no graph was supplied
    per_slot_errors: np.ndarray
    length_true: float = 0.0
    length_loss: float = 0.0
    length_surplus: float = 0.0


def baseline_mar(seq: RssObservationSequence,
                 stations: dict[int, BaseStation]) -> Trajectory:
    """Strongest-station position per slot, as a trajectory."""
    return Trajectory(positions=anchor_estimates_nearest(seq, stations))


def baseline_wcl(seq: RssObservationSequence,
                 stations: dict[int, BaseStation]) -> Trajectory:
    """Power-weighted centroid of observed stations per slot."""
    return Trajectory(positions=anchor_estimates_weighted(seq, stations))


def qle(estimate: Trajectory, truth: Trajectory) -> float:
    """Root-mean-square positional error, meters."""
    if len(estimate) != len(truth):
        raise LengthMismatch(
            f"estimate has {len(estimate)} slots, truth has {len(truth)}"
        )
    diff = estimate.positions - truth.positions
    return float(math.sqrt(np.mean(np.einsum("ij,ij->i", diff, diff))))


def per_slot_errors(estimate: Trajectory, truth: Trajectory) -> np.ndarray:
    if len(estimate) != len(truth):
        raise LengthMismatch(
            f"estimate has {len(estimate)} slots, truth has {len(truth)}"
        )
    return np.linalg.norm(estimate.positions - truth.positions, axis=1)


def _shortest_base_path(graph: RoadGraph, a: int, b: int) -> list[int] | None:
    """Deterministic BFS path on base adjacency (parents explored in
    ascending node order), or None when disconnected."""
    if a == b:
        return [a]
    parent = {a: -1}
    queue = deque([a])
    while queue:
        u = queue.popleft()
        for v in graph.base_adj[graph.base_ptr[u]:graph.base_ptr[u + 1]]:
            v = int(v)
            if v not in parent:
                parent[v] = u
                if v == b:
                    path = [b]
                    while path[-1] != a:
                        path.append(parent[path[-1]])
                    path.reverse()
                    return path
                queue.append(v)
    return None


def path_edge_set(path_nodes, graph: RoadGraph) -> set[tuple[int, int]]:
    """Base-adjacency edges traversed by a node path.

    Each consecutive node pair is expanded along its shortest base path,
    so multi-hop transitions count every underlying edge; repeated
    traversals collapse (it is a set).
    """
    nodes = [int(v) for v in path_nodes]
    edges: set[tuple[int, int]] = set()
    for a, b in zip(nodes[:-1], nodes[1:]):
        if a == b:
            continue
        hop_path = _shortest_base_path(graph, a, b)
        if hop_path is None:
            continue
        for u, v in zip(hop_path[:-1], hop_path[1:]):
            edges.add((u, v) if u < v else (v, u))
    return edges


def tme(estimate_path, truth_path, graph: RoadGraph) -> float:
    """Route mismatch: (missed + surplus length) / true length * 100.

    Both arguments are node-id paths on `graph`; lengths are edge counts
    times gamma over the traversed-edge sets.
    """
    truth_edges = path_edge_set(truth_path, graph)
    if not truth_edges:
        raise EmptyTruth("ground-truth path traverses no edges")
    est_edges = path_edge_set(estimate_path, graph)
    loss = len(truth_edges - est_edges)
    surplus = len(est_edges - truth_edges)
    return (loss + surplus) / len(truth_edges) * 100.0


def evaluate(estimate: Trajectory, truth: Trajectory,
             graph: RoadGraph | None = None) -> EvaluationReport:
    """QLE always; TME when a fine graph is supplied.

    For TME, both trajectories are snapped to nearest graph nodes first
    (ground truth is free-space in simulation).
    """
    errors = per_slot_errors(estimate, truth)
    rmse = float(math.sqrt(np.mean(errors ** 2)))
    if graph is None:
        return EvaluationReport(qle=rmse, tme=None, per_slot_errors=errors)
    est_nodes = graph.nearest_node(estimate.positions)
    true_nodes = graph.nearest_node(truth.positions)
    truth_edges = path_edge_set(true_nodes, graph)
    if not truth_edges:
        raise EmptyTruth("ground-truth path traverses no edges")
    est_edges = path_edge_set(est_nodes, graph)
    loss = len(truth_edges - est_edges)
    surplus = len(est_edges - truth_edges)
    mismatch = (loss + surplus) / len(truth_edges) * 100.0
    return EvaluationReport(
        qle=rmse,
        tme=mismatch,
        per_slot_errors=errors,
        length_true=len(truth_edges) * graph.gamma,
        length_loss=loss * graph.gamma,
        length_surplus=surplus * graph.gamma,
    )
