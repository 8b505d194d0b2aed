"""Road graph construction and queries.

Roads are polylines in a planar metric frame. A graph is built by
resampling each polyline at a fixed arclength spacing gamma, merging
nearby samples into intersection nodes, and linking consecutive samples
(base adjacency). Transition edges connect node pairs whose base-hop
distance is below a speed-derived hop limit; along-road distance between
nodes is the base hop count times gamma.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .core import RssmmError

__all__ = [
    "EmptyNetwork",
    "UnknownNode",
    "EmptyCorridor",
    "RoadNetwork",
    "RoadGraph",
    "Corridor",
    "build_nodes",
    "build_transition_edges",
    "routine_distance",
    "build_corridor",
    "hop_limit_for",
]


class EmptyNetwork(RssmmError, ValueError):
    """The road network contains no polylines."""


class UnknownNode(RssmmError, KeyError):
    """A node id is not part of the graph."""


class EmptyCorridor(RssmmError, ValueError):
    """No fine-graph node lies within the corridor radius of the path."""


@dataclass(frozen=True)
class RoadNetwork:
    """A collection of roads, each an ordered polyline of planar points.

    Roads are joined wherever their sampled nodes come close enough to
    merge (see build_nodes); shared endpoints and crossings therefore do
    not need to be declared explicitly, only to coincide geometrically.
    """

    polylines: tuple[np.ndarray, ...]

    def __post_init__(self):
        polys = []
        for i, poly in enumerate(self.polylines):
            a = np.asarray(poly, dtype=float)
            if a.ndim != 2 or a.shape[1] != 2 or a.shape[0] < 2:
                raise ValueError(f"polyline {i} must have shape (>=2, 2), got {a.shape}")
            if not np.all(np.isfinite(a)):
                raise ValueError(f"polyline {i} has non-finite coordinates")
            a.setflags(write=False)
            polys.append(a)
        object.__setattr__(self, "polylines", tuple(polys))

    @property
    def segment_count(self) -> int:
        """Number of straight segments between consecutive polyline points."""
        return sum(p.shape[0] - 1 for p in self.polylines)

    def intersection_points(self) -> np.ndarray:
        """Distinct coordinates shared by two or more polylines."""
        seen: dict[tuple[float, float], set[int]] = {}
        for i, poly in enumerate(self.polylines):
            for pt in poly:
                seen.setdefault((float(pt[0]), float(pt[1])), set()).add(i)
        pts = [k for k, owners in seen.items() if len(owners) >= 2]
        return np.array(sorted(pts), dtype=float).reshape(-1, 2)

    def total_length(self) -> float:
        return float(sum(
            np.linalg.norm(np.diff(p, axis=0), axis=1).sum() for p in self.polylines
        ))

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        allpts = np.vstack(self.polylines)
        return allpts.min(axis=0), allpts.max(axis=0)


@dataclass
class RoadGraph:
    """Nodes spaced roughly gamma meters apart on roads, plus adjacency.

    `base_ptr`/`base_adj` is the CSR 1-hop adjacency along roads (merged
    intersections included). After build_transition_edges, `trans_ptr` /
    `trans_src`/`trans_hops` hold, for every destination node, its
    admissible predecessors (sorted ascending, self included at hop 0)
    and their base-hop counts.
    """

    nodes: np.ndarray
    gamma: float
    base_ptr: np.ndarray
    base_adj: np.ndarray
    hop_limit: int | None = None
    trans_ptr: np.ndarray | None = None
    trans_src: np.ndarray | None = None
    trans_hops: np.ndarray | None = None
    _kdtree: cKDTree | None = field(default=None, repr=False, compare=False)

    @property
    def n_nodes(self) -> int:
        return int(self.nodes.shape[0])

    def neighbors(self, i: int) -> np.ndarray:
        """Base-adjacency neighbours of node i (sorted, excludes i)."""
        self._check(i)
        return self.base_adj[self.base_ptr[i]:self.base_ptr[i + 1]]

    def kdtree(self) -> cKDTree:
        if self._kdtree is None:
            self._kdtree = cKDTree(self.nodes)
        return self._kdtree

    def nearest_node(self, points) -> np.ndarray:
        """Index of the nearest graph node for each query point."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        _, idx = self.kdtree().query(pts)
        return np.asarray(idx, dtype=np.int64)

    def _check(self, i: int):
        if not (0 <= i < self.n_nodes):
            raise UnknownNode(f"node {i} not in graph of {self.n_nodes} nodes")

    def has_edge(self, i: int, j: int) -> bool:
        """True when (i, j) is a transition edge (hop count < hop limit)."""
        self._check(i)
        self._check(j)
        if self.trans_ptr is None:
            raise RssmmError("transition edges not built; call build_transition_edges")
        lo, hi = self.trans_ptr[j], self.trans_ptr[j + 1]
        pos = np.searchsorted(self.trans_src[lo:hi], i)
        return bool(pos < hi - lo and self.trans_src[lo + pos] == i)

    def edge_hops(self, i: int, j: int) -> int | None:
        """Hop count of transition edge (i, j), or None when absent."""
        lo, hi = self.trans_ptr[j], self.trans_ptr[j + 1]
        pos = np.searchsorted(self.trans_src[lo:hi], i)
        if pos < hi - lo and self.trans_src[lo + pos] == i:
            return int(self.trans_hops[lo + pos])
        return None

    def hop_distance(self, i: int, j: int) -> float:
        """Base-adjacency shortest-path hop count; inf when disconnected."""
        self._check(i)
        self._check(j)
        if i == j:
            return 0.0
        if self.trans_ptr is not None:
            h = self.edge_hops(i, j)
            if h is not None:
                return float(h)
        dist = _bfs_hops(self.base_ptr, self.base_adj, i, target=j)
        d = dist[j]
        return float(d) if d >= 0 else math.inf


def _bfs_hops(ptr: np.ndarray, adj: np.ndarray, source: int,
              max_depth: int | None = None, target: int | None = None) -> np.ndarray:
    """Hop counts from `source` over CSR adjacency; -1 marks unreached."""
    n = ptr.shape[0] - 1
    dist = np.full(n, -1, dtype=np.int64)
    dist[source] = 0
    queue = deque([source])
    while queue:
        u = queue.popleft()
        if target is not None and u == target:
            return dist
        du = dist[u]
        if max_depth is not None and du >= max_depth:
            continue
        for v in adj[ptr[u]:ptr[u + 1]]:
            if dist[v] < 0:
                dist[v] = du + 1
                queue.append(v)
    return dist


class _UnionFind:
    def __init__(self, n: int):
        self.parent = list(range(n))

    def find(self, a: int) -> int:
        p = self.parent
        while p[a] != a:
            p[a] = p[p[a]]
            a = p[a]
        return a

    def union(self, a: int, b: int):
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            if rb < ra:
                ra, rb = rb, ra
            self.parent[rb] = ra


def _resample_polyline(poly: np.ndarray, gamma: float) -> np.ndarray:
    """Points at arclengths 0, gamma, 2*gamma, ... plus the far endpoint.

    When the leftover beyond the last multiple is shorter than gamma/2,
    the last sample is pulled onto the endpoint instead of adding one,
    so consecutive samples are between gamma/2 and 1.5*gamma apart.
    """
    seg = np.diff(poly, axis=0)
    seg_len = np.linalg.norm(seg, axis=1)
    cum = np.concatenate([[0.0], np.cumsum(seg_len)])
    total = cum[-1]
    if total == 0.0:
        return poly[:1].copy()
    k = int(math.floor(total / gamma + 1e-9))
    ts = [i * gamma for i in range(k + 1)]
    rem = total - k * gamma
    if rem > 1e-9 * max(total, 1.0):
        if rem < 0.5 * gamma and k >= 1:
            ts[-1] = total
        else:
            ts.append(total)
    # Interpolate along the polyline at the chosen arclengths.
    out = np.empty((len(ts), 2))
    j = 0
    for i, t in enumerate(ts):
        t = min(t, total)
        while j < len(seg_len) - 1 and cum[j + 1] < t:
            j += 1
        frac = 0.0 if seg_len[j] == 0 else (t - cum[j]) / seg_len[j]
        out[i] = poly[j] + frac * seg[j]
    return out


def build_nodes(network: RoadNetwork, gamma: float) -> RoadGraph:
    """Resample a road network into a node graph with base adjacency.

    Each polyline is sampled every gamma meters of arclength (endpoints
    always represented); samples from any road closer than gamma/2 are
    merged into a single node, which is how intersections and shared
    endpoints become junction nodes. Base adjacency links consecutive
    samples along each road, mapped through the merge.
    """
    if gamma <= 0 or not math.isfinite(gamma):
        raise ValueError(f"gamma must be positive, got {gamma}")
    if len(network.polylines) == 0:
        raise EmptyNetwork("road network has no polylines")

    samples = []
    chains: list[list[int]] = []
    for poly in network.polylines:
        pts = _resample_polyline(poly, gamma)
        start = len(samples)
        samples.extend(pts)
        chains.append(list(range(start, start + len(pts))))
    raw = np.asarray(samples, dtype=float)

    uf = _UnionFind(len(raw))
    tree = cKDTree(raw)
    merge_r = 0.5 * gamma
    for a, b in tree.query_pairs(merge_r):
        if np.linalg.norm(raw[a] - raw[b]) < merge_r:
            uf.union(a, b)

    # Deterministic node ids: order of first appearance of each group root.
    root_to_id: dict[int, int] = {}
    raw_to_node = np.empty(len(raw), dtype=np.int64)
    groups: list[list[int]] = []
    for i in range(len(raw)):
        r = uf.find(i)
        if r not in root_to_id:
            root_to_id[r] = len(groups)
            groups.append([])
        nid = root_to_id[r]
        raw_to_node[i] = nid
        groups[nid].append(i)
    nodes = np.array([raw[g].mean(axis=0) for g in groups])

    adj_sets: list[set[int]] = [set() for _ in range(len(nodes))]
    for chain in chains:
        for a, b in zip(chain[:-1], chain[1:]):
            na, nb = raw_to_node[a], raw_to_node[b]
            if na != nb:
                adj_sets[na].add(int(nb))
                adj_sets[nb].add(int(na))

    ptr = np.zeros(len(nodes) + 1, dtype=np.int64)
    flat: list[int] = []
    for i, s in enumerate(adj_sets):
        row = sorted(s)
        flat.extend(row)
        ptr[i + 1] = len(flat)
    nodes.setflags(write=False)
    return RoadGraph(
        nodes=nodes,
        gamma=float(gamma),
        base_ptr=ptr,
        base_adj=np.asarray(flat, dtype=np.int64),
    )


def hop_limit_for(v_max: float, delta: float, gamma: float, slack: int = 1) -> int:
    """Hop limit K = ceil(v_max * delta / gamma) + slack (>= 1)."""
    k = int(math.ceil(v_max * delta / gamma - 1e-9)) + slack
    return max(k, 1)


def build_transition_edges(graph: RoadGraph, v_max: float, delta: float,
                           slack: int = 1) -> RoadGraph:
    """Connect node pairs whose base-hop distance is strictly below K.

    K = ceil(v_max * delta / gamma) + slack: the farthest a vehicle at the
    speed cap can travel in one slot, in node hops, plus slack for slight
    speeding. Self-loops (hop 0) are always included so a stationary
    vehicle is representable. Returns a new graph; the input is unchanged.
    """
    k = hop_limit_for(v_max, delta, graph.gamma, slack)
    n = graph.n_nodes
    ptr = np.zeros(n + 1, dtype=np.int64)
    src_parts: list[np.ndarray] = []
    hop_parts: list[np.ndarray] = []
    total = 0
    for j in range(n):
        dist = _bfs_hops(graph.base_ptr, graph.base_adj, j, max_depth=k - 1)
        reach = np.flatnonzero(dist >= 0)  # sorted ascending
        src_parts.append(reach)
        hop_parts.append(dist[reach])
        total += len(reach)
        ptr[j + 1] = total
    return RoadGraph(
        nodes=graph.nodes,
        gamma=graph.gamma,
        base_ptr=graph.base_ptr,
        base_adj=graph.base_adj,
        hop_limit=k,
        trans_ptr=ptr,
        trans_src=np.concatenate(src_parts) if src_parts else np.empty(0, np.int64),
        trans_hops=np.concatenate(hop_parts) if hop_parts else np.empty(0, np.int64),
        _kdtree=graph._kdtree,
    )


def routine_distance(graph: RoadGraph, i: int, j: int) -> float:
    """Along-road travel distance: base-hop count times gamma.

    Zero for i == j, +inf for nodes in different connected components.
    """
    hops = graph.hop_distance(i, j)
    return hops * graph.gamma if math.isfinite(hops) else math.inf


@dataclass(frozen=True)
class Corridor:
    """Fine-graph node subset within `radius` of a guiding path."""

    fine: RoadGraph
    members: np.ndarray  # sorted fine-graph node ids
    radius: float

    def subgraph(self) -> RoadGraph:
        """Fine graph restricted to corridor members (ids remapped).

        Subgraph node i corresponds to fine node self.members[i]; base
        adjacency keeps only member-to-member links, so hop counts inside
        the corridor never use roads outside it.
        """
        members = self.members
        remap = np.full(self.fine.n_nodes, -1, dtype=np.int64)
        remap[members] = np.arange(len(members))
        ptr = np.zeros(len(members) + 1, dtype=np.int64)
        flat: list[int] = []
        for new_i, old_i in enumerate(members):
            row = self.fine.base_adj[self.fine.base_ptr[old_i]:self.fine.base_ptr[old_i + 1]]
            mapped = remap[row]
            flat.extend(int(v) for v in np.sort(mapped[mapped >= 0]))
            ptr[new_i + 1] = len(flat)
        return RoadGraph(
            nodes=self.fine.nodes[members],
            gamma=self.fine.gamma,
            base_ptr=ptr,
            base_adj=np.asarray(flat, dtype=np.int64),
        )


def build_corridor(fine: RoadGraph, coarse_path, radius: float) -> Corridor:
    """Fine nodes within `radius` of any point of a guiding coarse path."""
    pts = np.atleast_2d(np.asarray(coarse_path, dtype=float))
    if pts.size == 0:
        raise ValueError("coarse path must be nonempty")
    if radius <= 0:
        raise ValueError(f"radius must be positive, got {radius}")
    hits = fine.kdtree().query_ball_point(pts, r=radius)
    members = sorted({i for row in hits for i in row})
    if not members:
        raise EmptyCorridor(
            f"no fine node within {radius} m of the {len(pts)}-point path"
        )
    return Corridor(fine=fine, members=np.asarray(members, dtype=np.int64),
                    radius=float(radius))
