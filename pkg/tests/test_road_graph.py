import itertools
import math

import numpy as np
import pytest

from conftest import straight_road
from oracles import bfs_hops_brute, transition_pairs_brute
from rssmm.road_graph import (
    Corridor,
    EmptyCorridor,
    EmptyNetwork,
    RoadNetwork,
    UnknownNode,
    build_corridor,
    build_nodes,
    build_transition_edges,
    hop_limit_for,
    routine_distance,
)
from rssmm.simulator import gen_network


def edges_of(graph):
    """Transition edge set as ordered pairs (i, j)."""
    out = set()
    for j in range(graph.n_nodes):
        for i in graph.trans_src[graph.trans_ptr[j]:graph.trans_ptr[j + 1]]:
            out.add((int(i), j))
    return out


def base_edges_of(graph):
    out = set()
    for i in range(graph.n_nodes):
        for j in graph.neighbors(i):
            out.add((min(i, int(j)), max(i, int(j))))
    return out


class TestBuildNodes:
    def test_straight_road_resampling(self):
        g = build_nodes(straight_road(length=10.0), gamma=2.0)
        assert g.n_nodes == 6
        xs = sorted(g.nodes[:, 0])
        assert xs == pytest.approx([0, 2, 4, 6, 8, 10])
        assert len(base_edges_of(g)) == 5

    def test_crossing_roads_merge(self):
        net = RoadNetwork(polylines=(
            np.array([[-10.0, 0.0], [10.0, 0.0]]),
            np.array([[0.0, -10.0], [0.0, 10.0]]),
        ))
        g = build_nodes(net, gamma=5.0)
        # Candidate merged node at the origin with degree 4.
        center = int(np.argmin(np.linalg.norm(g.nodes, axis=1)))
        assert np.linalg.norm(g.nodes[center]) < 1e-9
        assert len(g.neighbors(center)) == 4

    def test_gamma_zero_rejected(self):
        with pytest.raises(ValueError):
            build_nodes(straight_road(), gamma=0.0)

    def test_empty_network(self):
        with pytest.raises((EmptyNetwork, ValueError)):
            RoadNetwork(polylines=())
            build_nodes(RoadNetwork(polylines=()), gamma=1.0)

    def test_short_leftover_merged_into_endpoint(self):
        # Length 8.9 at gamma 2: samples 0,2,4,6,8 then leftover 0.9 under
        # gamma/2 pulls the last sample onto the endpoint.
        g = build_nodes(straight_road(length=8.9), gamma=2.0)
        xs = sorted(g.nodes[:, 0])
        assert xs == pytest.approx([0, 2, 4, 6, 8.9])
        # Leftover of exactly gamma/2 stays a separate sample.
        g = build_nodes(straight_road(length=9.0), gamma=2.0)
        assert sorted(g.nodes[:, 0]) == pytest.approx([0, 2, 4, 6, 8, 9])

    def test_consecutive_spacing_bound(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            length = float(rng.uniform(3, 57))
            gamma = float(rng.uniform(0.5, 5))
            g = build_nodes(straight_road(length=length), gamma=gamma)
            xs = np.sort(g.nodes[:, 0])
            gaps = np.diff(xs)
            assert np.all(gaps <= gamma * 1.5 + 1e-9)

    def test_grid_intersections_have_degree_4(self):
        net = gen_network("grid", rows=3, cols=3, spacing=12.0)
        g = build_nodes(net, gamma=4.0)
        center = int(np.argmin(np.linalg.norm(g.nodes - np.array([12.0, 12.0]), axis=1)))
        assert len(g.neighbors(center)) == 4


class TestTransitionEdges:
    def test_chain_k3(self):
        g = build_nodes(straight_road(length=18.0), gamma=2.0)
        g = build_transition_edges(g, v_max=25.0, delta=0.2, slack=0)
        # ceil(25*0.2/2) = 3: hops 0..2 qualify
        assert g.hop_limit == 3
        order = np.argsort(g.nodes[:, 0])
        mid = int(order[5])
        neighbors = {int(i) for i in
                     g.trans_src[g.trans_ptr[mid]:g.trans_ptr[mid + 1]]}
        expected = {int(order[5 + d]) for d in (-2, -1, 0, 1, 2)}
        assert neighbors == expected

    def test_k1_only_self_loops(self):
        g = build_transition_edges(build_nodes(straight_road(10.0), 2.0),
                                   v_max=1.0, delta=0.1, slack=0)
        assert g.hop_limit == 1
        assert edges_of(g) == {(i, i) for i in range(g.n_nodes)}

    def test_hop_limit_formula(self):
        assert hop_limit_for(22.2, 0.2, 2.0, slack=1) == 4
        assert hop_limit_for(22.2, 0.2, 300.0, slack=1) == 2
        assert hop_limit_for(4.0, 1.0, 2.0, slack=0) == 2
        assert hop_limit_for(1.0, 0.1, 2.0, slack=0) == 1

    def test_grid_matches_bfs_oracle(self):
        net = gen_network("grid", rows=5, cols=5, spacing=1.0)
        g = build_nodes(net, gamma=1.0)
        g = build_transition_edges(g, v_max=2.4, delta=1.0, slack=1)
        assert g.hop_limit == 4
        brute = transition_pairs_brute(g.n_nodes, base_edges_of(g), 4)
        assert edges_of(g) == brute

    def test_random_graphs_match_oracle(self):
        rng = np.random.default_rng(3)
        for _ in range(15):
            n_roads = int(rng.integers(2, 6))
            polys = []
            for _ in range(n_roads):
                start = rng.uniform(0, 30, size=2)
                end = rng.uniform(0, 30, size=2)
                if np.linalg.norm(end - start) < 2:
                    end = start + np.array([4.0, 0.0])
                polys.append(np.vstack([start, end]))
            g = build_nodes(RoadNetwork(polylines=tuple(polys)), gamma=2.5)
            if g.n_nodes > 100:
                continue
            k = int(rng.integers(1, 5))
            gt = build_transition_edges(g, v_max=k * 2.5 - 1.0, delta=1.0, slack=0)
            brute = transition_pairs_brute(g.n_nodes, base_edges_of(g), gt.hop_limit)
            assert edges_of(gt) == brute

    def test_edge_symmetry(self, chain_graph):
        edges = edges_of(chain_graph)
        assert all((j, i) in edges for i, j in edges)

    def test_speed_soundness(self, chain_graph):
        g = chain_graph
        delta = 0.2
        cap = g.hop_limit * g.gamma / delta
        for i, j in edges_of(g):
            assert routine_distance(g, i, j) / delta <= cap


class TestRoutineDistance:
    def test_identity(self, chain_graph):
        assert routine_distance(chain_graph, 3, 3) == 0.0

    def test_adjacent(self):
        g = build_nodes(straight_road(length=10.0), gamma=2.0)
        order = np.argsort(g.nodes[:, 0])
        assert routine_distance(g, int(order[0]), int(order[1])) == pytest.approx(2.0)

    def test_grid_corners(self):
        net = gen_network("grid", rows=4, cols=4, spacing=1.0)
        g = build_nodes(net, gamma=1.0)
        a = int(np.argmin(np.linalg.norm(g.nodes - np.array([0.0, 0.0]), axis=1)))
        b = int(np.argmin(np.linalg.norm(g.nodes - np.array([3.0, 3.0]), axis=1)))
        assert routine_distance(g, a, b) == pytest.approx(6.0)

    def test_unknown_node(self, chain_graph):
        with pytest.raises(UnknownNode):
            routine_distance(chain_graph, 0, 999)

    def test_disconnected_infinite(self):
        net = RoadNetwork(polylines=(
            np.array([[0.0, 0.0], [10.0, 0.0]]),
            np.array([[0.0, 100.0], [10.0, 100.0]]),
        ))
        g = build_nodes(net, gamma=2.0)
        far = int(np.argmax(g.nodes[:, 1]))
        near = int(np.argmin(g.nodes[:, 1]))
        assert routine_distance(g, near, far) == math.inf

    def test_metric_properties_exhaustive(self):
        net = gen_network("grid", rows=3, cols=3, spacing=2.0)
        g = build_nodes(net, gamma=2.0)
        assert g.n_nodes <= 50
        n = g.n_nodes
        d = np.zeros((n, n))
        for i, j in itertools.product(range(n), range(n)):
            d[i, j] = routine_distance(g, i, j)
        assert np.allclose(d, d.T)
        assert all(d[i, i] == 0 for i in range(n))
        assert all(d[i, j] > 0 for i in range(n) for j in range(n) if i != j)
        for i, j, k in itertools.product(range(n), repeat=3):
            assert d[i, j] <= d[i, k] + d[k, j] + 1e-9


class TestCorridor:
    def test_whole_map(self, chain_graph):
        c = build_corridor(chain_graph, chain_graph.nodes[:1], radius=1000.0)
        assert len(c.members) == chain_graph.n_nodes
        sub = c.subgraph()
        assert sub.n_nodes == chain_graph.n_nodes
        assert np.array_equal(sub.base_ptr, chain_graph.base_ptr)
        assert np.array_equal(sub.base_adj, chain_graph.base_adj)

    def test_single_road_containment(self):
        net = RoadNetwork(polylines=(
            np.array([[0.0, 0.0], [50.0, 0.0]]),
            np.array([[0.0, 40.0], [50.0, 40.0]]),
        ))
        fine = build_nodes(net, gamma=2.0)
        path = np.array([[10.0, 0.0], [30.0, 0.0]])
        c = build_corridor(fine, path, radius=15.0)
        assert np.all(fine.nodes[c.members][:, 1] < 1.0)

    def test_membership_matches_distance_filter(self):
        net = gen_network("grid", rows=4, cols=4, spacing=10.0)
        fine = build_nodes(net, gamma=1.0)
        rng = np.random.default_rng(5)
        pts = rng.uniform(0, 30, size=(6, 2))
        radius = 7.0
        c = build_corridor(fine, pts, radius=radius)
        dists = np.min(np.linalg.norm(
            fine.nodes[:, None, :] - pts[None, :, :], axis=2), axis=1)
        expected = set(np.flatnonzero(dists <= radius).tolist())
        got = set(int(v) for v in c.members)
        # cKDTree query_ball_point uses <=; boundary-equal points included
        assert got == expected

    def test_empty_corridor(self, chain_graph):
        with pytest.raises(EmptyCorridor):
            build_corridor(chain_graph, np.array([[1e6, 1e6]]), radius=1.0)

    def test_subgraph_restricts_adjacency(self):
        net = gen_network("grid", rows=3, cols=3, spacing=10.0)
        fine = build_nodes(net, gamma=1.0)
        c = build_corridor(fine, np.array([[0.0, 0.0]]), radius=5.0)
        sub = c.subgraph()
        assert sub.n_nodes == len(c.members)
        for i in range(sub.n_nodes):
            for j in sub.neighbors(i):
                assert 0 <= int(j) < sub.n_nodes
