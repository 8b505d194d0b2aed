import numpy as np
import pytest

from rssmm.core import BaseStation, RssObservation, RssObservationSequence
from rssmm.road_graph import RoadNetwork, build_nodes, build_transition_edges


def make_seq(slot_specs, delta=0.2):
    """Sequence from [[(bs_id, rss), ...], ...]; empty lists are empty slots."""
    slots = tuple(
        tuple(RssObservation(bs_id=b, rss=float(r)) for b, r in slot)
        for slot in slot_specs
    )
    return RssObservationSequence(slots=slots, delta=delta)


def straight_road(length=100.0, y=0.0):
    return RoadNetwork(polylines=(np.array([[0.0, y], [length, y]]),))


@pytest.fixture(scope="session")
def chain_graph():
    """10-node chain, gamma 2, transitions within 3 hops (K=4)."""
    net = straight_road(length=18.0)
    g = build_nodes(net, 2.0)
    return build_transition_edges(g, v_max=30.0, delta=0.2, slack=1)


@pytest.fixture(scope="session")
def grid_network():
    from rssmm.simulator import gen_network
    return gen_network("grid", rows=4, cols=4, spacing=30.0)


def station(bs_id, x, y):
    return BaseStation(id=bs_id, position=np.array([x, y]))
