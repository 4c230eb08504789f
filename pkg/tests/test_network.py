from collections import Counter, deque

import numpy as np
import pytest

from qugrid.errors import TooFewNodes, Unreachable
from qugrid.network import (DropReason, Link, Message, MessageClass, Router,
                            Topology, TopologyKind, build_topology, link_between,
                            build_links, shortest_paths)


def bfs_distance(topology, src, dst):
    """Independent BFS oracle for hop distances."""
    adj = topology.adjacency()
    dist = {src: 0}
    frontier = deque([src])
    while frontier:
        u = frontier.popleft()
        for v in adj[u]:
            if v not in dist:
                dist[v] = dist[u] + 1
                frontier.append(v)
    return dist.get(dst)


def make_msg(msg_class=MessageClass.TELEMETRY, size=1000):
    return Message(id=1, msg_class=msg_class, src=1, claimed_identity=1, dst=0,
                   size_bits=size, payload={}, created_at=0.0)


# ------------------------------------------------------------------- topology

def test_star_edge_count_and_incidence():
    topo = build_topology(TopologyKind.STAR, 5)
    assert len(topo.edges) == 4
    assert all(0 in edge for edge in topo.edges)


def test_ring_is_a_cycle():
    topo = build_topology(TopologyKind.RING, 5)
    assert len(topo.edges) == 5
    degrees = Counter()
    for a, b in topo.edges:
        degrees[a] += 1
        degrees[b] += 1
    assert all(d == 2 for d in degrees.values())


def test_two_cluster_bridge_edge_count():
    # two triangles plus one bridge
    topo = build_topology(TopologyKind.TWO_CLUSTER_BRIDGE, 6)
    assert len(topo.edges) == 7


def test_mesh_is_ring_plus_chords():
    topo = build_topology(TopologyKind.MESH, 8)
    ring = {tuple(sorted((i, (i + 1) % 8))) for i in range(8)}
    assert ring.issubset(set(topo.edges))
    assert len(topo.edges) == 8 + 4


def test_too_few_nodes():
    with pytest.raises(TooFewNodes):
        build_topology(TopologyKind.RING, 2)
    with pytest.raises(TooFewNodes):
        build_topology(TopologyKind.TWO_CLUSTER_BRIDGE, 5)


def test_all_topologies_connected_up_to_20():
    for kind in TopologyKind:
        for n in range(4, 21):
            if kind is TopologyKind.TWO_CLUSTER_BRIDGE and n % 2:
                continue
            topo = build_topology(kind, n)
            assert all(bfs_distance(topo, 0, v) is not None for v in range(n))


# -------------------------------------------------------------------- routing

def test_star_route_single_hop():
    router = Router(build_topology(TopologyKind.STAR, 5))
    rng = np.random.default_rng(0)
    assert router.route(3, 0, rng) == (3, 0)


def test_ring_shortest_arc():
    router = Router(build_topology(TopologyKind.RING, 5))
    rng = np.random.default_rng(0)
    assert router.route(2, 4, rng) == (2, 3, 4)


def test_routes_match_bfs_oracle_all_topologies():
    rng = np.random.default_rng(1)
    for kind in TopologyKind:
        for n in (6, 12, 20):
            topo = build_topology(kind, n)
            router = Router(topo)
            for dst in range(1, n):
                path = router.route(0, dst, rng)
                assert len(path) - 1 == bfs_distance(topo, 0, dst)
                for u, v in zip(path, path[1:]):
                    assert tuple(sorted((u, v))) in set(topo.edges)


def test_ecmp_uniform_choice():
    # ring with even size: antipodal pair has two equal shortest arcs
    topo = build_topology(TopologyKind.RING, 6)
    paths = shortest_paths(topo, 0, 3)
    assert len(paths) == 2
    router = Router(topo)
    rng = np.random.default_rng(42)
    counts = Counter(router.route(0, 3, rng) for _ in range(10_000))
    for path in paths:
        assert counts[path] / 10_000 == pytest.approx(0.5, abs=0.03)


def test_unreachable_when_disconnected():
    broken = Topology(kind=TopologyKind.STAR, n_nodes=4, edges=((0, 1), (0, 2)))
    with pytest.raises(Unreachable):
        shortest_paths(broken, 3, 0)


# ------------------------------------------------------------------- tranport

def test_transmit_delay_arithmetic():
    # 1000 bits at 1000 kbps = 1 ms serialization, plus 5 ms propagation
    link = Link(a=0, b=1, latency_s=0.005, jitter_s=0.0,
                bandwidth_bps=1_000_000.0, loss_prob=0.0, queue_capacity=8)
    outcome = link.transmit(make_msg(), 0.0, np.random.default_rng(0))
    assert outcome.delivered
    assert outcome.arrival_time == pytest.approx(0.006)


def test_transmit_certain_loss():
    link = Link(a=0, b=1, loss_prob=1.0)
    for _ in range(10):
        outcome = link.transmit(make_msg(), 0.0, np.random.default_rng(0))
        assert not outcome.delivered
        assert outcome.reason is DropReason.LOSS


def test_queue_overflow_exactly_one_drop():
    link = Link(a=0, b=1, jitter_s=0.0, loss_prob=0.0, queue_capacity=4)
    outcomes = [link.transmit(make_msg(), 0.0, np.random.default_rng(0))
                for _ in range(5)]
    dropped = [o for o in outcomes if not o.delivered]
    assert len(dropped) == 1
    assert dropped[0].reason is DropReason.QUEUE_OVERFLOW


def test_queue_drains_over_time():
    link = Link(a=0, b=1, jitter_s=0.0, loss_prob=0.0, queue_capacity=2)
    link.transmit(make_msg(), 0.0, np.random.default_rng(0))
    link.transmit(make_msg(), 0.0, np.random.default_rng(0))
    assert not link.transmit(make_msg(), 0.0, np.random.default_rng(0)).delivered
    # once earlier departures pass, capacity frees up
    assert link.transmit(make_msg(), 10.0, np.random.default_rng(0)).delivered


def test_priority_action_skips_queueing_wait():
    link = Link(a=0, b=1, latency_s=0.005, jitter_s=0.0,
                bandwidth_bps=1_000_000.0, loss_prob=0.0, queue_capacity=16)
    rng = np.random.default_rng(0)
    for _ in range(5):
        link.transmit(make_msg(), 0.0, rng)  # build a backlog
    outcome = link.transmit(make_msg(MessageClass.PRIORITY_ACTION), 0.0, rng)
    assert outcome.arrival_time == pytest.approx(0.006)


def test_two_hop_delivery_probability_product():
    # per-hop survival 0.9 -> end-to-end about 0.81
    rng = np.random.default_rng(7)
    links = [Link(a=0, b=1, loss_prob=0.1, queue_capacity=10**6),
             Link(a=1, b=2, loss_prob=0.1, queue_capacity=10**6)]
    delivered = 0
    trials = 10_000
    for _ in range(trials):
        ok = True
        for link in links:
            if not link.transmit(make_msg(), 0.0, rng).delivered:
                ok = False
                break
        delivered += ok
    assert delivered / trials == pytest.approx(0.81, abs=0.02)


def test_link_lookup_is_orientation_free():
    topo = build_topology(TopologyKind.STAR, 4)
    links = build_links(topo, latency_s=0.001, jitter_s=0.0,
                        bandwidth_bps=1e6, loss_prob=0.0, queue_capacity=4)
    assert link_between(links, 0, 2) is link_between(links, 2, 0)
