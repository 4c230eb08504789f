"""Topologies, classical links, shortest-path/ECMP routing, message transport.

Node 0 is always the central controller. Each edge carries a classical
channel modelled by base delay, truncated-Gaussian jitter, serialization at
finite bandwidth, Bernoulli loss, and a drop-tail FIFO queue of bounded
length. Times inside this module are seconds.
"""

from __future__ import annotations

import heapq
import itertools
from collections import deque
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import TooFewNodes, Unreachable


class TopologyKind(Enum):
    STAR = "star"
    RING = "ring"
    MESH = "mesh"
    TWO_CLUSTER_BRIDGE = "two_cluster_bridge"


class MessageClass(Enum):
    PRIORITY_ACTION = "priority_action"
    CONTROL_SETPOINT = "control_setpoint"
    TELEMETRY = "telemetry"


# Default payload sizes in bits; richer payloads are larger.
MESSAGE_SIZE_BITS = {
    MessageClass.TELEMETRY: 2000,
    MessageClass.CONTROL_SETPOINT: 1500,
    MessageClass.PRIORITY_ACTION: 1000,
}


@dataclass(frozen=True)
class Topology:
    kind: TopologyKind
    n_nodes: int
    edges: tuple[tuple[int, int], ...]

    def adjacency(self) -> dict[int, list[int]]:
        adj: dict[int, list[int]] = {i: [] for i in range(self.n_nodes)}
        for a, b in self.edges:
            adj[a].append(b)
            adj[b].append(a)
        for neighbours in adj.values():
            neighbours.sort()
        return adj


def build_topology(kind: TopologyKind, n_nodes: int) -> Topology:
    """Construct one of the four supported graphs.

    star: all nodes adjacent to the controller only.
    ring: a single cycle through all nodes.
    mesh: ring plus antipodal chords i -- (i + n//2) mod n.
    two_cluster_bridge: two complete halves joined by one bridge edge.
    """
    if n_nodes < 2:
        raise TooFewNodes(f"need at least 2 nodes, got {n_nodes}")
    edges: list[tuple[int, int]] = []
    if kind is TopologyKind.STAR:
        edges = [(0, i) for i in range(1, n_nodes)]
    elif kind is TopologyKind.RING:
        if n_nodes < 3:
            raise TooFewNodes(f"ring needs >= 3 nodes, got {n_nodes}")
        edges = [(i, (i + 1) % n_nodes) for i in range(n_nodes)]
    elif kind is TopologyKind.MESH:
        if n_nodes < 3:
            raise TooFewNodes(f"mesh needs >= 3 nodes, got {n_nodes}")
        edges = [(i, (i + 1) % n_nodes) for i in range(n_nodes)]
        seen = {tuple(sorted(e)) for e in edges}
        half = n_nodes // 2
        if half >= 2:
            for i in range(n_nodes):
                chord = tuple(sorted((i, (i + half) % n_nodes)))
                if chord not in seen:
                    seen.add(chord)
                    edges.append(chord)
    elif kind is TopologyKind.TWO_CLUSTER_BRIDGE:
        if n_nodes < 4 or n_nodes % 2 != 0:
            raise TooFewNodes(
                f"two-cluster bridge needs an even count >= 4, got {n_nodes}")
        half = n_nodes // 2
        for cluster in (range(half), range(half, n_nodes)):
            edges.extend(itertools.combinations(cluster, 2))
        edges.append((0, half))  # single inter-cluster bridge
    else:
        raise ValueError(f"unknown topology kind {kind}")
    normalised = tuple(sorted(tuple(sorted(e)) for e in edges))
    return Topology(kind=kind, n_nodes=n_nodes, edges=normalised)


def shortest_paths(topology: Topology, src: int, dst: int) -> list[tuple[int, ...]]:
    """All shortest paths src -> dst by hop count (BFS layer expansion)."""
    if src == dst:
        raise ValueError("src and dst must differ")
    adj = topology.adjacency()
    dist = {src: 0}
    parents: dict[int, list[int]] = {src: []}
    frontier = deque([src])
    while frontier:
        u = frontier.popleft()
        if u == dst:
            break
        for v in adj[u]:
            if v not in dist:
                dist[v] = dist[u] + 1
                parents[v] = [u]
                frontier.append(v)
            elif dist[v] == dist[u] + 1:
                parents[v].append(u)
    if dst not in dist:
        raise Unreachable(f"no path from {src} to {dst}")

    paths: list[tuple[int, ...]] = []

    def unwind(node: int, acc: list[int]) -> None:
        if node == src:
            paths.append(tuple(reversed(acc + [src])))
            return
        for p in parents[node]:
            unwind(p, acc + [node])

    unwind(dst, [])
    paths.sort()
    return paths


class Router:
    """Shortest-path routing with uniform choice among equal-cost paths."""

    def __init__(self, topology: Topology):
        self.topology = topology
        self._cache: dict[tuple[int, int], list[tuple[int, ...]]] = {}

    def route(self, src: int, dst: int, rng: np.random.Generator) -> tuple[int, ...]:
        key = (src, dst)
        paths = self._cache.get(key)
        if paths is None:
            paths = shortest_paths(self.topology, src, dst)
            self._cache[key] = paths
        if len(paths) == 1:
            return paths[0]
        return paths[int(rng.integers(0, len(paths)))]


@dataclass
class Message:
    id: int
    msg_class: MessageClass
    src: int
    claimed_identity: int
    dst: int
    size_bits: int
    payload: dict
    created_at: float
    envelope: object = None
    malicious: bool = False
    attack_kind: str | None = None
    # transport bookkeeping
    path: tuple[int, ...] = ()
    hop_index: int = 0
    network_delay_s: float = 0.0
    security_delay_s: float = 0.0
    tampered: bool = False


class DropReason(Enum):
    LOSS = "loss"
    QUEUE_OVERFLOW = "queue_overflow"


@dataclass(frozen=True)
class TransmitOutcome:
    delivered: bool
    arrival_time: float = 0.0
    reason: DropReason | None = None


@dataclass
class Link:
    a: int
    b: int
    latency_s: float = 0.0008
    jitter_s: float = 0.0003
    bandwidth_bps: float = 10_000_000.0
    loss_prob: float = 0.001
    queue_capacity: int = 64
    # (departure_time,) heap of messages occupying the queue
    _departures: list[float] = field(default_factory=list)
    busy_until: float = 0.0

    def _drain(self, t_now: float) -> None:
        while self._departures and self._departures[0] <= t_now:
            heapq.heappop(self._departures)

    def queue_length(self, t_now: float) -> int:
        self._drain(t_now)
        return len(self._departures)

    def transmit(self, msg: Message, t_now: float, rng: np.random.Generator) -> TransmitOutcome:
        """One hop: queue, serialize, propagate. Failure is an outcome, not an error.

        PriorityAction traffic jumps the queue (no queueing wait) but still
        occupies a slot against the capacity bound.
        """
        self._drain(t_now)
        if len(self._departures) >= self.queue_capacity:
            return TransmitOutcome(False, reason=DropReason.QUEUE_OVERFLOW)
        if self.loss_prob > 0.0 and rng.random() < self.loss_prob:
            return TransmitOutcome(False, reason=DropReason.LOSS)
        serialization = msg.size_bits / self.bandwidth_bps
        if msg.msg_class is MessageClass.PRIORITY_ACTION:
            queueing = 0.0
            departure = t_now + serialization
        else:
            queueing = max(0.0, self.busy_until - t_now)
            departure = t_now + queueing + serialization
            self.busy_until = departure
        heapq.heappush(self._departures, departure)
        jitter = max(0.0, self.jitter_s * rng.standard_normal()) if self.jitter_s > 0 else 0.0
        arrival = departure + self.latency_s + jitter
        return TransmitOutcome(True, arrival_time=arrival)


def build_links(topology: Topology, *, latency_s: float, jitter_s: float,
                bandwidth_bps: float, loss_prob: float,
                queue_capacity: int) -> dict[tuple[int, int], Link]:
    links: dict[tuple[int, int], Link] = {}
    for a, b in topology.edges:
        links[(a, b)] = Link(
            a=a, b=b,
            latency_s=latency_s, jitter_s=jitter_s,
            bandwidth_bps=bandwidth_bps, loss_prob=loss_prob,
            queue_capacity=queue_capacity,
        )
    return links


def link_between(links: dict[tuple[int, int], Link], u: int, v: int) -> Link:
    key = (u, v) if u < v else (v, u)
    return links[key]
