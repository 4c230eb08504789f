"""Deterministic discrete-event core: clock, event queue, named RNG streams.

A single run is strictly sequential. Reproducibility rests on two rules:
events dequeue in (time, insertion sequence) order, and every stochastic
subsystem draws from its own label-salted stream so that enabling one
subsystem never perturbs another's draws.
"""

from __future__ import annotations

import hashlib
import heapq
from dataclasses import dataclass
from enum import Enum
from typing import Any, Callable

import numpy as np

from .errors import PastEvent, UnknownStream


class EventKind(Enum):
    PHYSICS_TICK = "physics_tick"
    MESSAGE_SEND = "message_send"
    MESSAGE_ARRIVAL = "message_arrival"
    ATTACK_WINDOW_START = "attack_window_start"
    ATTACK_WINDOW_END = "attack_window_end"
    IDS_PROBE = "ids_probe"
    KEY_POOL_TICK = "key_pool_tick"
    CHALLENGE_ISSUE = "challenge_issue"


@dataclass
class Event:
    time: float
    sequence: int
    kind: EventKind
    payload: Any = None
    cancelled: bool = False


@dataclass
class Clock:
    now: float = 0.0
    physics_dt: float = 1.0
    horizon: float = 3600.0


class RngRegistry:
    """Named streams derived from a 64-bit master seed salted by label.

    Identical (seed, label) pairs always yield identical sequences; draws on
    one stream never advance another.
    """

    def __init__(self, master_seed: int, labels: tuple[str, ...]):
        self.master_seed = master_seed
        self._streams: dict[str, np.random.Generator] = {}
        for label in labels:
            salt = int.from_bytes(
                hashlib.sha256(label.encode("utf-8")).digest()[:8], "big"
            )
            seq = np.random.SeedSequence(entropy=(master_seed & 0xFFFFFFFFFFFFFFFF, salt))
            self._streams[label] = np.random.Generator(np.random.PCG64(seq))

    def stream(self, label: str) -> np.random.Generator:
        try:
            return self._streams[label]
        except KeyError:
            raise UnknownStream(f"stream {label!r} was not registered at run start") from None

    def labels(self) -> tuple[str, ...]:
        return tuple(self._streams)


class EventQueue:
    """Binary min-heap on (time, sequence) with lazy cancellation.

    Heap entries are (time, sequence, event) tuples so ordering never
    touches Event attributes.
    """

    def __init__(self, clock: Clock):
        self.clock = clock
        self._heap: list[tuple[float, int, Event]] = []
        self._sequence = 0

    def schedule(self, time: float, kind: EventKind, payload: Any = None) -> Event:
        if time < self.clock.now:
            raise PastEvent(f"cannot schedule {kind.value} at t={time} (now={self.clock.now})")
        event = Event(time=time, sequence=self._sequence, kind=kind, payload=payload)
        self._sequence += 1
        heapq.heappush(self._heap, (time, event.sequence, event))
        return event

    @staticmethod
    def cancel(event: Event) -> None:
        event.cancelled = True

    def __len__(self) -> int:
        return sum(1 for _, _, e in self._heap if not e.cancelled)

    def pop_next(self) -> Event | None:
        """Next live event at or before the horizon, advancing the clock."""
        while self._heap:
            time = self._heap[0][0]
            if time > self.clock.horizon:
                return None
            _, _, event = heapq.heappop(self._heap)
            if event.cancelled:
                continue
            self.clock.now = event.time
            return event
        return None

    def run(self, handler: Callable[[Event], None]) -> int:
        """Dispatch events in order until the queue is empty or past horizon."""
        count = 0
        while True:
            event = self.pop_next()
            if event is None:
                break
            handler(event)
            count += 1
        self.clock.now = self.clock.horizon
        return count


# Stream labels registered for every run; one per stochastic subsystem.
STREAM_LABELS = (
    "wind",       # wind capacity-factor process
    "load",       # per-node demand noise
    "channel",    # link loss and jitter draws
    "routing",    # equal-cost multi-path selection
    "attack",     # all adversary draws
    "signature",  # classical forgery verification outcomes
    "probe",      # Ping-Pong IDS sampling
    "qrng",       # nonces, challenge timing and targeting
)
