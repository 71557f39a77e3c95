"""Deterministic discrete-event core.

Events execute in (time, sequence) order, so ties resolve by scheduling
order and never by hash or iteration luck.  All randomness flows through
named streams seeded from (global seed, stream label); two runs with the
same seed and inputs replay the exact same event history, and adding a
stream for one edge never perturbs the draws of another.
"""

from __future__ import annotations

import hashlib
import heapq
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable

import numpy as np

from .model import Topology
from .physics import PhysicsParams


class EventKind(Enum):
    CLASSICAL_DELIVERY = "ClassicalDelivery"
    ATTEMPT_TICK = "AttemptTick"
    TIMEOUT = "Timeout"
    PROTOCOL_STEP = "ProtocolStep"


class PastEventError(Exception):
    """An event was scheduled before the current clock."""


class LivelockError(Exception):
    """The run exceeded its event ceiling without reaching its stop condition."""


class ResourceExhausted(Exception):
    """A memory acquisition asked for more slots than a node has free."""


@dataclass
class SimEvent:
    time: float
    seq: int
    kind: EventKind
    summary: str
    action: Callable[[], None] = field(repr=False)
    cancelled: bool = field(default=False, repr=False)

    def cancel(self) -> None:
        self.cancelled = True


def stream_seed(global_seed: int, label: str) -> int:
    """Stable 64-bit seed for one named stream; independent of platform."""
    digest = hashlib.sha256(f"{global_seed}:{label}".encode()).digest()
    return int.from_bytes(digest[:8], "big")


class MemoryLedger:
    """Tracks memory-slot occupancy per node, tagged by owner.

    Tags are opaque strings (request or session ids).  Besides enforcing
    per-node capacity, the ledger integrates slot-seconds per (tag, node)
    so utilization can be reported per request afterwards.
    """

    def __init__(self, topology: Topology):
        self.capacity = {
            node_id: spec.memory_count for node_id, spec in topology.nodes.items()
        }
        self.in_use: dict[str, int] = {node_id: 0 for node_id in topology.nodes}
        self._held: dict[tuple[str, str], int] = {}
        self._since: dict[tuple[str, str], float] = {}
        self._slot_seconds: dict[tuple[str, str], float] = {}

    def available(self, node_id: str) -> int:
        return self.capacity[node_id] - self.in_use[node_id]

    def held_by(self, tag: str, node_id: str) -> int:
        return self._held.get((tag, node_id), 0)

    def tags_holding(self, tag: str) -> list[str]:
        return [node for (t, node), n in self._held.items() if t == tag and n > 0]

    def _settle(self, key: tuple[str, str], now: float) -> None:
        held = self._held.get(key, 0)
        since = self._since.get(key, now)
        self._slot_seconds[key] = self._slot_seconds.get(key, 0.0) + held * (now - since)
        self._since[key] = now

    def acquire(self, node_id: str, count: int, tag: str, now: float) -> None:
        if count > self.available(node_id):
            raise ResourceExhausted(
                f"{node_id}: need {count} slots, {self.available(node_id)} free"
            )
        key = (tag, node_id)
        self._settle(key, now)
        self.in_use[node_id] += count
        self._held[key] = self._held.get(key, 0) + count

    def release(self, node_id: str, count: int, tag: str, now: float) -> None:
        key = (tag, node_id)
        held = self._held.get(key, 0)
        if count > held:
            raise ValueError(f"{tag} releases {count} at {node_id} but holds {held}")
        self._settle(key, now)
        self._held[key] = held - count
        self.in_use[node_id] -= count

    def release_all(self, tag: str, now: float) -> None:
        for node_id in self.tags_holding(tag):
            self.release(node_id, self._held[(tag, node_id)], tag, now)

    def occupancy_s(self, tag: str, now: float, nodes=None) -> float:
        """Accumulated slot-seconds for ``tag``, optionally over given nodes."""
        total = 0.0
        for (t, node_id), _ in list(self._held.items()):
            if t != tag or (nodes is not None and node_id not in nodes):
                continue
            self._settle((t, node_id), now)
            total += self._slot_seconds.get((t, node_id), 0.0)
        return total


class Simulator:
    """Event queue, clock, named random streams, and memory accounting."""

    def __init__(
        self,
        topology: Topology,
        params: PhysicsParams,
        seed: int = 0,
        livelock_ceiling: int = 2_000_000,
    ):
        self.topology = topology
        self.params = params
        self.seed = seed
        self.livelock_ceiling = livelock_ceiling
        self.now = 0.0
        self.trace: list[tuple[float, int, str, str]] = []
        self._heap: list[tuple[float, int, SimEvent]] = []
        self._seq = 0
        self._streams: dict[str, np.random.Generator] = {}
        self._link_ids = 0
        self.memory = MemoryLedger(topology)

    def stream(self, label: str) -> np.random.Generator:
        gen = self._streams.get(label)
        if gen is None:
            gen = np.random.default_rng(stream_seed(self.seed, label))
            self._streams[label] = gen
        return gen

    def next_link_id(self) -> int:
        self._link_ids += 1
        return self._link_ids

    def schedule(
        self, time: float, kind: EventKind, action: Callable[[], None], summary: str = ""
    ) -> SimEvent:
        if time < self.now:
            raise PastEventError(f"cannot schedule at {time}, clock is at {self.now}")
        event = SimEvent(time, self._seq, kind, summary, action)
        self._seq += 1
        heapq.heappush(self._heap, (time, event.seq, event))
        return event

    def after(
        self, delay: float, kind: EventKind, action: Callable[[], None], summary: str = ""
    ) -> SimEvent:
        return self.schedule(self.now + delay, kind, action, summary)

    def send_classical(
        self,
        src: str,
        dst: str,
        length_km: float,
        action: Callable[[], None],
        summary: str = "",
    ) -> SimEvent:
        """Deliver a classical message after propagation plus receiver processing."""
        delay = length_km / self.params.c_fiber + self.topology.nodes[dst].proc_delay
        return self.after(
            delay, EventKind.CLASSICAL_DELIVERY, action, summary or f"{src}->{dst}"
        )

    def run_until(
        self,
        stop: Callable[[], bool] | None = None,
        time_limit: float | None = None,
    ) -> None:
        """Process events until the stop predicate holds or the queue drains.

        Raises LivelockError if the event ceiling is hit first; a finished
        simulation should always exhaust its work or satisfy its stop.
        """
        processed = 0
        while self._heap:
            if stop is not None and stop():
                return
            if time_limit is not None and self._heap[0][0] > time_limit:
                return
            _, _, event = heapq.heappop(self._heap)
            if event.cancelled:
                continue
            processed += 1
            if processed > self.livelock_ceiling:
                raise LivelockError(
                    f"exceeded {self.livelock_ceiling} events at t={self.now}"
                )
            self.now = event.time
            self.trace.append((event.time, event.seq, event.kind.value, event.summary))
            event.action()

    def pending(self) -> int:
        return sum(1 for _, _, ev in self._heap if not ev.cancelled)

    def dump_trace(self, fp) -> None:
        """Write the executed-event trace, one tab-separated line per event."""
        for time, seq, kind, summary in self.trace:
            fp.write(f"{time:.9e}\t{seq}\t{kind}\t{summary}\n")
