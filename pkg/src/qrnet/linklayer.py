"""Link-layer protocols: building one end-to-end entangled channel.

Two protocols are provided.  The simultaneous protocol fires heralded
generation on every fiber segment of the path at once, then merges
neighbouring pairs by entanglement swapping according to a swap policy.
The one-by-one protocol extends a frontier pair hop by hop from the source,
swapping at each intermediate node as the next segment comes up; for third
class hardware the "channel" is instead a logically encoded qubit hopping
node to node.

Timing is event-driven and causal throughout: a node acts on a herald only
after the herald's classical propagation delay, swap outcomes travel as
messages, and pairs decay in memory while they wait.  Completion is reached
when both end nodes know the full channel exists: for the simultaneous
protocol that is the last merge's herald reaching both ends, for one-by-one
it is the far end's confirmation arriving back at the source (which for a
single-segment path degenerates to the generation herald itself, making the
two protocols coincide there).

Purification pumping, when enabled (f_target, r_max), holds one base pair
per segment and measures each additional generated pair against it on
arrival; only base pairs occupy tracked memory slots.  Round outcomes are
exchanged classically before a segment is declared ready.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable

from .capability import (
    AllPhotonicOptions,
    CapabilityViolation,
    LinkProtocol,
    Support,
    can_purify,
    supports_link,
)
from .engine import EventKind, Simulator
from .model import (
    RepeaterClass,
    Role,
    WernerLink,
    fidelity_of,
)
from . import physics
from .physics import PhysicsParams


class SwapPolicy(Enum):
    HIERARCHICAL = "hierarchical"
    LEFT_TO_RIGHT = "left_to_right"


def swap_schedule(path: list[str], policy: SwapPolicy) -> list[list[str]]:
    """Rounds of nodes that swap, in execution order.

    LEFT_TO_RIGHT walks the interior one node per round.  HIERARCHICAL
    pairs off adjacent links left to right each round, halving the chain,
    so a chain of n segments completes in ceil(log2 n) rounds.
    """
    if policy is SwapPolicy.LEFT_TO_RIGHT:
        return [[node] for node in path[1:-1]]
    rounds: list[list[str]] = []
    boundaries = list(range(1, len(path) - 1))
    while boundaries:
        rounds.append([path[i] for i in boundaries[0::2]])
        boundaries = boundaries[1::2]
    return rounds


@dataclass
class SessionStats:
    attempts_total: int = 0
    attempts_per_segment: dict[int, int] = field(default_factory=dict)
    purification_rounds: int = 0
    swaps: int = 0
    started_at: float = 0.0
    finished_at: float = 0.0


@dataclass
class ChannelResult:
    link: WernerLink
    setup_latency_s: float
    stats: SessionStats


@dataclass
class Failure:
    reason: str
    detail: str = ""
    segment: int | None = None
    stats: SessionStats | None = None


class _Segment:
    """Heralded generation (plus optional pumping) on one path edge."""

    def __init__(self, session: "LinkSession", index: int):
        self.session = session
        self.index = index
        self.node_a = session.path[index]
        self.node_b = session.path[index + 1]
        topo = session.engine.topology
        self.edge = topo.edge_between(self.node_a, self.node_b)
        self.spec_a = topo.nodes[self.node_a]
        self.spec_b = topo.nodes[self.node_b]
        self.link: WernerLink | None = None
        self.rounds = 0
        self.started = False
        self.done = False
        self.ready_time: dict[str, float] = {}
        self._base_confirmed = False
        self._pump_queue: list[WernerLink] = []
        self._known: dict[int, set[str]] = {}
        # pairs are born at w0 and age one fiber transit before both heralds
        # land; whether that still clears f_target is a static property of
        # the edge, so both ends decide it without talking.
        params = session.params
        rate = session.link_decay_rate(self.spec_a, self.spec_b)
        herald_age = self.edge.length_km / params.c_fiber
        w_at_herald = params.w0 * math.exp(-rate * herald_age)
        self.pump_mode = (
            session.pump_enabled and fidelity_of(w_at_herald) < params.f_target
        )
        self.rounds_exhausted = False

    # -- generation ---------------------------------------------------

    def start(self, summary: str = "") -> None:
        if self.started:
            return
        self.started = True
        self._schedule_tick()

    def _schedule_tick(self) -> None:
        self.session.engine.after(
            1.0 / self.edge.attempt_rate_hz,
            EventKind.ATTEMPT_TICK,
            self._tick,
            f"gen {self.edge.edge_id} seg{self.index}",
        )

    def _tick(self) -> None:
        session = self.session
        if session.finished or self.done:
            return
        if session.can_attempt is not None and not session.can_attempt(self):
            self._schedule_tick()
            return
        rng = session.engine.stream(f"gen:{self.edge.edge_id}")
        stats = session.stats
        stats.attempts_total += 1
        stats.attempts_per_segment[self.index] = (
            stats.attempts_per_segment.get(self.index, 0) + 1
        )
        now = session.engine.now
        link_id = session.engine.next_link_id()
        if session.ap_mode:
            pair = physics.allphotonic_generate(
                self.edge, session.params, rng, now=now, link_id=link_id
            )
        else:
            pair = physics.attempt_generation(
                self.edge,
                session.params,
                rng,
                now=now,
                link_id=link_id,
                node_a=self.spec_a,
                node_b=self.spec_b,
            )
        if pair is None:
            self._schedule_tick()
            return
        is_base = self.link is None and not self._base_confirmed
        if is_base and session.on_pair_stored is not None:
            session.on_pair_stored(self, pair)
        self._known[pair.link_id] = set()
        for receiver in (self.node_a, self.node_b):
            sender = self.node_b if receiver == self.node_a else self.node_a
            session.engine.send_classical(
                sender,
                receiver,
                self.edge.length_km,
                lambda r=receiver, p=pair: self._herald(r, p),
                f"herald {self.edge.edge_id} -> {receiver}",
            )
        if self.pump_mode and not self.rounds_exhausted:
            self._schedule_tick()
        else:
            self.done = True

    # -- heralds and pumping -------------------------------------------

    def _herald(self, node_id: str, pair: WernerLink) -> None:
        session = self.session
        if session.finished:
            return
        known = self._known.get(pair.link_id)
        if known is None:
            return
        known.add(node_id)
        now = session.engine.now
        session._segment_base_known(self, node_id)
        if not self.pump_mode or self.rounds_exhausted:
            # single-pair mode: this pair is the deliverable itself
            if self.link is None:
                self.link = pair
            if len(known) == 2:
                self._base_confirmed = True
            for end in known:
                self._mark_ready(end, now, pair)
            return
        if len(known) < 2:
            return
        del self._known[pair.link_id]
        if not self._base_confirmed:
            self.link = pair
            self._base_confirmed = True
            self._drain_pump_queue()
        else:
            self._pump_queue.append(pair)
            self._drain_pump_queue()

    def _drain_pump_queue(self) -> None:
        session = self.session
        while (
            self.link is not None
            and self._pump_queue
            and not self.rounds_exhausted
            and not self.done
        ):
            pump_pair = self._pump_queue.pop(0)
            now = session.engine.now
            rng = session.engine.stream(f"purify:{self.edge.edge_id}")
            self.rounds += 1
            session.stats.purification_rounds += 1
            survivor = physics.purify(
                self.link,
                pump_pair,
                rng,
                now=now,
                link_id=session.engine.next_link_id(),
                node_a=self.spec_a,
                node_b=self.spec_b,
                options=session.options,
            )
            self.link = survivor
            budget_left = self.rounds < session.params.r_max
            if survivor is not None:
                if fidelity_of(survivor.w) >= session.params.f_target or not budget_left:
                    self._finalize_pumping(now)
                    return
                continue
            # round failed, both pairs gone
            if not budget_left:
                self.rounds_exhausted = True
                if self._pump_queue:
                    # a confirmed spare becomes the delivered pair as-is
                    promoted = self._pump_queue.pop(0)
                    self.link = promoted
                    self.done = True
                    self._mark_ready(self.node_a, session.engine.now, promoted)
                    self._mark_ready(self.node_b, session.engine.now, promoted)
                return
            if self._pump_queue:
                # promote a confirmed spare to be the new base and keep going
                self.link = self._pump_queue.pop(0)
            else:
                self._base_confirmed = False
                return

    def _finalize_pumping(self, decided_at: float) -> None:
        """Round outcome travels to both ends before the segment is usable."""
        session = self.session
        self.done = True
        self._pump_queue.clear()
        for receiver in (self.node_a, self.node_b):
            sender = self.node_b if receiver == self.node_a else self.node_a
            session.engine.send_classical(
                sender,
                receiver,
                self.edge.length_km,
                lambda r=receiver: self._mark_ready(
                    r, session.engine.now, self.link
                ),
                f"pump done {self.edge.edge_id} -> {receiver}",
            )

    def _mark_ready(self, node_id: str, time: float, pair: WernerLink | None) -> None:
        if self.session.finished or node_id in self.ready_time:
            return
        self.ready_time[node_id] = time
        self.session._segment_ready(self, node_id, time)

    def base_known(self, node_id: str) -> bool:
        for known in self._known.values():
            if node_id in known:
                return True
        return self._base_confirmed or node_id in self.ready_time


class LinkSession:
    """One channel-establishment run over a fixed node path.

    Drives segment generation and swapping inside the owning simulator.
    The caller supplies the path, hardware class, and protocol; progress
    is event-driven and the outcome lands in ``result`` (ChannelResult or
    Failure) when ``finished`` turns true.  ``on_done`` and
    ``on_node_free`` let a network layer react to completion and to
    interior nodes being released after their swap.
    """

    def __init__(
        self,
        engine: Simulator,
        path: list[str],
        cls: RepeaterClass | None,
        protocol: LinkProtocol,
        *,
        params: PhysicsParams | None = None,
        policy: SwapPolicy = SwapPolicy.HIERARCHICAL,
        pipelining: bool = True,
        options: AllPhotonicOptions | None = None,
        manage_memory: bool = True,
        tag: str | None = None,
        deadline: float | None = None,
        f_min: float | None = None,
        on_done: Callable[["LinkSession"], None] | None = None,
        on_node_free: Callable[[str], None] | None = None,
        can_attempt: Callable[[_Segment], bool] | None = None,
        on_pair_stored: Callable[[_Segment, WernerLink], None] | None = None,
    ):
        if len(path) < 2:
            raise ValueError("a path needs at least two nodes")
        if len(set(path)) != len(path):
            raise ValueError("path must not repeat nodes")
        if cls is None:
            anchor = path[1] if len(path) > 2 else path[0]
            cls = engine.topology.nodes[anchor].repeater_class
        support = supports_link(cls, protocol)
        if support is not Support.ALLOWED:
            raise CapabilityViolation(
                f"{cls.value} cannot run {protocol.value} ({support.value})"
            )
        topo = engine.topology
        for node_id in path[1:-1]:
            spec = topo.nodes[node_id]
            if spec.repeater_class is not cls:
                raise CapabilityViolation(
                    f"path node {node_id} is {spec.repeater_class.value}, "
                    f"session needs {cls.value}"
                )
        self.engine = engine
        self.path = list(path)
        self.cls = cls
        self.protocol = protocol
        self.params = params or engine.params
        self.policy = policy if protocol is LinkProtocol.SIMULTANEOUS else SwapPolicy.LEFT_TO_RIGHT
        self.pipelining = pipelining
        self.options = options
        self.manage_memory = manage_memory
        self.tag = tag or f"session:{id(self)}"
        self.deadline = deadline
        self.f_min = f_min
        self.on_done = on_done
        self.on_node_free = on_node_free
        self.can_attempt = can_attempt
        self.on_pair_stored = on_pair_stored
        self.ap_mode = cls is RepeaterClass.ALL_PHOTONIC
        self.third_class = cls is RepeaterClass.THIRD
        self.pump_enabled = (
            not self.third_class
            and can_purify(cls, options)
            and self.params.r_max > 0
            and self.params.f_target > 0.0
        )
        self.stats = SessionStats()
        self.finished = False
        self.result: ChannelResult | Failure | None = None
        self.segments: list[_Segment] = []
        self._deadline_event = None
        self._prefix_km = [0.0]
        for a, b in zip(path, path[1:]):
            self._prefix_km.append(
                self._prefix_km[-1] + topo.edge_between(a, b).length_km
            )

    # -- helpers --------------------------------------------------------

    def link_decay_rate(self, spec_a, spec_b) -> float:
        if self.third_class or self.ap_mode:
            return 0.0
        return spec_a.decay_rate() + spec_b.decay_rate()

    def _dist_km(self, i: int, j: int) -> float:
        return abs(self._prefix_km[j] - self._prefix_km[i])

    def _spec(self, index: int):
        return self.engine.topology.nodes[self.path[index]]

    # -- lifecycle ------------------------------------------------------

    def start(self, at: float | None = None) -> None:
        """Begin the protocol; memory is reserved up front when managed."""
        start_time = self.engine.now if at is None else at
        self.stats.started_at = start_time
        if self.manage_memory and not self.ap_mode and not self.third_class:
            now = self.engine.now
            self.engine.memory.acquire(self.path[0], 1, self.tag, now)
            self.engine.memory.acquire(self.path[-1], 1, self.tag, now)
            for node_id in self.path[1:-1]:
                self.engine.memory.acquire(node_id, 2, self.tag, now)
        if self.deadline is not None:
            self._deadline_event = self.engine.schedule(
                self.deadline,
                EventKind.TIMEOUT,
                self._deadline_fired,
                f"deadline {self.tag}",
            )
        if self.protocol is LinkProtocol.SIMULTANEOUS:
            self._flow = _SimultaneousFlow(self)
        elif self.third_class:
            self._flow = _LogicalHopFlow(self)
        else:
            self._flow = _OneByOneFlow(self)
        self._flow.begin()

    def _deadline_fired(self) -> None:
        if not self.finished:
            self._finish_failure("Timeout", "deadline passed before completion")

    def _segment_ready(self, segment: _Segment, node_id: str, time: float) -> None:
        self._flow.segment_ready(segment, node_id, time)

    def _segment_base_known(self, segment: _Segment, node_id: str) -> None:
        self._flow.segment_base_known(segment, node_id)

    def _release_interior(self, node_id: str) -> None:
        if self.manage_memory and not self.ap_mode and not self.third_class:
            self.engine.memory.release(node_id, 2, self.tag, self.engine.now)
        if self.on_node_free is not None:
            self.on_node_free(node_id)

    def _complete(self, link: WernerLink) -> None:
        if self.finished:
            return
        now = self.engine.now
        link.materialize(now)
        if self.f_min is not None and fidelity_of(link.w) < self.f_min:
            self._finish_failure(
                "FidelityBelowMinimum",
                f"delivered F={fidelity_of(link.w):.6f} < {self.f_min}",
            )
            return
        self.stats.finished_at = now
        self.finished = True
        self._cleanup()
        self.result = ChannelResult(
            link=link,
            setup_latency_s=now - self.stats.started_at,
            stats=self.stats,
        )
        if self.on_done is not None:
            self.on_done(self)

    def abort(self, reason: str, detail: str = "") -> None:
        """Terminate from outside; pending events become no-ops."""
        self._finish_failure(reason, detail)

    def _finish_failure(self, reason: str, detail: str = "", segment: int | None = None) -> None:
        if self.finished:
            return
        self.stats.finished_at = self.engine.now
        self.finished = True
        self._cleanup()
        self.result = Failure(reason, detail, segment, self.stats)
        if self.on_done is not None:
            self.on_done(self)

    def _cleanup(self) -> None:
        if self._deadline_event is not None:
            self._deadline_event.cancel()
        if self.manage_memory:
            self.engine.memory.release_all(self.tag, self.engine.now)


class _SimultaneousFlow:
    """All segments generate at once; swaps merge them per the policy."""

    def __init__(self, session: LinkSession):
        self.session = session
        path = session.path
        session.segments = [_Segment(session, i) for i in range(len(path) - 1)]
        self.merges = self._plan(path, session.policy)
        # interval -> produced link; merge index -> inputs seen
        self.links: dict[tuple[int, int], WernerLink] = {}
        self.known: dict[int, set[tuple[int, int]]] = {i: set() for i in range(len(self.merges))}
        self.consumer: dict[tuple[int, int], tuple[int, str] | None] = {}
        for m_idx, (left, right, _) in enumerate(self.merges):
            self.consumer[left] = (m_idx, "left")
            self.consumer[right] = (m_idx, "right")
        root = (0, len(path) - 1)
        self.consumer[root] = None
        self._end_heralds: set[str] = set()
        self._final_link: WernerLink | None = None

    @staticmethod
    def _plan(path, policy):
        rounds = swap_schedule(path, policy)
        intervals = [(i, i + 1) for i in range(len(path) - 1)]
        merges = []
        for rnd in rounds:
            for node_id in rnd:
                m = path.index(node_id)
                left = next(iv for iv in intervals if iv[1] == m)
                right = next(iv for iv in intervals if iv[0] == m)
                intervals.remove(left)
                intervals.remove(right)
                intervals.append((left[0], right[1]))
                merges.append((left, right, m))
        return merges

    def begin(self) -> None:
        for segment in self.session.segments:
            segment.start()

    def segment_base_known(self, segment, node_id) -> None:
        pass

    def segment_ready(self, segment, node_id, time) -> None:
        session = self.session
        interval = (segment.index, segment.index + 1)
        if len(session.path) == 2:
            if len(segment.ready_time) == 2:
                self._finish(segment.link)
            return
        entry = self.consumer[interval]
        if entry is None:
            return
        m_idx, _ = entry
        merge_node = session.path[self.merges[m_idx][2]]
        if node_id == merge_node:
            self.links[interval] = segment.link
            self._input_known(m_idx, interval)

    def _input_known(self, m_idx: int, interval) -> None:
        seen = self.known[m_idx]
        seen.add(interval)
        left, right, m = self.merges[m_idx]
        if left in seen and right in seen:
            self._fire_merge(m_idx)

    def _fire_merge(self, m_idx: int) -> None:
        session = self.session
        if session.finished:
            return
        left, right, m = self.merges[m_idx]
        now = session.engine.now
        node_spec = session._spec(m)
        rng = session.engine.stream(f"swap:{session.path[m]}")
        merged = physics.swap(
            self.links.pop(left),
            self.links.pop(right),
            node_spec,
            rng,
            now=now,
            link_id=session.engine.next_link_id(),
            node_a=session._spec(left[0]),
            node_c=session._spec(right[1]),
            options=session.options,
        )
        merged.decay_rate = session.link_decay_rate(
            session._spec(left[0]), session._spec(right[1])
        )
        session.stats.swaps += 1
        session._release_interior(session.path[m])
        out_interval = (left[0], right[1])
        self.links[out_interval] = merged
        entry = self.consumer[out_interval]
        if entry is None:
            self._announce_completion(out_interval, m)
            return
        next_idx, _ = entry
        next_node = self.merges[next_idx][2]
        session.engine.send_classical(
            session.path[m],
            session.path[next_node],
            session._dist_km(m, next_node),
            lambda: self._input_known(next_idx, out_interval),
            f"swap herald {session.path[m]} -> {session.path[next_node]}",
        )

    def _announce_completion(self, root_interval, producer_index: int) -> None:
        session = self.session
        self._final_link = self.links[root_interval]
        for end_index in (0, len(session.path) - 1):
            end = session.path[end_index]
            session.engine.send_classical(
                session.path[producer_index],
                end,
                session._dist_km(producer_index, end_index),
                lambda e=end: self._end_done(e),
                f"channel done -> {end}",
            )

    def _end_done(self, end: str) -> None:
        if self.session.finished:
            return
        self._end_heralds.add(end)
        if len(self._end_heralds) == 2:
            self._finish(self._final_link)

    def _finish(self, link: WernerLink) -> None:
        self.session._complete(link)


class _OneByOneFlow:
    """Frontier pair extended segment by segment from the source side."""

    def __init__(self, session: LinkSession):
        self.session = session
        self.frontier: WernerLink | None = None
        self.frontier_known: dict[int, float] = {}
        self._started: set[int] = set()

    def begin(self) -> None:
        self._start_segment(0)

    def _segment(self, index: int) -> _Segment:
        session = self.session
        while len(session.segments) <= index:
            session.segments.append(_Segment(session, len(session.segments)))
        return session.segments[index]

    def _start_segment(self, index: int) -> None:
        if index in self._started or index > len(self.session.path) - 2:
            return
        self._started.add(index)
        self._segment(index).start()

    def segment_base_known(self, segment, node_id) -> None:
        # pipelined mode: the next segment may generate while this one pumps
        if self.session.pipelining and node_id == segment.node_b:
            self._start_segment(segment.index + 1)

    def segment_ready(self, segment, node_id, time) -> None:
        session = self.session
        n_segments = len(session.path) - 1
        if segment.index == 0:
            if n_segments == 1:
                if len(segment.ready_time) == 2:
                    session._complete(segment.link)
                return
            if node_id == session.path[1]:
                self.frontier = segment.link
                self.frontier_known[1] = time
                if not session.pipelining:
                    self._start_segment(1)
                self._try_swap(1)
            return
        if node_id == session.path[segment.index]:
            self._try_swap(segment.index)

    def _try_swap(self, k: int) -> None:
        """Swap at path[k] merges the frontier with segment k."""
        session = self.session
        if session.finished or k not in self.frontier_known:
            return
        segment = self._segment(k)
        if session.path[k] not in segment.ready_time or segment.link is None:
            return
        now = session.engine.now
        node_spec = session._spec(k)
        rng = session.engine.stream(f"swap:{session.path[k]}")
        merged = physics.swap(
            self.frontier,
            segment.link,
            node_spec,
            rng,
            now=now,
            link_id=session.engine.next_link_id(),
            node_a=session._spec(0),
            node_c=session._spec(k + 1),
            options=session.options,
        )
        merged.decay_rate = session.link_decay_rate(
            session._spec(0), session._spec(k + 1)
        )
        session.stats.swaps += 1
        session._release_interior(session.path[k])
        self.frontier = merged
        self.frontier_known.clear()
        last = len(session.path) - 1
        if k + 1 == last:
            edge_km = session._dist_km(k, last)
            session.engine.send_classical(
                session.path[k],
                session.path[last],
                edge_km,
                self._far_end_knows,
                f"frontier done -> {session.path[last]}",
            )
        else:
            session.engine.send_classical(
                session.path[k],
                session.path[k + 1],
                session._dist_km(k, k + 1),
                lambda idx=k + 1: self._frontier_arrived(idx),
                f"frontier -> {session.path[k + 1]}",
            )

    def _frontier_arrived(self, idx: int) -> None:
        session = self.session
        if session.finished:
            return
        self.frontier_known[idx] = session.engine.now
        if not session.pipelining:
            self._start_segment(idx)
        self._try_swap(idx)

    def _far_end_knows(self) -> None:
        """Far end confirms back to the source over the whole path."""
        session = self.session
        if session.finished:
            return
        session.engine.send_classical(
            session.path[-1],
            session.path[0],
            session._dist_km(0, len(session.path) - 1),
            self._source_confirmed,
            f"confirm -> {session.path[0]}",
        )

    def _source_confirmed(self) -> None:
        if not self.session.finished:
            self.session._complete(self.frontier)


class _LogicalHopFlow:
    """Third class: an encoded qubit hops the path one fiber at a time."""

    def __init__(self, session: LinkSession):
        self.session = session
        self.w = session.params.w0
        self.position = 0

    def begin(self) -> None:
        # the source still runs at its repetition rate; encoding the first
        # transfer costs one attempt slot on the outgoing edge
        session = self.session
        edge = session.engine.topology.edge_between(
            session.path[0], session.path[1]
        )
        session.engine.after(
            1.0 / edge.attempt_rate_hz,
            EventKind.ATTEMPT_TICK,
            self._depart,
            f"encode {edge.edge_id}",
        )

    def segment_base_known(self, segment, node_id) -> None:
        pass

    def segment_ready(self, segment, node_id, time) -> None:
        pass

    def _depart(self) -> None:
        session = self.session
        i = self.position
        edge = session.engine.topology.edge_between(
            session.path[i], session.path[i + 1]
        )
        session.engine.send_classical(
            session.path[i],
            session.path[i + 1],
            edge.length_km,
            lambda e=edge: self._arrive(e),
            f"logical hop {session.path[i]} -> {session.path[i + 1]}",
        )

    def _arrive(self, edge) -> None:
        session = self.session
        if session.finished:
            return
        self.position += 1
        receiver = session._spec(self.position)
        rng = session.engine.stream(f"hop:{edge.edge_id}")
        stats = session.stats
        seg_index = self.position - 1
        stats.attempts_total += 1
        stats.attempts_per_segment[seg_index] = (
            stats.attempts_per_segment.get(seg_index, 0) + 1
        )
        w_next = physics.transmit_logical_hop(
            edge, self.w, receiver, session.params, rng
        )
        if w_next is None:
            session._finish_failure(
                "HopFailure",
                f"encoded transfer lost entering {receiver.node_id}",
                segment=seg_index,
            )
            return
        self.w = w_next
        if self.position == len(session.path) - 1:
            # arrival is only known at the far end; confirm to the source
            session.engine.send_classical(
                session.path[-1],
                session.path[0],
                session._dist_km(0, len(session.path) - 1),
                self._confirmed,
                f"confirm -> {session.path[0]}",
            )
        else:
            self._depart()

    def _confirmed(self) -> None:
        session = self.session
        if session.finished:
            return
        link = WernerLink(
            link_id=session.engine.next_link_id(),
            node_a=session.path[0],
            node_b=session.path[-1],
            w=self.w,
            created_at=session.engine.now,
            last_updated=session.engine.now,
            decay_rate=0.0,
        )
        session._complete(link)


def _run_blocking(session: LinkSession) -> ChannelResult | Failure:
    session.start()
    session.engine.run_until(stop=lambda: session.finished)
    if session.result is None:
        session._finish_failure(
            "Stalled", "event queue drained before the protocol finished"
        )
    return session.result


def simultaneous_link(
    engine: Simulator,
    path: list[str],
    cls: RepeaterClass | None = None,
    params: PhysicsParams | None = None,
    **kwargs,
) -> ChannelResult | Failure:
    """Run the simultaneous protocol to completion and return its outcome."""
    session = LinkSession(
        engine, path, cls, LinkProtocol.SIMULTANEOUS, params=params, **kwargs
    )
    return _run_blocking(session)


def one_by_one_link(
    engine: Simulator,
    path: list[str],
    cls: RepeaterClass | None = None,
    params: PhysicsParams | None = None,
    **kwargs,
) -> ChannelResult | Failure:
    """Run the one-by-one protocol to completion and return its outcome."""
    session = LinkSession(
        engine, path, cls, LinkProtocol.ONE_BY_ONE, params=params, **kwargs
    )
    return _run_blocking(session)
