"""Connection management on top of the link layer.

Three ways to serve a request for end-to-end entanglement:

* connection-oriented: a central controller computes the path, reserves
  memory along it FIFO, orders the nodes, and one link-layer session runs
  over the reserved path;
* connectionless: the source emits a quantum frame that is routed hop by
  hop; each hop generates entanglement on arrival of the header, swaps at
  the upstream node, and frees its slots immediately after the swap;
* hybrid: fixed anchor nodes split the route into areas, each area runs
  connectionless toward its anchor concurrently, and the anchors perform
  the final swaps.

Control traffic (requests, orders, confirmations) pays classical latency
along shortest fiber paths. Frame-loss draws use the per-edge rng stream
``frame:{edge_id}`` so runs stay reproducible.
"""

from __future__ import annotations

import math
import struct
import zlib
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable

from . import physics
from .capability import (
    AllPhotonicOptions,
    CapabilityViolation,
    ConnectionModel,
    LinkProtocol,
    can_purify,
    can_swap,
    validate_request,
)
from .engine import EventKind, Simulator
from .linklayer import (
    ChannelResult,
    Failure,
    LinkSession,
    SessionStats,
    SwapPolicy,
)
from .model import RepeaterClass, Role, Topology, WernerLink
from .physics import PhysicsParams, channel_success_prob


# --------------------------------------------------------------------------
# quantum frame codec

FRAME_VERSION = 1
TRAILER_MAGIC = b"QFRT"

# header layout, big endian: version, frame id, src, dst, class, op flags,
# hop count, ttl, payload qubit count; a CRC-32 over these 23 bytes follows.
_HEADER_FMT = ">BQIIBBBBH"
_HEADER_BODY = struct.calcsize(_HEADER_FMT)
HEADER_SIZE = _HEADER_BODY + 4
FRAME_SIZE = HEADER_SIZE + 8

OP_PURIFY = 0x01
OP_ECC = 0x02
OP_PIPELINING = 0x04

_CLASS_CODES = {
    RepeaterClass.FIRST: 1,
    RepeaterClass.SECOND: 2,
    RepeaterClass.THIRD: 3,
    RepeaterClass.ALL_PHOTONIC: 4,
}
_CODE_CLASSES = {code: cls for cls, code in _CLASS_CODES.items()}


class FrameError(ValueError):
    """A frame failed structural validation; ``reason`` says which check."""

    def __init__(self, reason: str, detail: str = ""):
        super().__init__(f"{reason}: {detail}" if detail else reason)
        self.reason = reason


@dataclass
class QuantumFrame:
    """Classical header and trailer around a quantum payload handle.

    The payload itself is a simulation object (an entangled half or a
    logical qubit), never serialized; only the classical bytes go on the
    wire.
    """

    frame_id: int
    src_addr: int
    dst_addr: int
    qr_class: RepeaterClass
    op_flags: int = 0
    hop_count: int = 0
    ttl: int = 64
    payload_qubits: int = 1
    version: int = FRAME_VERSION
    payload: object | None = None


def encode_frame(frame: QuantumFrame) -> bytes:
    body = struct.pack(
        _HEADER_FMT,
        frame.version,
        frame.frame_id,
        frame.src_addr,
        frame.dst_addr,
        _CLASS_CODES[frame.qr_class],
        frame.op_flags,
        frame.hop_count,
        frame.ttl,
        frame.payload_qubits,
    )
    header = body + struct.pack(">I", zlib.crc32(body))
    frame_crc = zlib.crc32(header + TRAILER_MAGIC)
    return header + TRAILER_MAGIC + struct.pack(">I", frame_crc)


def decode_frame(buf: bytes) -> QuantumFrame:
    """Parse and validate classical frame bytes; payload comes back None."""
    if len(buf) != FRAME_SIZE:
        raise FrameError("BadLength", f"{len(buf)} bytes, expected {FRAME_SIZE}")
    body, header_crc = buf[:_HEADER_BODY], buf[_HEADER_BODY:HEADER_SIZE]
    if zlib.crc32(body) != struct.unpack(">I", header_crc)[0]:
        raise FrameError("CrcFail", "header checksum mismatch")
    magic = buf[HEADER_SIZE : HEADER_SIZE + 4]
    if magic != TRAILER_MAGIC:
        raise FrameError("BadMagic", magic.hex())
    frame_crc = struct.unpack(">I", buf[HEADER_SIZE + 4 :])[0]
    if zlib.crc32(buf[: HEADER_SIZE + 4]) != frame_crc:
        raise FrameError("CrcFail", "frame checksum mismatch")
    (
        version,
        frame_id,
        src_addr,
        dst_addr,
        class_code,
        op_flags,
        hop_count,
        ttl,
        payload_qubits,
    ) = struct.unpack(_HEADER_FMT, body)
    if version != FRAME_VERSION:
        raise FrameError("BadVersion", str(version))
    cls = _CODE_CLASSES.get(class_code)
    if cls is None:
        raise FrameError("BadClass", str(class_code))
    return QuantumFrame(
        frame_id=frame_id,
        src_addr=src_addr,
        dst_addr=dst_addr,
        qr_class=cls,
        op_flags=op_flags,
        hop_count=hop_count,
        ttl=ttl,
        payload_qubits=payload_qubits,
    )


# --------------------------------------------------------------------------
# path computation and routing tables


class NoPathError(Exception):
    """No route satisfies the metric and constraints."""


class PathCost(Enum):
    HOP_COUNT = "hop_count"
    LATENCY = "latency"
    LOSS_WEIGHTED = "loss_weighted"


def edge_cost(edge, cost: PathCost) -> float:
    """Additive cost of one edge; ``weight`` scales every metric."""
    if cost is PathCost.HOP_COUNT:
        base = 1.0
    elif cost is PathCost.LATENCY:
        base = edge.length_km
    else:
        # decibels lost end to end, so minimizing the sum maximizes the
        # product of channel success probabilities
        static = edge.p_src * edge.eta_det
        base = edge.alpha_db_per_km * edge.length_km - 10.0 * math.log10(static)
    return edge.weight * base


def _dijkstra(
    topology: Topology,
    src: str,
    dst: str,
    cost: PathCost,
    interior_ok: Callable[[str], bool],
) -> list[str] | None:
    """Least-cost path; ties broken by smallest node-id sequence."""
    import heapq

    best: dict[str, tuple[float, tuple[str, ...]]] = {src: (0.0, (src,))}
    heap: list[tuple[float, tuple[str, ...]]] = [(0.0, (src,))]
    while heap:
        dist, path = heapq.heappop(heap)
        node = path[-1]
        if best.get(node, (math.inf, ())) < (dist, path):
            continue
        if node == dst:
            return list(path)
        for neighbor, edge in topology.neighbors(node):
            if neighbor in path:
                continue
            if neighbor != dst and not interior_ok(neighbor):
                continue
            cand = (dist + edge_cost(edge, cost), path + (neighbor,))
            if cand < best.get(neighbor, (math.inf, ())):
                best[neighbor] = cand
                heapq.heappush(heap, cand)
    return None


def compute_path(
    topology: Topology,
    src: str,
    dst: str,
    cost: PathCost = PathCost.HOP_COUNT,
    *,
    repeater_class: RepeaterClass | None = None,
    waypoints: tuple[str, ...] = (),
) -> list[str]:
    """Least-cost route from src to dst visiting waypoints in order.

    Interior nodes must be repeaters or switches, and must match
    ``repeater_class`` when one is given. Waypoint legs are individually
    shortest; legs that reuse a node are rejected rather than re-solved.
    """
    for node_id in (src, dst, *waypoints):
        if node_id not in topology.nodes:
            raise NoPathError(f"unknown node {node_id}")

    def interior_ok(node_id: str) -> bool:
        spec = topology.nodes[node_id]
        if spec.role is Role.END:
            return False
        if repeater_class is not None and spec.repeater_class is not repeater_class:
            return False
        return True

    stops = [src, *waypoints, dst]
    full: list[str] = [src]
    seen = {src}
    for leg_src, leg_dst in zip(stops, stops[1:]):
        leg = _dijkstra(topology, leg_src, leg_dst, cost, interior_ok)
        if leg is None:
            raise NoPathError(f"no {cost.value} route {leg_src} -> {leg_dst}")
        for node_id in leg[1:]:
            if node_id in seen:
                raise NoPathError(
                    f"waypoint legs intersect at {node_id}; route unusable"
                )
            seen.add(node_id)
            full.append(node_id)
    return full


def build_routing_tables(
    topology: Topology, cost: PathCost = PathCost.HOP_COUNT
) -> dict[str, dict[int, str]]:
    """Per-node forwarding maps: destination address to next-hop edge id.

    Built from per-destination shortest-path trees with the compute_path
    tie-break, which makes the next hops mutually consistent; the walk
    check below asserts the resulting tables are loop free.
    """
    tables: dict[str, dict[int, str]] = {n: {} for n in topology.nodes}
    for dst in topology.nodes:
        addr = topology.address_of(dst)
        for src in topology.nodes:
            if src == dst:
                continue
            try:
                path = compute_path(topology, src, dst, cost)
            except NoPathError:
                continue
            tables[src][addr] = topology.edge_between(path[0], path[1]).edge_id
    limit = len(topology.nodes)
    for src in topology.nodes:
        for addr in tables[src]:
            node, hops = src, 0
            while node != topology.node_by_address(addr):
                edge_id = tables[node].get(addr)
                if edge_id is None or hops > limit:
                    raise ValueError(f"routing tables loop for {src} -> {addr}")
                node = topology.edges[edge_id].other(node)
                hops += 1
    return tables


class ForwardAction(Enum):
    FORWARDED = "forwarded"
    DELIVERED = "delivered"
    DROPPED = "dropped"


@dataclass
class ForwardDecision:
    action: ForwardAction
    frame: QuantumFrame | None = None
    edge_id: str | None = None
    reason: str = ""


def forward_frame(
    topology: Topology,
    tables: dict[str, dict[int, str]],
    node_id: str,
    buf: bytes,
) -> ForwardDecision:
    """Header-only forwarding decision at one node.

    Delivery is checked before the ttl is spent, so a frame may arrive
    with ttl already at zero; forwarding decrements ttl and drops the
    frame when it hits zero.
    """
    try:
        frame = decode_frame(buf)
    except FrameError as err:
        return ForwardDecision(ForwardAction.DROPPED, reason=err.reason)
    if topology.address_of(node_id) == frame.dst_addr:
        return ForwardDecision(ForwardAction.DELIVERED, frame=frame)
    frame.ttl -= 1
    frame.hop_count += 1
    if frame.ttl <= 0:
        return ForwardDecision(ForwardAction.DROPPED, frame=frame, reason="TtlExpired")
    edge_id = tables.get(node_id, {}).get(frame.dst_addr)
    if edge_id is None:
        return ForwardDecision(ForwardAction.DROPPED, frame=frame, reason="NoRoute")
    return ForwardDecision(ForwardAction.FORWARDED, frame=frame, edge_id=edge_id)


# --------------------------------------------------------------------------
# requests and outcomes


@dataclass
class ConnectionRequest:
    request_id: str
    src: str
    dst: str
    repeater_class: RepeaterClass
    link_protocol: LinkProtocol
    model: ConnectionModel
    f_min: float | None = None
    deadline: float | None = None
    retry_limit: int = 3
    waypoints: tuple[str, ...] = ()
    alternate_mode: bool = False
    options: AllPhotonicOptions | None = None

    def __post_init__(self):
        if self.src == self.dst:
            raise ValueError("src and dst must differ")
        if self.f_min is not None and not 0.25 <= self.f_min <= 1.0:
            raise ValueError(f"f_min {self.f_min} outside [0.25, 1]")
        if self.retry_limit < 0:
            raise ValueError("retry_limit must be nonnegative")
        self.waypoints = tuple(self.waypoints)


@dataclass
class ConnectionOutcome:
    """One request's fate; failure reasons are data, not exceptions."""

    request: ConnectionRequest
    outcome: str
    link: WernerLink | None
    setup_latency_s: float
    stats: SessionStats
    retries: int = 0
    emissions: int = 0
    drops: dict[str, int] = field(default_factory=dict)
    node_occupancy_s: float = 0.0
    detail: str = ""
    finished_at: float = 0.0

    @property
    def completed(self) -> bool:
        return self.outcome == "Completed"


def _merge_stats(into: SessionStats, part: SessionStats) -> None:
    into.attempts_total += part.attempts_total
    for seg, n in part.attempts_per_segment.items():
        into.attempts_per_segment[seg] = into.attempts_per_segment.get(seg, 0) + n
    into.purification_rounds += part.purification_rounds
    into.swaps += part.swaps


# --------------------------------------------------------------------------
# connectionless machinery, shared by plain CL requests and hybrid areas


class _ClLeg:
    """One source-to-target connectionless establishment with retries.

    The frame races ahead of the entanglement: its arrival at a node
    launches generation toward the next hop, and the node swaps once both
    its halves exist, freeing its slots immediately. The source learns
    nothing until the target confirms, so every mid-path loss surfaces as
    a timeout here.
    """

    def __init__(
        self,
        service: "NetworkService",
        tag: str,
        src: str,
        dst: str,
        cls: RepeaterClass,
        *,
        op_flags: int,
        retry_limit: int,
        timeout: float,
        stats: SessionStats,
        drops: dict[str, int],
        on_success: Callable[[WernerLink, float], None],
        on_failure: Callable[[str, str], None],
    ):
        self.service = service
        self.engine = service.engine
        self.tag = tag
        self.src = src
        self.dst = dst
        self.cls = cls
        self.op_flags = op_flags
        self.retry_limit = retry_limit
        self.timeout = timeout
        self.stats = stats
        self.drops = drops
        self.on_success = on_success
        self.on_failure = on_failure
        self.third = cls is RepeaterClass.THIRD
        self.gen = -1
        self.emissions = 0
        self.finished = False
        self._timeout_event = None
        self._sessions: list[LinkSession] = []
        self._reset_try_state()

    def _reset_try_state(self) -> None:
        self.chain: WernerLink | None = None
        self.chain_end: str | None = self.src
        self.pairs: dict[str, tuple[str, WernerLink]] = {}
        self.held_frames: dict[str, tuple[str, bytes, object]] = {}
        self.delivered = False
        self.payload_w = self.engine.params.w0
        self._stored_ok: set[LinkSession] = set()
        self._node_held: set[str] = set()

    # -- try lifecycle -------------------------------------------------

    def start(self) -> None:
        self._start_try()

    def _start_try(self) -> None:
        self.gen += 1
        self.emissions += 1
        self._reset_try_state()
        frame = QuantumFrame(
            frame_id=self.service.next_frame_id(),
            src_addr=self.service.topology.address_of(self.src),
            dst_addr=self.service.topology.address_of(self.dst),
            qr_class=self.cls,
            op_flags=self.op_flags,
            ttl=self.service.default_ttl,
        )
        if math.isfinite(self.timeout):
            self._timeout_event = self.engine.after(
                self.timeout,
                EventKind.TIMEOUT,
                lambda g=self.gen: self._timed_out(g),
                f"cl timeout {self.tag}",
            )
        self._at_node(self.gen, self.src, encode_frame(frame))

    def _timed_out(self, gen: int) -> None:
        if self.finished or gen != self.gen:
            return
        self._abort_try()
        if self.gen < self.retry_limit:
            self._start_try()
        else:
            self._finish_failure("RetriesExhausted", "no confirmation from target")

    def _abort_try(self) -> None:
        # synchronized cutoff: the source's timeout also frees the stale
        # halves parked at downstream nodes
        for session in self._sessions:
            if not session.finished:
                session.abort("Superseded", "source timed out this attempt")
        self._sessions.clear()
        self.engine.memory.release_all(self.tag, self.engine.now)

    def _finish_failure(self, reason: str, detail: str) -> None:
        if self.finished:
            return
        self.finished = True
        self._cancel_timeout()
        self.on_failure(reason, detail)

    def _finish_success(self, link: WernerLink) -> None:
        if self.finished:
            return
        self.finished = True
        self._cancel_timeout()
        self.on_success(link, self.engine.now)

    def _cancel_timeout(self) -> None:
        if self._timeout_event is not None:
            self._timeout_event.cancel()
            self._timeout_event = None

    def abort(self, reason: str, detail: str = "") -> None:
        if self.finished:
            return
        self.finished = True
        self._cancel_timeout()
        self._abort_try()

    # -- frame movement -------------------------------------------------

    def _at_node(self, gen: int, node: str, buf: bytes) -> None:
        if self.finished or gen != self.gen:
            return
        service = self.service
        decision = forward_frame(service.topology, service.tables, node, buf)
        if decision.action is ForwardAction.DELIVERED:
            self._frame_delivered(gen)
            return
        if decision.action is ForwardAction.DROPPED:
            self.drops[decision.reason] = self.drops.get(decision.reason, 0) + 1
            if node == self.src:
                # the source sees its own drop; waiting out the timeout
                # would learn nothing new
                self._finish_failure(decision.reason, f"dropped at source {node}")
            return
        edge = service.topology.edges[decision.edge_id]
        nxt = edge.other(node)
        buf_next = encode_frame(decision.frame)
        if self.third:
            self._third_hop(gen, node, nxt, edge, buf_next)
            return
        self._launch_segment(gen, node, nxt)
        if self.service.pipelining:
            self._transit(gen, node, nxt, edge, buf_next)
        else:
            # store and forward: the frame leaves with the swap herald,
            # so only the chain head ever holds memory for this flow
            self.held_frames[node] = (nxt, buf_next, edge)

    def _transit(self, gen: int, node: str, nxt: str, edge, buf: bytes) -> None:
        rng = self.engine.stream(f"frame:{edge.edge_id}")
        if rng.uniform() < self.service.frame_loss_prob:
            self.drops["FrameLost"] = self.drops.get("FrameLost", 0) + 1
            return
        self.engine.send_classical(
            node,
            nxt,
            edge.length_km,
            lambda g=gen, n=nxt, b=buf: self._at_node(g, n, b),
            f"frame {self.tag} -> {nxt}",
        )

    def _third_hop(self, gen: int, node: str, nxt: str, edge, buf: bytes) -> None:
        # payload and header travel together; encoding the first transfer
        # costs one attempt slot at the source
        lead = 1.0 / edge.attempt_rate_hz if node == self.src else 0.0
        rng = self.engine.stream(f"frame:{edge.edge_id}")
        if rng.uniform() < self.service.frame_loss_prob:
            self.drops["FrameLost"] = self.drops.get("FrameLost", 0) + 1
            return
        self.engine.after(
            lead,
            EventKind.PROTOCOL_STEP,
            lambda g=gen, n=node, x=nxt, e=edge, b=buf: self._third_send(g, n, x, e, b),
            f"encode {self.tag}" if lead else f"relay {self.tag}",
        )

    def _third_send(self, gen: int, node: str, nxt: str, edge, buf: bytes) -> None:
        if self.finished or gen != self.gen:
            return
        self.engine.send_classical(
            node,
            nxt,
            edge.length_km,
            lambda g=gen, x=nxt, e=edge, b=buf: self._third_arrive(g, x, e, b),
            f"payload {self.tag} -> {nxt}",
        )

    def _third_arrive(self, gen: int, node: str, edge, buf: bytes) -> None:
        if self.finished or gen != self.gen:
            return
        receiver = self.service.topology.nodes[node]
        rng = self.engine.stream(f"hop:{edge.edge_id}")
        self.stats.attempts_total += 1
        w_next = physics.transmit_logical_hop(
            edge, self.payload_w, receiver, self.engine.params, rng
        )
        if w_next is None:
            self.drops["HopLoss"] = self.drops.get("HopLoss", 0) + 1
            return
        self.payload_w = w_next
        self._at_node(gen, node, buf)

    # -- entanglement extension (first and second class) -----------------

    def _launch_segment(self, gen: int, node: str, nxt: str) -> None:
        ledger = self.engine.memory

        def width(v: str) -> int:
            # an interior sees two halves of this chain (incoming pair and
            # outgoing pair), the endpoints only one
            return 1 if v in (self.src, self.dst) else 2

        def fresh(v: str) -> bool:
            return v not in self._node_held

        def gate() -> bool:
            # reserve an interior whole at first touch; half-filled nodes
            # wedge every chain that converges on them
            return all(
                not fresh(v) or ledger.available(v) >= width(v)
                for v in (node, nxt)
            )

        def can_attempt(segment) -> bool:
            if segment.session in self._stored_ok:
                return True
            return gate()

        def on_stored(segment, pair) -> None:
            if segment.session in self._stored_ok:
                return
            now = self.engine.now
            if gate():
                self._stored_ok.add(segment.session)
                for v in (node, nxt):
                    if fresh(v):
                        ledger.acquire(v, width(v), self.tag, now)
                        self._node_held.add(v)
            # else: a concurrent request claimed the slots between the
            # attempt gate and the herald; the half is lost on arrival and
            # _segment_done regenerates

        session = LinkSession(
            self.engine,
            [node, nxt],
            self.cls,
            LinkProtocol.ONE_BY_ONE,
            options=self.service.options,
            manage_memory=False,
            tag=self.tag,
            can_attempt=can_attempt,
            on_pair_stored=on_stored,
            on_done=lambda s, g=gen, u=node, v=nxt: self._segment_done(g, u, v, s),
        )
        self._sessions.append(session)
        session.start()

    def _segment_done(self, gen: int, u: str, v: str, session: LinkSession) -> None:
        if self.finished or gen != self.gen:
            return
        result = session.result
        if not isinstance(result, ChannelResult):
            return  # aborted attempts die silently; the timeout governs
        _merge_stats(self.stats, result.stats)
        if session not in self._stored_ok:
            self._launch_segment(gen, u, v)
            return
        self._stored_ok.discard(session)
        self.pairs[u] = (v, result.link)
        self._advance(gen)

    def _chain_known(self, gen: int, node: str, link: WernerLink) -> None:
        if self.finished or gen != self.gen:
            return
        self.chain = link
        self.chain_end = node
        self._advance(gen)
        self._maybe_confirm(gen)

    def _advance(self, gen: int) -> None:
        engine = self.engine
        while self.chain_end is not None and self.chain_end in self.pairs:
            u = self.chain_end
            v, pair = self.pairs.pop(u)
            if self.chain is None:
                # first link: session completion means both ends know
                self.chain = pair
                self.chain_end = v
                self._dispatch_held(gen, u)
                continue
            spec_u = self.service.topology.nodes[u]
            merged = physics.swap(
                self.chain,
                pair,
                spec_u,
                engine.stream(f"swap:{u}"),
                now=engine.now,
                link_id=engine.next_link_id(),
                node_a=self.service.topology.nodes[self.src],
                node_c=self.service.topology.nodes[v],
                options=self.service.options,
            )
            self.stats.swaps += 1
            engine.memory.release(u, 2, self.tag, engine.now)
            self.chain = merged
            self.chain_end = None
            self._dispatch_held(gen, u)
            edge = self.service.topology.edge_between(u, v)
            engine.send_classical(
                u,
                v,
                edge.length_km,
                lambda g=gen, n=v, l=merged: self._chain_known(g, n, l),
                f"swap herald {self.tag} -> {v}",
            )
            return
        self._maybe_confirm(gen)

    def _dispatch_held(self, gen: int, node: str) -> None:
        held = self.held_frames.pop(node, None)
        if held is not None:
            nxt, buf, edge = held
            self._transit(gen, node, nxt, edge, buf)

    # -- completion -------------------------------------------------------

    def _frame_delivered(self, gen: int) -> None:
        self.delivered = True
        if self.third:
            link = WernerLink(
                link_id=self.engine.next_link_id(),
                node_a=self.src,
                node_b=self.dst,
                w=self.payload_w,
                created_at=self.engine.now,
                last_updated=self.engine.now,
                decay_rate=0.0,
            )
            self.chain = link
            self.chain_end = self.dst
        self._maybe_confirm(gen)

    def _maybe_confirm(self, gen: int) -> None:
        if not self.delivered or self.chain_end != self.dst or self.chain is None:
            return
        link = self.chain
        self.chain_end = None  # confirm exactly once
        self.engine.send_classical(
            self.dst,
            self.src,
            self.service.classical_distance(self.dst, self.src),
            lambda g=gen, l=link: self._confirmed(g, l),
            f"confirm {self.tag} -> {self.src}",
        )

    def _confirmed(self, gen: int, link: WernerLink) -> None:
        if self.finished or gen != self.gen:
            return
        link.materialize(self.engine.now)
        self._finish_success(link)


# --------------------------------------------------------------------------
# the service


class _RequestState:
    def __init__(self, request: ConnectionRequest, emission: float):
        self.request = request
        self.emission = emission
        self.tag = f"req:{request.request_id}"
        self.stats = SessionStats(started_at=emission)
        self.drops: dict[str, int] = {}
        self.closed = False
        self.queued = False
        self.path: list[str] | None = None
        self.session: LinkSession | None = None
        self.legs: list[_ClLeg] = []
        self.leg_results: dict[int, tuple[WernerLink, float]] = {}
        self.emissions = 0
        self.watchdog = None
        self.on_outcome: Callable[[ConnectionOutcome], None] | None = None


class NetworkService:
    """Serves connection requests over one simulator instance.

    All three connection models share the engine, the memory ledger, and
    the routing tables, so concurrent requests contend realistically.
    """

    def __init__(
        self,
        engine: Simulator,
        *,
        controller: str | None = None,
        cost: PathCost = PathCost.HOP_COUNT,
        default_ttl: int = 64,
        frame_loss_prob: float = 0.0,
        cl_timeout: float | None = None,
        swap_policy: SwapPolicy = SwapPolicy.HIERARCHICAL,
        pipelining: bool = True,
        options: AllPhotonicOptions | None = None,
    ):
        self.engine = engine
        self.topology = engine.topology
        if controller is None:
            controller = next(iter(engine.topology.nodes))
        if controller not in engine.topology.nodes:
            raise KeyError(f"controller {controller} not in topology")
        self.controller = controller
        self.cost = cost
        self.default_ttl = default_ttl
        self.frame_loss_prob = frame_loss_prob
        self.cl_timeout = cl_timeout
        self.swap_policy = swap_policy
        self.pipelining = pipelining
        self.options = options
        self.tables = build_routing_tables(engine.topology, cost)
        self._cdist = self._classical_distances()
        self.outcomes: list[ConnectionOutcome] = []
        self._queue: deque[_RequestState] = deque()
        self._active: dict[str, _RequestState] = {}
        self._frame_seq = 0

    # -- plumbing ---------------------------------------------------------

    def next_frame_id(self) -> int:
        self._frame_seq += 1
        return self._frame_seq

    def _classical_distances(self) -> dict[str, dict[str, float]]:
        # classical signals relay through any node, so this is a plain
        # shortest-length metric with no role or class constraints
        import heapq

        out: dict[str, dict[str, float]] = {}
        for src in self.topology.nodes:
            dist = {src: 0.0}
            heap = [(0.0, src)]
            while heap:
                d, node = heapq.heappop(heap)
                if d > dist.get(node, math.inf):
                    continue
                for neighbor, edge in self.topology.neighbors(node):
                    cand = d + edge.length_km
                    if cand < dist.get(neighbor, math.inf):
                        dist[neighbor] = cand
                        heapq.heappush(heap, (cand, neighbor))
            out[src] = dist
        return out

    def classical_distance(self, a: str, b: str) -> float:
        try:
            return self._cdist[a][b]
        except KeyError:
            raise NoPathError(f"no classical route {a} -> {b}") from None

    def _interior_nodes(self, state: _RequestState) -> set[str]:
        return set(self.topology.nodes) - {state.request.src, state.request.dst}

    def _finish(
        self,
        state: _RequestState,
        outcome: str,
        *,
        link: WernerLink | None = None,
        detail: str = "",
        retries: int = 0,
    ) -> None:
        if state.closed:
            return
        state.closed = True
        now = self.engine.now
        if state.watchdog is not None:
            state.watchdog.cancel()
        if state.session is not None and not state.session.finished:
            state.session.abort("Superseded", detail or outcome)
        for leg in state.legs:
            leg.abort("Superseded")
        occupancy = 0.0
        interior = self._interior_nodes(state)
        tags = [state.tag] + [leg.tag for leg in state.legs]
        for tag in tags:
            occupancy += self.engine.memory.occupancy_s(tag, now, nodes=interior)
            self.engine.memory.release_all(tag, now)
        self._active.pop(state.tag, None)
        if state.queued:
            try:
                self._queue.remove(state)
            except ValueError:
                pass
            state.queued = False
        state.stats.finished_at = now
        emissions = state.emissions + sum(leg.emissions for leg in state.legs)
        if state.legs:
            retries = sum(max(0, leg.gen) for leg in state.legs)
        record = ConnectionOutcome(
            request=state.request,
            outcome=outcome,
            link=link,
            setup_latency_s=now - state.emission,
            stats=state.stats,
            retries=retries,
            emissions=emissions,
            drops=dict(state.drops),
            node_occupancy_s=occupancy,
            detail=detail,
            finished_at=now,
        )
        self.outcomes.append(record)
        if state.on_outcome is not None:
            state.on_outcome(record)
        self._try_admit()

    # -- submission ---------------------------------------------------------

    def submit(
        self,
        request: ConnectionRequest,
        at: float | None = None,
        on_outcome: Callable[[ConnectionOutcome], None] | None = None,
    ) -> None:
        """Register a request; its fate arrives in ``outcomes`` later."""
        if request.model is ConnectionModel.HYBRID and not request.waypoints:
            raise ValueError("hybrid requests need at least one waypoint")
        emission = self.engine.now if at is None else at
        state = _RequestState(request, emission)
        state.on_outcome = on_outcome
        if state.tag in self._active:
            raise ValueError(f"request id {request.request_id} already active")
        self._active[state.tag] = state
        if request.deadline is not None:
            state.watchdog = self.engine.schedule(
                emission + request.deadline,
                EventKind.TIMEOUT,
                lambda: self._deadline_fired(state),
                f"deadline {state.tag}",
            )
        self.engine.schedule(
            emission,
            EventKind.PROTOCOL_STEP,
            lambda: self._arrive(state),
            f"request {request.request_id} ({request.model.value})",
        )

    def _arrive(self, state: _RequestState) -> None:
        if state.closed:
            return
        request = state.request
        for node_id in (request.src, request.dst, *request.waypoints):
            if node_id not in self.topology.nodes:
                self._finish(state, "NoPath", detail=f"unknown node {node_id}")
                return
        try:
            self.classical_distance(request.src, self.controller)
            self.classical_distance(request.src, request.dst)
        except NoPathError as err:
            self._finish(state, "NoPath", detail=str(err))
            return
        if request.model is ConnectionModel.CONNECTION_ORIENTED:
            self._co_submit(state)
        elif request.model is ConnectionModel.CONNECTIONLESS:
            self._cl_submit(state)
        else:
            self._hybrid_submit(state)

    def _deadline_fired(self, state: _RequestState) -> None:
        if state.closed:
            return
        if state.session is not None and not state.session.finished:
            state.session.abort("Timeout", "deadline passed")
            return  # session on_done path records the outcome
        self._finish(state, "Timeout", detail="deadline passed")

    # -- connection oriented -------------------------------------------------

    def _co_submit(self, state: _RequestState) -> None:
        request = state.request
        self.engine.send_classical(
            request.src,
            self.controller,
            self.classical_distance(request.src, self.controller),
            lambda: self._co_request_arrived(state),
            f"request {request.request_id} -> controller",
        )

    def _co_request_arrived(self, state: _RequestState) -> None:
        if state.closed:
            return
        request = state.request
        try:
            validate_request(
                request.repeater_class,
                request.link_protocol,
                ConnectionModel.CONNECTION_ORIENTED,
                self.options,
            )
        except CapabilityViolation as err:
            self._co_reject(state, "CapabilityViolation", str(err))
            return
        try:
            state.path = compute_path(
                self.topology,
                request.src,
                request.dst,
                self.cost,
                repeater_class=request.repeater_class,
                waypoints=request.waypoints,
            )
        except NoPathError as err:
            self._co_reject(state, "NoPath", str(err))
            return
        state.queued = True
        self._queue.append(state)
        self._try_admit()

    def _co_reject(self, state: _RequestState, reason: str, detail: str) -> None:
        self.engine.send_classical(
            self.controller,
            state.request.src,
            self.classical_distance(self.controller, state.request.src),
            lambda: self._finish(state, reason, detail=detail),
            f"reject {state.request.request_id}",
        )

    def _reservation_plan(self, state: _RequestState) -> dict[str, int]:
        cls = state.request.repeater_class
        if cls in (RepeaterClass.THIRD, RepeaterClass.ALL_PHOTONIC):
            return {}
        path = state.path
        plan = {path[0]: 1, path[-1]: 1}
        for node_id in path[1:-1]:
            plan[node_id] = 2
        return plan

    def _try_admit(self) -> None:
        # strict FIFO: only the head may claim resources, so one starved
        # request holds back everything behind it
        while self._queue:
            state = self._queue[0]
            if state.closed:
                self._queue.popleft()
                continue
            plan = self._reservation_plan(state)
            ledger = self.engine.memory
            if any(ledger.available(n) < k for n, k in plan.items()):
                return
            self._queue.popleft()
            state.queued = False
            now = self.engine.now
            for node_id, slots in plan.items():
                ledger.acquire(node_id, slots, state.tag, now)
            c = self.engine.params.c_fiber
            t_start = max(
                now
                + self.classical_distance(self.controller, n) / c
                + self.topology.nodes[n].proc_delay
                for n in state.path
            )
            self.engine.schedule(
                t_start,
                EventKind.PROTOCOL_STEP,
                lambda s=state: self._co_start_session(s),
                f"orders {state.request.request_id}",
            )

    def _co_start_session(self, state: _RequestState) -> None:
        if state.closed:
            return
        request = state.request
        session = LinkSession(
            self.engine,
            state.path,
            request.repeater_class,
            request.link_protocol,
            policy=self.swap_policy,
            pipelining=self.pipelining,
            options=self.options,
            manage_memory=False,
            tag=state.tag,
            f_min=request.f_min,
            on_done=lambda s: self._co_session_done(state, s),
            on_node_free=lambda n: self._co_node_freed(state, n),
        )
        state.session = session
        session.start(at=state.emission)

    def _co_node_freed(self, state: _RequestState, node_id: str) -> None:
        # the swap freed the slots physically; the controller's books
        # update when the node's notice arrives, and admission follows the
        # books
        self.engine.send_classical(
            node_id,
            self.controller,
            self.classical_distance(node_id, self.controller),
            lambda: self._co_release_notice(state, node_id),
            f"free {node_id} ({state.request.request_id})",
        )

    def _co_release_notice(self, state: _RequestState, node_id: str) -> None:
        if state.closed:
            return
        held = self.engine.memory.held_by(state.tag, node_id)
        if held:
            self.engine.memory.release(node_id, held, state.tag, self.engine.now)
        self._try_admit()

    def _co_session_done(self, state: _RequestState, session: LinkSession) -> None:
        result = session.result
        _merge_stats(state.stats, session.stats)
        if isinstance(result, ChannelResult):
            self._finish(state, "Completed", link=result.link)
        else:
            self._finish(state, result.reason, detail=result.detail)

    # -- connectionless -------------------------------------------------------

    def _zero_load_estimate(self, src: str, dst: str, cls: RepeaterClass) -> float:
        """Expected unloaded establishment time along the table route."""
        addr = self.topology.address_of(dst)
        node, hops = src, []
        seen = {src}
        while node != dst:
            edge_id = self.tables.get(node, {}).get(addr)
            if edge_id is None:
                raise NoPathError(f"no table route {src} -> {dst}")
            edge = self.topology.edges[edge_id]
            node = edge.other(node)
            if node in seen:
                raise NoPathError(f"table walk loops at {node}")
            seen.add(node)
            hops.append(edge)
        c = self.engine.params.c_fiber
        total = 0.0
        for edge in hops:
            receiver = self.topology.nodes[edge.other(edge.node_a)]
            if cls is RepeaterClass.THIRD:
                total += edge.length_km / c + receiver.proc_delay
            else:
                p = channel_success_prob(edge)
                expected_attempts = 1.0 / p if p > 0 else math.inf
                total += (
                    expected_attempts / edge.attempt_rate_hz
                    + 2.0 * edge.length_km / c
                    + receiver.proc_delay
                )
        if cls is RepeaterClass.THIRD:
            total += 1.0 / hops[0].attempt_rate_hz
        total += self.classical_distance(dst, src) / c
        total += self.topology.nodes[src].proc_delay
        return total

    def _leg_op_flags(self, cls: RepeaterClass) -> int:
        flags = 0
        if self.engine.params.f_target > 0 and can_purify(cls, self.options):
            flags |= OP_PURIFY
        if cls in (RepeaterClass.SECOND, RepeaterClass.THIRD):
            flags |= OP_ECC
        elif cls is RepeaterClass.ALL_PHOTONIC and self.options is not None:
            if self.options.ecc:
                flags |= OP_ECC
        if self.pipelining:
            flags |= OP_PIPELINING
        return flags

    def _make_leg(
        self,
        state: _RequestState,
        tag: str,
        src: str,
        dst: str,
        on_success: Callable[[WernerLink, float], None],
        on_failure: Callable[[str, str], None],
    ) -> _ClLeg:
        request = state.request
        cls = request.repeater_class
        if self.cl_timeout is not None:
            timeout = self.cl_timeout
        else:
            timeout = 3.0 * self._zero_load_estimate(src, dst, cls)
        return _ClLeg(
            self,
            tag,
            src,
            dst,
            cls,
            op_flags=self._leg_op_flags(cls),
            retry_limit=request.retry_limit,
            timeout=timeout,
            stats=state.stats,
            drops=state.drops,
            on_success=on_success,
            on_failure=on_failure,
        )

    def _cl_submit(self, state: _RequestState) -> None:
        request = state.request
        try:
            validate_request(
                request.repeater_class,
                request.link_protocol,
                ConnectionModel.CONNECTIONLESS,
                self.options,
            )
        except CapabilityViolation as err:
            self._finish(state, "CapabilityViolation", detail=str(err))
            return
        try:
            leg = self._make_leg(
                state,
                state.tag,
                request.src,
                request.dst,
                on_success=lambda link, t: self._cl_done(state, link),
                on_failure=lambda reason, detail: self._finish(
                    state, reason, detail=detail
                ),
            )
        except NoPathError as err:
            self._finish(state, "NoRoute", detail=str(err))
            return
        state.legs.append(leg)
        leg.start()

    def _cl_done(self, state: _RequestState, link: WernerLink) -> None:
        request = state.request
        if request.f_min is not None:
            from .model import fidelity_of

            if fidelity_of(link.w) < request.f_min:
                self._finish(
                    state,
                    "FidelityBelowMinimum",
                    detail=f"delivered F={fidelity_of(link.w):.6f} < {request.f_min}",
                )
                return
        self._finish(state, "Completed", link=link)

    # -- hybrid ---------------------------------------------------------------

    def _hybrid_submit(self, state: _RequestState) -> None:
        request = state.request
        try:
            self._hybrid_validate(request)
        except CapabilityViolation as err:
            self._finish(state, "CapabilityViolation", detail=str(err))
            return
        except NoPathError as err:
            self._finish(state, "NoPath", detail=str(err))
            return
        self.engine.send_classical(
            request.src,
            self.controller,
            self.classical_distance(request.src, self.controller),
            lambda: self._hybrid_orders(state),
            f"request {request.request_id} -> controller",
        )

    def _hybrid_validate(self, request: ConnectionRequest) -> None:
        if request.link_protocol is not LinkProtocol.ONE_BY_ONE:
            raise CapabilityViolation(
                "hybrid areas extend entanglement hop by hop; use one-by-one"
            )
        seen = set()
        for w in request.waypoints:
            if w in (request.src, request.dst) or w in seen:
                raise NoPathError(f"waypoint {w} repeats an endpoint or itself")
            seen.add(w)
        if request.alternate_mode:
            validate_request(
                request.repeater_class,
                request.link_protocol,
                ConnectionModel.CONNECTION_ORIENTED,
                self.options,
            )
            return
        validate_request(
            request.repeater_class,
            request.link_protocol,
            ConnectionModel.CONNECTIONLESS,
            self.options,
        )
        if request.repeater_class is RepeaterClass.THIRD:
            raise CapabilityViolation(
                "third-class areas relay logical payloads, which anchors "
                "cannot swap; use alternate mode"
            )
        for w in request.waypoints:
            if not can_swap(self.topology.nodes[w].repeater_class):
                raise CapabilityViolation(f"anchor {w} cannot swap")

    def _hybrid_orders(self, state: _RequestState) -> None:
        if state.closed:
            return
        request = state.request
        fixed = [request.src, *request.waypoints, request.dst]
        c = self.engine.params.c_fiber
        now = self.engine.now
        t_start = max(
            now
            + self.classical_distance(self.controller, n) / c
            + self.topology.nodes[n].proc_delay
            for n in fixed
        )
        self.engine.schedule(
            t_start,
            EventKind.PROTOCOL_STEP,
            lambda: self._hybrid_begin(state),
            f"orders {request.request_id}",
        )

    def _hybrid_begin(self, state: _RequestState) -> None:
        if state.closed:
            return
        if state.request.alternate_mode:
            self._hybrid_alternate(state)
        else:
            self._hybrid_fast(state)

    def _hybrid_alternate(self, state: _RequestState) -> None:
        request = state.request
        try:
            path = compute_path(
                self.topology,
                request.src,
                request.dst,
                self.cost,
                repeater_class=request.repeater_class,
                waypoints=request.waypoints,
            )
        except NoPathError as err:
            self._finish(state, "NoPath", detail=str(err))
            return
        state.path = path
        try:
            session = LinkSession(
                self.engine,
                path,
                request.repeater_class,
                LinkProtocol.ONE_BY_ONE,
                options=self.options,
                manage_memory=True,
                tag=state.tag,
                f_min=request.f_min,
                on_done=lambda s: self._co_session_done(state, s),
            )
            state.session = session
            session.start(at=state.emission)
        except Exception as err:  # ResourceExhausted under contention
            self._finish(state, type(err).__name__, detail=str(err))

    def _hybrid_fast(self, state: _RequestState) -> None:
        request = state.request
        stops = [request.src, *request.waypoints, request.dst]
        n_legs = len(stops) - 1
        for i in range(n_legs):
            # areas grow toward their anchors: the last leg runs from the
            # far end back to its adjoining waypoint
            if i == n_legs - 1 and n_legs > 1:
                leg_src, leg_dst = stops[i + 1], stops[i]
            else:
                leg_src, leg_dst = stops[i], stops[i + 1]
            tag = f"{state.tag}:leg{i}"
            try:
                leg = self._make_leg(
                    state,
                    tag,
                    leg_src,
                    leg_dst,
                    on_success=lambda link, t, idx=i: self._hybrid_leg_done(
                        state, idx, link, t
                    ),
                    on_failure=lambda reason, detail, idx=i: self._finish(
                        state, reason, detail=f"area {idx}: {detail}"
                    ),
                )
            except NoPathError as err:
                self._finish(state, "NoRoute", detail=str(err))
                return
            state.legs.append(leg)
        for leg in list(state.legs):
            leg.start()

    def _hybrid_leg_done(
        self, state: _RequestState, index: int, link: WernerLink, at: float
    ) -> None:
        if state.closed:
            return
        state.leg_results[index] = (link, at)
        if len(state.leg_results) == len(state.legs):
            self._hybrid_merge(state)

    def _hybrid_merge(self, state: _RequestState) -> None:
        """Anchors swap left to right once every area has its channel."""
        request = state.request
        anchors = list(request.waypoints)
        chain, _ = state.leg_results[0]

        def merge_at(i: int, chain: WernerLink) -> None:
            if state.closed:
                return
            anchor = anchors[i]
            part, _ = state.leg_results[i + 1]
            merged = physics.swap(
                chain,
                part,
                self.topology.nodes[anchor],
                self.engine.stream(f"swap:{anchor}"),
                now=self.engine.now,
                link_id=self.engine.next_link_id(),
                node_a=self.topology.nodes[request.src],
                node_c=self.topology.nodes[
                    anchors[i + 1] if i + 1 < len(anchors) else request.dst
                ],
                options=self.options,
            )
            state.stats.swaps += 1
            ledger = self.engine.memory
            for tag in (f"{state.tag}:leg{i}", f"{state.tag}:leg{i + 1}"):
                held = ledger.held_by(tag, anchor)
                if held:
                    ledger.release(anchor, held, tag, self.engine.now)
            if i + 1 < len(anchors):
                self.engine.send_classical(
                    anchor,
                    anchors[i + 1],
                    self.classical_distance(anchor, anchors[i + 1]),
                    lambda: merge_at(i + 1, merged),
                    f"swap herald {state.tag} -> {anchors[i + 1]}",
                )
            else:
                self._hybrid_announce(state, anchor, merged)

        merge_at(0, chain)

    def _hybrid_announce(
        self, state: _RequestState, anchor: str, link: WernerLink
    ) -> None:
        request = state.request
        heard: set[str] = set()

        def end_heard(end: str) -> None:
            if state.closed:
                return
            heard.add(end)
            if len(heard) == 2:
                link.materialize(self.engine.now)
                if request.f_min is not None:
                    from .model import fidelity_of

                    if fidelity_of(link.w) < request.f_min:
                        self._finish(
                            state,
                            "FidelityBelowMinimum",
                            detail=f"delivered F={fidelity_of(link.w):.6f}",
                        )
                        return
                self._finish(state, "Completed", link=link)

        for end in (request.src, request.dst):
            self.engine.send_classical(
                anchor,
                end,
                self.classical_distance(anchor, end),
                lambda e=end: end_heard(e),
                f"success herald {state.tag} -> {end}",
            )


# --------------------------------------------------------------------------
# blocking wrappers


def _establish(
    request: ConnectionRequest, engine: Simulator, **service_kwargs
) -> ChannelResult | Failure:
    service = NetworkService(engine, **service_kwargs)
    service.submit(request, at=engine.now)
    done = lambda: bool(service.outcomes)
    engine.run_until(stop=done)
    if not service.outcomes:
        return Failure("Stalled", "event queue drained before the request finished")
    record = service.outcomes[0]
    if record.completed:
        return ChannelResult(
            link=record.link,
            setup_latency_s=record.setup_latency_s,
            stats=record.stats,
        )
    return Failure(record.outcome, record.detail, stats=record.stats)


def establish_connection_oriented(
    request: ConnectionRequest, engine: Simulator, **service_kwargs
) -> ChannelResult | Failure:
    """Run one connection-oriented request to completion."""
    if request.model is not ConnectionModel.CONNECTION_ORIENTED:
        raise ValueError("request model must be connection oriented")
    return _establish(request, engine, **service_kwargs)


def establish_connectionless(
    request: ConnectionRequest, engine: Simulator, **service_kwargs
) -> ChannelResult | Failure:
    """Run one connectionless request to completion."""
    if request.model is not ConnectionModel.CONNECTIONLESS:
        raise ValueError("request model must be connectionless")
    return _establish(request, engine, **service_kwargs)


def establish_hybrid(
    request: ConnectionRequest, engine: Simulator, **service_kwargs
) -> ChannelResult | Failure:
    """Run one hybrid request to completion."""
    if request.model is not ConnectionModel.HYBRID:
        raise ValueError("request model must be hybrid")
    return _establish(request, engine, **service_kwargs)
