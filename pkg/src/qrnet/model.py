"""Core data model for entanglement-based repeater networks.

Entangled pairs are tracked in Werner form: a maximally entangled target
state mixed with white noise.  A single scalar ``w`` in [0, 1] fixes the
state, and the fidelity to the target is ``F = (1 + 3w) / 4``, so ``w = 1``
is a perfect pair and ``w = 0`` is the maximally mixed state (F = 0.25).

The network itself is an undirected multigraph of nodes (end nodes,
repeaters, switches) joined by fiber edges.  Everything here is plain
data; protocol behaviour lives in the link and network layers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

INV_SQRT2 = 1.0 / math.sqrt(2.0)


class BellState(Enum):
    """The four maximally entangled two-qubit states.

    Amplitudes follow the sign/label convention used throughout this
    package: the PSI pair lives on |00>, |11> and the PHI pair on
    |01>, |10>.
    """

    PSI_PLUS = "psi+"
    PSI_MINUS = "psi-"
    PHI_PLUS = "phi+"
    PHI_MINUS = "phi-"


_BELL_VECTORS = {
    BellState.PSI_PLUS: (INV_SQRT2, 0.0, 0.0, INV_SQRT2),
    BellState.PSI_MINUS: (INV_SQRT2, 0.0, 0.0, -INV_SQRT2),
    BellState.PHI_PLUS: (0.0, INV_SQRT2, INV_SQRT2, 0.0),
    BellState.PHI_MINUS: (0.0, INV_SQRT2, -INV_SQRT2, 0.0),
}


def bell_amplitudes(state: BellState) -> np.ndarray:
    """Amplitude vector of ``state`` over the product basis |00>,|01>,|10>,|11>."""
    return np.array(_BELL_VECTORS[state], dtype=float)


def fidelity_of(w: float) -> float:
    """Fidelity to the target Bell state of a Werner state with parameter ``w``."""
    if not 0.0 <= w <= 1.0:
        raise ValueError(f"werner parameter out of range: {w}")
    return (1.0 + 3.0 * w) / 4.0


def werner_from_fidelity(fidelity: float) -> float:
    """Inverse of :func:`fidelity_of`; valid for F in [0.25, 1]."""
    if not 0.25 <= fidelity <= 1.0:
        raise ValueError(f"fidelity out of range for a Werner state: {fidelity}")
    return (4.0 * fidelity - 1.0) / 3.0


class Role(Enum):
    END = "end"
    REPEATER = "repeater"
    SWITCH = "switch"


class RepeaterClass(Enum):
    """Hardware generations a repeater node can belong to.

    FIRST       heralded generation + purification + swapping, needs good memory
    SECOND      purification replaced by error correction, still swaps
    THIRD       one-way: logical qubits hop node to node, no stored halves
    ALL_PHOTONIC cluster-state links, memoryless operation
    """

    FIRST = "first"
    SECOND = "second"
    THIRD = "third"
    ALL_PHOTONIC = "all_photonic"


@dataclass
class NodeSpec:
    """Static description of one network node."""

    node_id: str
    role: Role = Role.REPEATER
    repeater_class: RepeaterClass = RepeaterClass.FIRST
    memory_count: int = 2
    t_coh: float = math.inf          # memory coherence time, seconds
    eps_op: float = 0.0              # residual error of a raw two-qubit op
    eps_res: float = 0.0             # residual error after error correction
    proc_delay: float = 0.0          # local classical processing delay, seconds

    def decay_rate(self) -> float:
        """Per-second Werner decay contributed by this node's memory."""
        return 0.0 if math.isinf(self.t_coh) else 1.0 / self.t_coh


@dataclass
class EdgeSpec:
    """Static description of one fiber edge (undirected)."""

    edge_id: str
    node_a: str
    node_b: str
    length_km: float = 1.0
    alpha_db_per_km: float = 0.2
    p_src: float = 1.0               # source emission probability per attempt
    eta_det: float = 1.0             # detector efficiency
    attempt_rate_hz: float = 1.0e6   # pulsed generation attempt rate
    weight: float = 1.0              # static admission weight used by routing

    def other(self, node_id: str) -> str:
        if node_id == self.node_a:
            return self.node_b
        if node_id == self.node_b:
            return self.node_a
        raise ValueError(f"{node_id} is not an endpoint of edge {self.edge_id}")


@dataclass
class WernerLink:
    """One live entangled pair between two nodes, in Werner form.

    ``w`` is stored as of ``last_updated``; memory decay between then and
    any later read is applied lazily by the simulator that owns the link.
    ``decay_rate`` is the combined per-second rate of both holder nodes.
    The 2-bit Pauli tag records which Bell state the pair is currently in
    relative to ``target``; it is classical side information and does not
    change ``w``.
    """

    link_id: int
    node_a: str
    node_b: str
    w: float
    created_at: float
    last_updated: float
    target: BellState = BellState.PSI_PLUS
    decay_rate: float = 0.0
    pauli_x: int = 0
    pauli_z: int = 0

    def __post_init__(self) -> None:
        if self.node_a == self.node_b:
            raise ValueError("link endpoints must be distinct nodes")
        if not 0.0 <= self.w <= 1.0:
            raise ValueError(f"werner parameter out of range: {self.w}")

    def endpoints(self) -> tuple[str, str]:
        return (self.node_a, self.node_b)

    def other_end(self, node_id: str) -> str:
        if node_id == self.node_a:
            return self.node_b
        if node_id == self.node_b:
            return self.node_a
        raise ValueError(f"{node_id} does not hold link {self.link_id}")

    def w_at(self, now: float) -> float:
        """Werner parameter after lazy decay up to time ``now``."""
        dt = now - self.last_updated
        if dt < 0:
            raise ValueError("cannot read a link before its last update")
        if dt == 0 or self.decay_rate == 0.0:
            return self.w
        return self.w * math.exp(-self.decay_rate * dt)

    def fidelity_at(self, now: float) -> float:
        return fidelity_of(self.w_at(now))

    def materialize(self, now: float) -> None:
        """Fold accumulated decay into ``w`` so the link reads as of ``now``."""
        self.w = self.w_at(now)
        self.last_updated = now


@dataclass
class Violation:
    """One structural problem found in a topology."""

    kind: str
    subject: str
    reason: str


@dataclass
class Topology:
    """Undirected network graph with stable node addresses.

    Nodes get dense 32-bit addresses in insertion order so that frame
    headers can reference them compactly.
    """

    nodes: dict[str, NodeSpec] = field(default_factory=dict)
    edges: dict[str, EdgeSpec] = field(default_factory=dict)
    _adjacency: dict[str, list[str]] = field(default_factory=dict, repr=False)
    _addresses: dict[str, int] = field(default_factory=dict, repr=False)

    def add_node(self, spec: NodeSpec) -> None:
        if spec.node_id in self.nodes:
            raise ValueError(f"duplicate node id: {spec.node_id}")
        self.nodes[spec.node_id] = spec
        self._adjacency[spec.node_id] = []
        self._addresses[spec.node_id] = len(self._addresses)

    def add_edge(self, spec: EdgeSpec) -> None:
        if spec.edge_id in self.edges:
            raise ValueError(f"duplicate edge id: {spec.edge_id}")
        self.edges[spec.edge_id] = spec
        for end in (spec.node_a, spec.node_b):
            if end in self._adjacency:
                self._adjacency[end].append(spec.edge_id)

    def neighbors(self, node_id: str) -> list[tuple[str, EdgeSpec]]:
        """(neighbor id, edge) pairs in edge insertion order."""
        out = []
        for edge_id in self._adjacency.get(node_id, ()):
            edge = self.edges[edge_id]
            out.append((edge.other(node_id), edge))
        return out

    def edge_between(self, a: str, b: str) -> EdgeSpec:
        for edge_id in self._adjacency.get(a, ()):
            edge = self.edges[edge_id]
            if edge.other(a) == b:
                return edge
        raise KeyError(f"no edge between {a} and {b}")

    def address_of(self, node_id: str) -> int:
        return self._addresses[node_id]

    def node_by_address(self, address: int) -> str:
        for node_id, addr in self._addresses.items():
            if addr == address:
                return node_id
        raise KeyError(f"no node with address {address}")

    def path_length_km(self, path: list[str]) -> float:
        """Total fiber length along consecutive nodes of ``path``."""
        return sum(
            self.edge_between(a, b).length_km for a, b in zip(path, path[1:])
        )


def link_decay_rate(node_a: NodeSpec, node_b: NodeSpec) -> float:
    """Combined memory decay rate for a pair held at two nodes."""
    return node_a.decay_rate() + node_b.decay_rate()


def validate_topology(topology: Topology) -> list[Violation]:
    """Check structural invariants; returns an empty list for a clean graph.

    Violations are reported as data rather than raised so a caller can show
    all of them at once.
    """
    problems: list[Violation] = []

    for node in topology.nodes.values():
        if node.memory_count < 0:
            problems.append(
                Violation("BadMemory", node.node_id, "memory_count must be >= 0")
            )
        if (
            node.role in (Role.REPEATER, Role.SWITCH)
            and node.repeater_class is not RepeaterClass.THIRD
            and node.memory_count < 2
        ):
            problems.append(
                Violation(
                    "BadMemory",
                    node.node_id,
                    "repeaters and switches need at least 2 memory slots "
                    "unless they are third class",
                )
            )
        if node.t_coh <= 0:
            problems.append(
                Violation("BadCoherence", node.node_id, "t_coh must be positive")
            )
        for name, value in (("eps_op", node.eps_op), ("eps_res", node.eps_res)):
            if not 0.0 <= value <= 1.0:
                problems.append(
                    Violation("BadProbability", node.node_id, f"{name} out of [0,1]")
                )
        if node.eps_res > node.eps_op:
            problems.append(
                Violation(
                    "EpsOrder",
                    node.node_id,
                    "eps_res must not exceed eps_op (correction cannot hurt)",
                )
            )
        if node.proc_delay < 0:
            problems.append(
                Violation("BadDelay", node.node_id, "proc_delay must be >= 0")
            )

    seen_pairs: dict[tuple[str, str], str] = {}
    for edge in topology.edges.values():
        for end in (edge.node_a, edge.node_b):
            if end not in topology.nodes:
                problems.append(
                    Violation("UnknownEndpoint", edge.edge_id, f"unknown node {end}")
                )
        if edge.node_a == edge.node_b:
            problems.append(
                Violation("SelfLoop", edge.edge_id, "edge joins a node to itself")
            )
        pair = tuple(sorted((edge.node_a, edge.node_b)))
        if pair in seen_pairs:
            problems.append(
                Violation(
                    "DuplicateEdge",
                    edge.edge_id,
                    f"same endpoints as edge {seen_pairs[pair]}",
                )
            )
        else:
            seen_pairs[pair] = edge.edge_id
        if edge.length_km <= 0:
            problems.append(
                Violation("BadLength", edge.edge_id, "length_km must be positive")
            )
        if edge.alpha_db_per_km < 0:
            problems.append(
                Violation("BadLoss", edge.edge_id, "alpha must be >= 0")
            )
        for name, value in (("p_src", edge.p_src), ("eta_det", edge.eta_det)):
            if not 0.0 <= value <= 1.0:
                problems.append(
                    Violation("BadProbability", edge.edge_id, f"{name} out of [0,1]")
                )
        if edge.attempt_rate_hz <= 0:
            problems.append(
                Violation("BadRate", edge.edge_id, "attempt_rate_hz must be positive")
            )
        if edge.weight <= 0:
            problems.append(
                Violation("BadWeight", edge.edge_id, "weight must be positive")
            )

    return problems
