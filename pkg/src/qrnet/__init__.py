"""Discrete-event simulation of entanglement repeater networks.

Layers, bottom up: ``model`` (topology and Werner-form pairs), ``physics``
(generation, purification, swapping, decay), ``capability`` (what each
repeater class can run), ``engine`` (deterministic event loop and memory
ledger), ``linklayer`` (channel establishment over a path), ``netlayer``
(connection models and routing), ``harness`` (text inputs, CSV metrics).
"""

from .capability import (
    AllPhotonicOptions,
    CapabilityViolation,
    ConnectionModel,
    Feature,
    LinkProtocol,
    matrix_rows,
    supports_feature,
    supports_link,
    supports_model,
    validate_request,
)
from .engine import (
    EventKind,
    LivelockError,
    MemoryLedger,
    PastEventError,
    ResourceExhausted,
    Simulator,
)
from .harness import (
    ParseError,
    Scenario,
    emit_metrics,
    parse_scenario,
    parse_topology,
    run_experiment,
    splitmix64,
)
from .linklayer import (
    ChannelResult,
    Failure,
    LinkSession,
    SessionStats,
    SwapPolicy,
    one_by_one_link,
    simultaneous_link,
    swap_schedule,
)
from .model import (
    BellState,
    EdgeSpec,
    NodeSpec,
    RepeaterClass,
    Role,
    Topology,
    WernerLink,
    fidelity_of,
    validate_topology,
    werner_from_fidelity,
)
from .netlayer import (
    FRAME_SIZE,
    ConnectionOutcome,
    ConnectionRequest,
    ForwardAction,
    ForwardDecision,
    FrameError,
    NetworkService,
    NoPathError,
    PathCost,
    QuantumFrame,
    build_routing_tables,
    compute_path,
    decode_frame,
    encode_frame,
    establish_connection_oriented,
    establish_connectionless,
    establish_hybrid,
    forward_frame,
)
from .physics import PhysicsParams, channel_success_prob, purify, swap

__version__ = "0.1.0"

__all__ = [
    "AllPhotonicOptions",
    "BellState",
    "CapabilityViolation",
    "ChannelResult",
    "ConnectionModel",
    "ConnectionOutcome",
    "ConnectionRequest",
    "EdgeSpec",
    "EventKind",
    "FRAME_SIZE",
    "Failure",
    "ForwardAction",
    "ForwardDecision",
    "FrameError",
    "Feature",
    "LinkProtocol",
    "LinkSession",
    "LivelockError",
    "MemoryLedger",
    "NetworkService",
    "NoPathError",
    "NodeSpec",
    "ParseError",
    "PastEventError",
    "PathCost",
    "PhysicsParams",
    "QuantumFrame",
    "RepeaterClass",
    "ResourceExhausted",
    "Role",
    "Scenario",
    "SessionStats",
    "Simulator",
    "SwapPolicy",
    "Topology",
    "WernerLink",
    "build_routing_tables",
    "channel_success_prob",
    "compute_path",
    "decode_frame",
    "emit_metrics",
    "encode_frame",
    "establish_connection_oriented",
    "establish_connectionless",
    "establish_hybrid",
    "fidelity_of",
    "forward_frame",
    "matrix_rows",
    "one_by_one_link",
    "parse_scenario",
    "parse_topology",
    "purify",
    "run_experiment",
    "simultaneous_link",
    "swap_schedule",
    "splitmix64",
    "supports_feature",
    "supports_link",
    "supports_model",
    "swap",
    "validate_request",
    "validate_topology",
    "werner_from_fidelity",
]
