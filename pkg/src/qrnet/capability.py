"""Which repeater class can run which mechanism, link protocol, and model.

The matrix below is the single source of truth the protocol layers consult
before generating, purifying, swapping, or admitting a request.  Feature
columns say whether a hardware mechanism is part of how that class operates;
protocol and model columns say whether the class may run under that link
protocol or connection model at all.

Feature keys:
    HEG  heralded entanglement generation across a fiber segment
    HEP  heralded entanglement purification (two pairs in, one better pair out)
    HES  entanglement swapping at a midpoint node
    ECC  error-corrected (encoded) operation
    GQM  dependence on a good quantum memory
    FGO  fast feed-forward gate operation on flying qubits
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

from .model import RepeaterClass


class Feature(Enum):
    HEG = "HEG"
    HEP = "HEP"
    HES = "HES"
    ECC = "ECC"
    GQM = "GQM"
    FGO = "FGO"


class LinkProtocol(Enum):
    SIMULTANEOUS = "sl"
    ONE_BY_ONE = "ol"


class ConnectionModel(Enum):
    CONNECTION_ORIENTED = "co"
    CONNECTIONLESS = "cl"
    HYBRID = "hybrid"


class Requirement(Enum):
    REQUIRED = "required"
    NOT_REQUIRED = "not_required"
    SELECTABLE = "selectable"


class Support(Enum):
    ALLOWED = "allowed"
    DISALLOWED = "disallowed"
    NOT_CONSIDERED = "not_considered"


class CapabilityViolation(Exception):
    """A request or operation asked a class for something it cannot do."""


@dataclass(frozen=True)
class AllPhotonicOptions:
    """Resolution of the selectable all-photonic features.

    Unselected features behave as NOT_REQUIRED; ``ecc`` also decides whether
    all-photonic operations degrade pairs by eps_res (selected) or eps_op.
    """

    hep: bool = False
    ecc: bool = False
    fgo: bool = False


_R = Requirement.REQUIRED
_N = Requirement.NOT_REQUIRED
_S = Requirement.SELECTABLE
_A = Support.ALLOWED
_D = Support.DISALLOWED
_NC = Support.NOT_CONSIDERED

FEATURE_ORDER = (
    Feature.HEG,
    Feature.HEP,
    Feature.HES,
    Feature.ECC,
    Feature.GQM,
    Feature.FGO,
)

_FEATURES: dict[RepeaterClass, dict[Feature, Requirement]] = {
    RepeaterClass.FIRST: {
        Feature.HEG: _R, Feature.HEP: _R, Feature.HES: _R,
        Feature.ECC: _N, Feature.GQM: _R, Feature.FGO: _N,
    },
    RepeaterClass.SECOND: {
        Feature.HEG: _R, Feature.HEP: _N, Feature.HES: _R,
        Feature.ECC: _R, Feature.GQM: _R, Feature.FGO: _N,
    },
    RepeaterClass.THIRD: {
        Feature.HEG: _N, Feature.HEP: _N, Feature.HES: _N,
        Feature.ECC: _R, Feature.GQM: _N, Feature.FGO: _R,
    },
    RepeaterClass.ALL_PHOTONIC: {
        Feature.HEG: _R, Feature.HEP: _S, Feature.HES: _R,
        Feature.ECC: _S, Feature.GQM: _N, Feature.FGO: _S,
    },
}

_LINKS: dict[RepeaterClass, dict[LinkProtocol, Support]] = {
    RepeaterClass.FIRST: {LinkProtocol.SIMULTANEOUS: _A, LinkProtocol.ONE_BY_ONE: _A},
    RepeaterClass.SECOND: {LinkProtocol.SIMULTANEOUS: _A, LinkProtocol.ONE_BY_ONE: _A},
    RepeaterClass.THIRD: {LinkProtocol.SIMULTANEOUS: _D, LinkProtocol.ONE_BY_ONE: _A},
    RepeaterClass.ALL_PHOTONIC: {
        LinkProtocol.SIMULTANEOUS: _A, LinkProtocol.ONE_BY_ONE: _NC,
    },
}

_MODELS: dict[RepeaterClass, dict[ConnectionModel, Support]] = {
    RepeaterClass.FIRST: {
        ConnectionModel.CONNECTION_ORIENTED: _A, ConnectionModel.CONNECTIONLESS: _A,
    },
    RepeaterClass.SECOND: {
        ConnectionModel.CONNECTION_ORIENTED: _A, ConnectionModel.CONNECTIONLESS: _A,
    },
    RepeaterClass.THIRD: {
        ConnectionModel.CONNECTION_ORIENTED: _A, ConnectionModel.CONNECTIONLESS: _A,
    },
    RepeaterClass.ALL_PHOTONIC: {
        ConnectionModel.CONNECTION_ORIENTED: _A, ConnectionModel.CONNECTIONLESS: _NC,
    },
}

CLASS_ORDER = (
    RepeaterClass.FIRST,
    RepeaterClass.SECOND,
    RepeaterClass.THIRD,
    RepeaterClass.ALL_PHOTONIC,
)


def supports_feature(
    cls: RepeaterClass,
    feature: Feature,
    options: AllPhotonicOptions | None = None,
) -> Requirement:
    """Requirement entry for (class, feature); SELECTABLE resolves via options."""
    entry = _FEATURES[cls][feature]
    if entry is Requirement.SELECTABLE and options is not None:
        selected = getattr(options, feature.value.lower())
        return Requirement.REQUIRED if selected else Requirement.NOT_REQUIRED
    return entry


def supports_link(cls: RepeaterClass, protocol: LinkProtocol) -> Support:
    return _LINKS[cls][protocol]


def supports_model(cls: RepeaterClass, model: ConnectionModel) -> Support:
    if model is ConnectionModel.HYBRID:
        raise ValueError("hybrid decomposes into per-area models; query those")
    return _MODELS[cls][model]


def can_purify(cls: RepeaterClass, options: AllPhotonicOptions | None = None) -> bool:
    return supports_feature(cls, Feature.HEP, options) is Requirement.REQUIRED


def can_swap(cls: RepeaterClass) -> bool:
    return _FEATURES[cls][Feature.HES] is Requirement.REQUIRED


def validate_request(
    cls: RepeaterClass,
    protocol: LinkProtocol,
    model: ConnectionModel,
    options: AllPhotonicOptions | None = None,
) -> None:
    """Raise CapabilityViolation unless (class, protocol, model) is runnable.

    The one cross rule: connectionless operation builds the channel hop by
    hop, so it requires the one-by-one link protocol.
    """
    link_support = supports_link(cls, protocol)
    if link_support is not Support.ALLOWED:
        raise CapabilityViolation(
            f"{cls.value} repeaters cannot run the "
            f"{'simultaneous' if protocol is LinkProtocol.SIMULTANEOUS else 'one-by-one'}"
            f" link protocol ({link_support.value})"
        )
    model_support = supports_model(cls, model)
    if model_support is not Support.ALLOWED:
        raise CapabilityViolation(
            f"{cls.value} repeaters cannot serve {model.value} requests "
            f"({model_support.value})"
        )
    if (
        model is ConnectionModel.CONNECTIONLESS
        and protocol is not LinkProtocol.ONE_BY_ONE
    ):
        raise CapabilityViolation(
            "connectionless delivery extends the channel hop by hop and "
            "requires the one-by-one link protocol"
        )


def matrix_rows() -> list[tuple[str, list[str]]]:
    """The full matrix as (class name, ten cell strings) rows for display.

    Cells use R / - / S for feature requirements and A / D / NC for link
    and model support.
    """
    req_sym = {_R: "R", _N: "-", _S: "S"}
    sup_sym = {_A: "A", _D: "D", _NC: "NC"}
    rows = []
    for cls in CLASS_ORDER:
        cells = [req_sym[_FEATURES[cls][f]] for f in FEATURE_ORDER]
        cells.append(sup_sym[_LINKS[cls][LinkProtocol.SIMULTANEOUS]])
        cells.append(sup_sym[_LINKS[cls][LinkProtocol.ONE_BY_ONE]])
        cells.append(sup_sym[_MODELS[cls][ConnectionModel.CONNECTION_ORIENTED]])
        cells.append(sup_sym[_MODELS[cls][ConnectionModel.CONNECTIONLESS]])
        rows.append((cls.value, cells))
    return rows


MATRIX_COLUMNS = ("HEG", "HEP", "HES", "ECC", "GQM", "FGO", "SL", "OL", "CO", "CL")
