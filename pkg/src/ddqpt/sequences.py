"""Dynamical decoupling sequence generators and the imperfect pulse model.

All pulses are instantaneous rotations; a sequence describes one cycle as
``delay, pulse, delay, pulse, ..., delay`` with ``len(delays) ==
len(pulses) + 1``.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import InvalidParameterError
from .qstate import I2, SX, SY, SZ, DensityMatrix

TWO_PI = 2 * np.pi


class SequenceKind(str, Enum):
    FREE = "Free"
    HAHN = "Hahn"
    XY4 = "XY4"
    XY8 = "XY8"
    XY16 = "XY16"
    CDD = "CDD"
    KDD = "KDD"
    UR = "UR"


def _wrap(phase: float) -> float:
    p = float(np.mod(phase, TWO_PI))
    return 0.0 if np.isclose(p, TWO_PI, rtol=0, atol=1e-12) else p


@dataclass(frozen=True)
class Pulse:
    nominal_angle: float = np.pi
    phase: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "phase", _wrap(self.phase))


@dataclass(frozen=True)
class PulseErrorModel:
    """Systematic pulse errors shared by every pulse of a run.

    ``flip_angle_error`` scales the rotation angle by ``1 + eps``;
    ``detuning_tilt`` lifts the rotation axis out of the xy-plane towards z.
    """

    flip_angle_error: float = 0.0
    detuning_tilt: float = 0.0

    def __post_init__(self):
        if not abs(self.flip_angle_error) < 1:
            raise InvalidParameterError("flip_angle_error must satisfy |eps| < 1")
        if not abs(self.detuning_tilt) < np.pi / 2:
            raise InvalidParameterError("detuning_tilt must satisfy |tilt| < pi/2")


PERFECT = PulseErrorModel()


def _ns(seconds: float) -> float:
    # drop the float noise of the unit change (1e-6 ns is far below any grid used)
    return round(seconds * 1e9, 6)


@dataclass(frozen=True)
class PulseSequence:
    kind: str
    tau: float
    pulses: tuple = ()
    delays: tuple = field(default=())
    label: str = ""

    def __post_init__(self):
        if len(self.delays) != len(self.pulses) + 1:
            raise InvalidParameterError("a cycle needs exactly one more delay than pulses")
        if any(d < 0 for d in self.delays):
            raise InvalidParameterError("delays must be non-negative")
        object.__setattr__(self, "pulses", tuple(self.pulses))
        object.__setattr__(self, "delays", tuple(float(d) for d in self.delays))
        if not self.label:
            object.__setattr__(self, "label", self.kind)

    @property
    def cycle_time(self) -> float:
        return float(sum(self.delays))

    @property
    def phases(self) -> list[float]:
        return [p.phase for p in self.pulses]

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "label": self.label,
            "tau_ns": _ns(self.tau),
            "phases_rad": self.phases,
            "delays_ns": [_ns(d) for d in self.delays],
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)

    @classmethod
    def from_dict(cls, d: dict) -> "PulseSequence":
        pulses = tuple(Pulse(np.pi, ph) for ph in d["phases_rad"])
        return cls(
            kind=d["kind"],
            tau=d["tau_ns"] * 1e-9,
            pulses=pulses,
            delays=tuple(x * 1e-9 for x in d["delays_ns"]),
            label=d.get("label", ""),
        )


def ur_phases(n: int, phi2: float = np.pi / 2, sign: int = 1) -> list[float]:
    """Phases of the universally robust UR-n cycle, wrapped to ``[0, 2 pi)``.

    ``phi_k = (k-1)(k-2) Phi / 2 + (k-1) phi2`` with ``Phi = sign pi / m`` for
    ``n = 4m`` and ``Phi = sign 2m pi / (2m + 1)`` for ``n = 4m + 2``.
    """
    if not isinstance(n, (int, np.integer)) or n < 4 or n % 2:
        raise InvalidParameterError(f"UR sequences need an even n >= 4, got {n!r}")
    if sign not in (1, -1):
        raise InvalidParameterError("sign must be +1 or -1")
    m = n // 4
    # work in units of pi so that rational multiples wrap exactly
    big_phi = sign / m if n % 4 == 0 else sign * 2 * m / (2 * m + 1)
    p2 = phi2 / np.pi
    out = []
    for k in range(1, n + 1):
        u = (k - 1) * (k - 2) * big_phi / 2 + (k - 1) * p2
        out.append(_wrap(np.mod(u, 2.0) * np.pi))
    return out


_XY4 = [0.0, np.pi / 2, 0.0, np.pi / 2]
_XY8 = _XY4 + _XY4[::-1]
_XY16 = _XY8 + [p + np.pi for p in _XY8]


def kdd_phases() -> list[float]:
    out = []
    for phi in (0.0, np.pi / 2, 0.0, np.pi / 2):
        out += [phi + np.pi / 6, phi, phi + np.pi / 2, phi, phi + np.pi / 6]
    return out


def cdd_phases(level: int) -> list[float]:
    """``CDD(l) = [CDD(l-1) X CDD(l-1) Y CDD(l-1) X CDD(l-1) Y]`` with CDD(1) = XY4."""
    if level < 1:
        raise InvalidParameterError("CDD level must be >= 1")
    if level == 1:
        return list(_XY4)
    inner = cdd_phases(level - 1)
    return inner + [0.0] + inner + [np.pi / 2] + inner + [0.0] + inner + [np.pi / 2]


def _uniform(kind: str, phases: list[float], tau: float, label: str) -> PulseSequence:
    if not tau > 0:
        raise InvalidParameterError("tau must be positive")
    n = len(phases)
    delays = [tau / 2] + [tau] * (n - 1) + [tau / 2]
    return PulseSequence(kind, tau, tuple(Pulse(np.pi, p) for p in phases), tuple(delays), label)


_KIND_RE = re.compile(r"^\s*([A-Za-z]+?)\s*\(?\s*(\d*)\s*\)?\s*$")


def parse_kind(kind) -> tuple[SequenceKind, int | None]:
    """Split names like ``"UR20"``, ``"UR(20)"`` or ``"CDD2"`` into kind and order."""
    if isinstance(kind, SequenceKind):
        return kind, None
    text = str(kind)
    for k in SequenceKind:
        if text.lower() == k.value.lower():
            return k, None
    m = _KIND_RE.match(text)
    if m and m.group(2):
        for k in (SequenceKind.UR, SequenceKind.CDD):
            if m.group(1).lower() == k.value.lower():
                return k, int(m.group(2))
    raise InvalidParameterError(f"unknown sequence kind {kind!r}")


def build_sequence(
    kind,
    tau: float | None = None,
    total_time: float | None = None,
    *,
    n: int | None = None,
    level: int | None = None,
    phi2: float = np.pi / 2,
    sign: int = 1,
) -> PulseSequence:
    """One cycle of the requested sequence.

    ``tau`` is the pulse spacing for the DD kinds. ``Free`` and ``Hahn`` use
    ``total_time`` instead (a single delay, or a single X pulse in the
    middle).  ``n`` selects UR-n (also accepted as ``"UR20"``) and ``level``
    the CDD order (``"CDD2"``).
    """
    k, order = parse_kind(kind)
    if k in (SequenceKind.FREE, SequenceKind.HAHN):
        t = total_time if total_time is not None else tau
        if t is None or not t > 0:
            raise InvalidParameterError(f"{k.value} needs a positive total_time")
        if k is SequenceKind.FREE:
            return PulseSequence(k.value, t, (), (t,), "Free")
        return PulseSequence(k.value, t, (Pulse(np.pi, 0.0),), (t / 2, t / 2), "Hahn")
    if tau is None:
        raise InvalidParameterError(f"{k.value} needs tau")
    if k is SequenceKind.XY4:
        return _uniform(k.value, _XY4, tau, "XY4")
    if k is SequenceKind.XY8:
        return _uniform(k.value, _XY8, tau, "XY8")
    if k is SequenceKind.XY16:
        return _uniform(k.value, _XY16, tau, "XY16")
    if k is SequenceKind.KDD:
        return _uniform(k.value, kdd_phases(), tau, "KDD")
    if k is SequenceKind.CDD:
        lv = level if level is not None else (order if order is not None else 2)
        return _uniform(k.value, cdd_phases(lv), tau, f"CDD{lv}")
    nn = n if n is not None else (order if order is not None else 4)
    return _uniform(k.value, ur_phases(nn, phi2, sign), tau, f"UR{nn}")


def pulse_unitary(p: Pulse, err: PulseErrorModel = PERFECT) -> np.ndarray:
    """``exp(-i theta/2 n.sigma)`` with the (possibly tilted) rotation axis ``n``."""
    theta = p.nominal_angle * (1 + err.flip_angle_error)
    ct = np.cos(err.detuning_tilt)
    axis = ct * np.cos(p.phase) * SX + ct * np.sin(p.phase) * SY + np.sin(err.detuning_tilt) * SZ
    return np.cos(theta / 2) * I2 - 1j * np.sin(theta / 2) * axis


def apply_pulse(rho: DensityMatrix, p: Pulse, err: PulseErrorModel = PERFECT) -> DensityMatrix:
    u = pulse_unitary(p, err)
    out = u @ rho.matrix @ u.conj().T
    return DensityMatrix(0.5 * (out + out.conj().T))


def cycle_unitary(seq: PulseSequence, err: PulseErrorModel = PERFECT) -> np.ndarray:
    """Product of the cycle's pulses, free evolution ignored."""
    u = I2.copy()
    for p in seq.pulses:
        u = pulse_unitary(p, err) @ u
    return u
