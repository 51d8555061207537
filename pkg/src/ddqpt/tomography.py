"""Single-qubit process tomography and the normalised process fidelity.

chi matrices are expressed in the basis ``{I, sx, i*sy, sz}`` so that
``L(rho) = sum_mn chi[m, n] E_m rho E_n^dag``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import InvalidParameterError, ReconstructionError, UndefinedFidelityError
from .qstate import BASIS_LABELS, GROUND, EXCITED, PLUS, PLUS_I, SX, SY, SZ, DensityMatrix, density_from_bloch
from .superop import CHI_BASIS, apply_chi, chi_array_from_ptm

CHI_TOL = 1e-9

Process = Callable[[DensityMatrix], DensityMatrix]

PROBES = (GROUND, EXCITED, PLUS, PLUS_I)
# extra inputs used only to detect processes that are not linear
_CHECK_PROBES = (density_from_bloch((-1, 0, 0)), density_from_bloch((0, -1, 0)))


@dataclass(frozen=True, eq=False)
class ProcessMatrix:
    chi: np.ndarray

    def __post_init__(self):
        chi = np.array(self.chi, dtype=complex)
        if chi.shape != (4, 4):
            raise InvalidParameterError(f"chi must be 4x4, got {chi.shape}")
        if np.max(np.abs(chi - chi.conj().T)) > CHI_TOL:
            raise InvalidParameterError("chi matrix is not Hermitian")
        if abs(np.trace(chi) - 1) > CHI_TOL:
            raise InvalidParameterError(f"chi trace is {np.trace(chi).real:.12g}, expected 1")
        chi.flags.writeable = False
        object.__setattr__(self, "chi", chi)

    def allclose(self, other: "ProcessMatrix", atol: float = 1e-8) -> bool:
        return bool(np.allclose(self.chi, other.chi, atol=atol, rtol=0))

    def to_dict(self) -> dict:
        return {
            "basis": list(BASIS_LABELS),
            "chi": [[float(c.real), float(c.imag)] for c in self.chi.reshape(-1)],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d: dict) -> "ProcessMatrix":
        if list(d.get("basis", [])) != list(BASIS_LABELS):
            raise InvalidParameterError(f"unsupported chi basis {d.get('basis')!r}")
        pairs = np.asarray(d["chi"], dtype=float)
        if pairs.shape != (16, 2):
            raise InvalidParameterError("chi must be 16 [re, im] pairs in row-major order")
        return cls((pairs[:, 0] + 1j * pairs[:, 1]).reshape(4, 4))

    @classmethod
    def from_json(cls, text: str) -> "ProcessMatrix":
        return cls.from_dict(json.loads(text))


def target_identity_chi() -> ProcessMatrix:
    chi = np.zeros((4, 4), dtype=complex)
    chi[0, 0] = 1.0
    return ProcessMatrix(chi)


def chi_from_ptm(ptm: np.ndarray) -> ProcessMatrix:
    return ProcessMatrix(chi_array_from_ptm(ptm))


# Linear map chi (flattened, 16) -> stacked probe outputs (4 probes x 4 entries).
def _design(inputs) -> np.ndarray:
    rows = []
    for rho in inputs:
        # (E_m rho E_n^dag)[a, b] for all m, n
        block = np.einsum("mac,cd,nbd->abmn", CHI_BASIS, rho.matrix, CHI_BASIS.conj())
        rows.append(block.reshape(4, 16))
    return np.concatenate(rows, axis=0)


_A = _design(PROBES)


def _invert(outputs: list[np.ndarray]) -> np.ndarray:
    b = np.concatenate([o.reshape(4) for o in outputs])
    return np.linalg.solve(_A, b).reshape(4, 4)


def qpt(process: Process, check_linearity: bool = True) -> ProcessMatrix:
    """Reconstruct the chi matrix of ``process`` by linear inversion.

    The process is driven with ``|0>, |1>, |+>, |+i>``.  When
    ``check_linearity`` is set, the reconstruction is also asked to predict
    the outputs for ``|->`` and ``|-i>``; a mismatch above ``1e-6`` means the
    black box is not a linear map and raises :class:`ReconstructionError`.
    """
    outputs = [process(rho).matrix for rho in PROBES]
    chi = _invert(outputs)
    if check_linearity:
        for rho in _CHECK_PROBES:
            resid = np.max(np.abs(apply_chi(chi, rho.matrix) - process(rho).matrix))
            if resid > 1e-6:
                raise ReconstructionError(f"process is not linear on the probe set (residual {resid:.3g})")
    try:
        return ProcessMatrix(chi)
    except InvalidParameterError as exc:
        raise ReconstructionError(str(exc)) from exc


def qpt_with_shots(process: Process, shots: int, seed=None) -> ProcessMatrix:
    """Tomography from simulated projective measurements.

    Each probe output is measured along x, y and z with ``shots`` repetitions
    per axis; the estimated Bloch vectors are then inverted as in :func:`qpt`.
    The result is made Hermitian and renormalised to unit trace.
    """
    if shots < 1:
        raise InvalidParameterError("shots must be >= 1")
    rng = np.random.default_rng(seed)
    outputs = []
    for rho in PROBES:
        out = process(rho).matrix
        r = []
        for op in (SX, SY, SZ):
            p_up = np.clip((1 + np.trace(out @ op).real) / 2, 0.0, 1.0)
            r.append(2 * rng.binomial(shots, p_up) / shots - 1)
        outputs.append(0.5 * (np.eye(2) + r[0] * SX + r[1] * SY + r[2] * SZ))
    chi = _invert(outputs)
    chi = 0.5 * (chi + chi.conj().T)
    chi = chi / np.trace(chi).real
    return ProcessMatrix(chi)


def process_fidelity(chi_dd, chi_t) -> float:
    """``|Tr(chi_t chi_dd^dag)| / sqrt(Tr(chi_t chi_t^dag) Tr(chi_dd chi_dd^dag))``.

    Accepts :class:`ProcessMatrix` instances or raw arrays; the ratio does not
    depend on the normalisation of either argument.
    """
    a = np.asarray(getattr(chi_dd, "chi", chi_dd), dtype=complex)
    b = np.asarray(getattr(chi_t, "chi", chi_t), dtype=complex)
    na = np.vdot(a, a).real
    nb = np.vdot(b, b).real
    if na <= 0 or nb <= 0:
        raise UndefinedFidelityError("process fidelity is undefined for a zero chi matrix")
    return float(abs(np.vdot(a, b)) / np.sqrt(na * nb))


def fidelity_to_identity(chi: np.ndarray) -> np.ndarray:
    """Vectorised fidelity against the identity target for a stack of chi arrays."""
    chi = np.asarray(chi)
    return np.abs(chi[..., 0, 0]) / np.sqrt(np.sum(np.abs(chi) ** 2, axis=(-2, -1)))
