"""Qubit linear algebra: Pauli matrices, density matrices and Bloch vectors."""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .errors import InvalidObservableError, InvalidStateError

TOL = 1e-10

I2 = np.eye(2, dtype=complex)
SX = np.array([[0, 1], [1, 0]], dtype=complex)
SY = np.array([[0, -1j], [1j, 0]], dtype=complex)
SZ = np.array([[1, 0], [0, -1]], dtype=complex)

for _m in (I2, SX, SY, SZ):
    _m.flags.writeable = False

BASIS_LABELS = ("I", "X", "iY", "Z")


def pauli_basis() -> list[np.ndarray]:
    """Operator basis ``[I, sx, i*sy, sz]`` used for every chi matrix.

    The third element is ``i*sy`` (a real matrix), not ``sy``.
    """
    return [I2.copy(), SX.copy(), 1j * SY, SZ.copy()]


class BlochVector(NamedTuple):
    x: float
    y: float
    z: float

    @property
    def norm(self) -> float:
        return float(np.sqrt(self.x**2 + self.y**2 + self.z**2))


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=complex)
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    """A validated 2x2 qubit state.

    Construction checks Hermiticity, unit trace and positivity, each at
    ``TOL``.  The stored array is read-only.
    """

    matrix: np.ndarray

    def __post_init__(self):
        m = _frozen(self.matrix)
        if m.shape != (2, 2):
            raise InvalidStateError(f"density matrix must be 2x2, got {m.shape}")
        if not np.all(np.isfinite(m)):
            raise InvalidStateError("density matrix has non-finite entries")
        if np.max(np.abs(m - m.conj().T)) > TOL:
            raise InvalidStateError("density matrix is not Hermitian")
        if abs(np.trace(m) - 1) > TOL:
            raise InvalidStateError(f"trace is {np.trace(m).real:.12g}, expected 1")
        if np.linalg.eigvalsh(m).min() < -TOL:
            raise InvalidStateError("density matrix has a negative eigenvalue")
        object.__setattr__(self, "matrix", m)

    def bloch(self) -> BlochVector:
        return bloch_from_density(self)

    def purity(self) -> float:
        return float(np.real(np.trace(self.matrix @ self.matrix)))

    def allclose(self, other: "DensityMatrix", atol: float = 1e-10) -> bool:
        return bool(np.allclose(self.matrix, other.matrix, atol=atol, rtol=0))

    def __repr__(self) -> str:
        x, y, z = self.bloch()
        return f"DensityMatrix(bloch=({x:.6g}, {y:.6g}, {z:.6g}))"


def density_from_bloch(v: Sequence[float]) -> DensityMatrix:
    """Return ``(I + x sx + y sy + z sz) / 2``.

    Raises
    ------
    InvalidStateError
        If the vector is longer than 1 (beyond ``TOL``).
    """
    x, y, z = (float(c) for c in v)
    if np.sqrt(x * x + y * y + z * z) > 1 + TOL:
        raise InvalidStateError(f"Bloch vector {(x, y, z)} has norm > 1")
    return DensityMatrix(0.5 * (I2 + x * SX + y * SY + z * SZ))


def bloch_from_density(rho: DensityMatrix) -> BlochVector:
    m = rho.matrix
    return BlochVector(
        float(2 * m[0, 1].real), float(-2 * m[0, 1].imag), float((m[0, 0] - m[1, 1]).real)
    )


def ket(amplitudes: Sequence[complex]) -> DensityMatrix:
    """Density matrix of the normalised pure state with the given amplitudes."""
    psi = np.asarray(amplitudes, dtype=complex)
    psi = psi / np.linalg.norm(psi)
    return DensityMatrix(np.outer(psi, psi.conj()))


def expectation(rho: DensityMatrix, observable) -> float:
    """``Tr(rho O)`` for a Hermitian observable ``O``."""
    o = np.asarray(observable, dtype=complex)
    if o.shape != (2, 2) or np.max(np.abs(o - o.conj().T)) > TOL:
        raise InvalidObservableError("observable must be a Hermitian 2x2 matrix")
    val = np.trace(rho.matrix @ o)
    if abs(val.imag) > TOL:
        raise InvalidObservableError(f"expectation has imaginary part {val.imag:.3g}")
    return float(val.real)


def trace_distance(a: DensityMatrix, b: DensityMatrix) -> float:
    return float(0.5 * np.abs(np.linalg.eigvalsh(a.matrix - b.matrix)).sum())


GROUND = density_from_bloch((0, 0, 1))
EXCITED = density_from_bloch((0, 0, -1))
PLUS = density_from_bloch((1, 0, 0))
PLUS_I = density_from_bloch((0, 1, 0))
MIXED = density_from_bloch((0, 0, 0))
