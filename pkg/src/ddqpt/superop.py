"""Pauli transfer matrices (PTMs) and conversions between process pictures.

A PTM ``R`` acts on the augmented Bloch vector ``(1, x, y, z)``:
``R[i, j] = Tr(P_i L(P_j)) / 2`` with ``P = (I, sx, sy, sz)``.  Every
trace-preserving map has first row ``(1, 0, 0, 0)``.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .qstate import I2, SX, SY, SZ, pauli_basis

PAULIS = np.stack([I2, SX, SY, SZ])
CHI_BASIS = np.stack(pauli_basis())
# Choi vectors of the chi basis: v_m[2a + c] = (E_m)[c, a]
_CHOI_VECS = np.stack([e.T.reshape(4) for e in CHI_BASIS], axis=1)


def ptm_from_kraus(operators: Sequence[np.ndarray]) -> np.ndarray:
    ks = np.asarray(operators, dtype=complex)
    r = np.einsum("iab,kbc,jcd,kad->ij", PAULIS, ks, PAULIS, ks.conj(), optimize=True)
    return 0.5 * r.real


def ptm_from_unitary(u: np.ndarray) -> np.ndarray:
    return ptm_from_kraus([u])


def ptm_to_choi(ptm: np.ndarray) -> np.ndarray:
    """Choi matrix ``sum_ab |a><b| (x) L(|a><b|)`` for one PTM or a stack."""
    ptm = np.asarray(ptm)
    # matrix unit |a><b| = sum_j Tr(P_j |a><b|) P_j / 2 = sum_j P_j[b, a] P_j / 2
    coeff = PAULIS.transpose(0, 2, 1).reshape(4, 4)  # [j, 2a + b]
    out_coeff = np.einsum("...ij,jk->...ik", ptm, coeff)  # Pauli coefficients of L(unit)
    images = 0.5 * np.einsum("...ik,icd->...kcd", out_coeff, PAULIS)  # [2a+b, c, d]
    shape = images.shape[:-3]
    images = images.reshape(shape + (2, 2, 2, 2))  # a, b, c, d
    choi = images.transpose(*range(len(shape)), len(shape), len(shape) + 2,
                            len(shape) + 1, len(shape) + 3)
    return choi.reshape(shape + (4, 4))


def chi_array_from_ptm(ptm: np.ndarray) -> np.ndarray:
    """chi matrix (basis ``I, sx, i*sy, sz``) of one PTM or a stack of them."""
    choi = ptm_to_choi(ptm)
    v = _CHOI_VECS
    return np.einsum("am,...ab,bn->...mn", v.conj(), choi, v) / 4


def chi_array_from_kraus(operators: Sequence[np.ndarray]) -> np.ndarray:
    ks = np.asarray(operators, dtype=complex)
    # Tr(E_n^dag K) / 2 with Tr(E_n^dag E_m) = 2 delta_nm
    a = 0.5 * np.einsum("nba,kba->kn", CHI_BASIS.conj(), ks)
    return np.einsum("kn,km->nm", a, a.conj())


def apply_chi(chi: np.ndarray, rho: np.ndarray) -> np.ndarray:
    return np.einsum("mn,mab,bc,ndc->ad", chi, CHI_BASIS, rho, CHI_BASIS.conj())


def bloch4(rho: np.ndarray) -> np.ndarray:
    """Augmented Bloch vector ``(1, x, y, z) * Tr(rho)`` of a 2x2 array (or stack)."""
    return np.einsum("iab,...ba->...i", PAULIS, rho).real


def density4(v: np.ndarray) -> np.ndarray:
    """Inverse of :func:`bloch4`."""
    return 0.5 * np.einsum("...i,iab->...ab", np.asarray(v, dtype=complex), PAULIS)


def rz_ptm(phi) -> np.ndarray:
    """PTM of ``exp(-i phi sz / 2)``; ``phi`` may be an array (stacked output)."""
    phi = np.asarray(phi, dtype=float)
    c, s = np.cos(phi), np.sin(phi)
    out = np.zeros(phi.shape + (4, 4))
    out[..., 0, 0] = 1.0
    out[..., 3, 3] = 1.0
    out[..., 1, 1] = c
    out[..., 1, 2] = -s
    out[..., 2, 1] = s
    out[..., 2, 2] = c
    return out
