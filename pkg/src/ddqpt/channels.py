"""Kraus channels: relaxation models, CPTP checks and repeated application."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidChannelError, InvalidDurationError, InvalidParameterError
from .qstate import I2, SX, SY, SZ, DensityMatrix
from .superop import CHI_BASIS, chi_array_from_kraus, chi_array_from_ptm, ptm_from_kraus
from .tomography import ProcessMatrix

CPTP_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class KrausChannel:
    """Kraus operators together with the duration they represent (seconds)."""

    operators: tuple
    dt: float = 0.0

    def __post_init__(self):
        ops = []
        for k in self.operators:
            k = np.array(k, dtype=complex)
            if k.shape != (2, 2) or not np.all(np.isfinite(k)):
                raise InvalidChannelError("Kraus operators must be finite 2x2 matrices")
            k.flags.writeable = False
            ops.append(k)
        if not 1 <= len(ops) <= 8:
            raise InvalidChannelError(f"expected 1-8 Kraus operators, got {len(ops)}")
        object.__setattr__(self, "operators", tuple(ops))

    def completeness_error(self) -> float:
        s = sum(k.conj().T @ k for k in self.operators)
        return float(np.max(np.abs(s - I2)))

    def is_cptp(self, tol: float = CPTP_TOL) -> bool:
        return self.completeness_error() < tol

    def ptm(self) -> np.ndarray:
        return ptm_from_kraus(self.operators)


@dataclass(frozen=True)
class AdPdParams:
    """Rates of the combined amplitude/phase damping model (Hz)."""

    alpha: float
    beta: float

    def __post_init__(self):
        if not (self.alpha >= 0 and self.beta >= 0):
            raise InvalidParameterError("alpha and beta must be non-negative")

    @property
    def t1(self) -> float:
        return np.inf if self.beta == 0 else 1.0 / self.beta

    @property
    def t2(self) -> float:
        rate = self.alpha + self.beta / 2
        return np.inf if rate == 0 else 1.0 / rate


@dataclass(frozen=True)
class EffectiveDdParams:
    """Phase-error rate ``alpha`` (Hz), bit-flip rate ``beta`` (Hz) and
    residual z-rotation ``omega`` (rad/s) of the effective DD channel."""

    alpha: float
    beta: float
    omega: float = 0.0

    def __post_init__(self):
        if not (self.alpha >= 0 and self.beta >= 0):
            raise InvalidParameterError("alpha and beta must be non-negative")
        if not np.isfinite(self.omega):
            raise InvalidParameterError("omega must be finite")


def _rates(alpha: float, beta: float, dt: float) -> tuple[float, float]:
    if not dt > 0:
        raise InvalidDurationError(f"dt must be positive, got {dt}")
    gamma = -np.expm1(-beta * dt)
    lam = 1.0 + 0.5 * np.expm1(-alpha * dt)  # 1 - lam = (1 - e^{-alpha dt}) / 2
    return float(gamma), float(lam)


def _amplitudes(alpha: float, beta: float, dt: float) -> tuple[float, float, float, float]:
    """``sqrt`` of ``lam, 1 - lam, gamma, 1 - gamma``, each without cancellation."""
    gamma, lam = _rates(alpha, beta, dt)
    flip = -0.5 * np.expm1(-alpha * dt)
    return float(np.sqrt(lam)), float(np.sqrt(flip)), float(np.sqrt(gamma)), float(np.exp(-0.5 * beta * dt))


def make_ad_pd_channel(p: AdPdParams, dt: float) -> KrausChannel:
    """Simultaneous amplitude and phase damping over a step ``dt``.

    ``gamma = 1 - exp(-beta dt)`` is the decay probability of ``|1>`` and
    ``1 - lam = (1 - exp(-alpha dt)) / 2`` the phase-flip probability.  The
    phase-flip branch carries ``sz`` (the ``-sqrt(1 - gamma)`` entry of the
    third operator); without it the first and third operators would be
    proportional and the channel would not dephase at all.
    """
    keep, flip, decay, stay = _amplitudes(p.alpha, p.beta, dt)
    a0 = np.array([[1, 0], [0, stay]], dtype=complex)
    a1 = np.array([[0, decay], [0, 0]], dtype=complex)
    ops = (
        keep * a0,
        flip * a1,
        flip * (SZ @ a0),
        keep * a1,
    )
    return KrausChannel(ops, dt)


def z_rotation(angle: float) -> np.ndarray:
    """``exp(-i angle sz / 2)``."""
    return np.diag([np.exp(-0.5j * angle), np.exp(0.5j * angle)])


def make_effective_dd_channel(p: EffectiveDdParams, dt: float) -> KrausChannel:
    """Phase errors, x/y bit flips and a residual z-rotation ``omega``."""
    keep, flip, decay, stay = _amplitudes(p.alpha, p.beta, dt)
    u = z_rotation(p.omega * dt)
    ops = (
        keep * stay * u,
        flip * stay * (SZ @ u),
        decay / np.sqrt(2) * (SX @ u),
        decay / np.sqrt(2) * (SY @ u),
    )
    return KrausChannel(ops, dt)


def identity_channel(dt: float = 0.0) -> KrausChannel:
    return KrausChannel((I2,), dt)


def apply_channel(c: KrausChannel, rho: DensityMatrix) -> DensityMatrix:
    if not c.is_cptp():
        raise InvalidChannelError(f"channel violates completeness by {c.completeness_error():.3g}")
    m = rho.matrix
    out = sum(k @ m @ k.conj().T for k in c.operators)
    # strip rounding so the output validates at the same tolerance as the input
    out = 0.5 * (out + out.conj().T)
    return DensityMatrix(out / np.trace(out).real)


def evolve(c: KrausChannel, rho0: DensityMatrix, steps: int) -> list[DensityMatrix]:
    """Trajectory ``[rho0, c(rho0), c(c(rho0)), ...]`` of length ``steps + 1``."""
    if steps < 1:
        raise InvalidParameterError("steps must be >= 1")
    traj = [rho0]
    for _ in range(steps):
        traj.append(apply_channel(c, traj[-1]))
    return traj


def chi_from_kraus(c: KrausChannel) -> ProcessMatrix:
    return ProcessMatrix(chi_array_from_kraus(c.operators))


def compose(*channels: KrausChannel) -> KrausChannel:
    """Channel applying ``channels[0]`` first; Kraus count is capped at 8 by
    re-deriving a minimal Kraus set from the chi matrix."""
    ptm = ptm_from_kraus(channels[0].operators)
    for c in channels[1:]:
        ptm = ptm_from_kraus(c.operators) @ ptm
    return kraus_from_ptm(ptm, dt=sum(c.dt for c in channels))


def kraus_from_chi(chi: np.ndarray, dt: float = 0.0, tol: float = 1e-12) -> KrausChannel:
    """Canonical Kraus set from the eigen-decomposition of a chi matrix."""
    w, v = np.linalg.eigh(0.5 * (chi + np.conj(chi).T))
    ops = [np.sqrt(wi) * np.einsum("n,nab->ab", v[:, i], CHI_BASIS) for i, wi in enumerate(w) if wi > tol]
    return KrausChannel(tuple(ops), dt)


def kraus_from_ptm(ptm: np.ndarray, dt: float = 0.0) -> KrausChannel:
    return kraus_from_chi(chi_array_from_ptm(ptm), dt)


def random_kraus_channel(rng: np.random.Generator, n_ops: int = 4) -> KrausChannel:
    """Random CPTP channel from a Haar-like isometry (Stinespring dilation)."""
    g = rng.normal(size=(2 * n_ops, 2)) + 1j * rng.normal(size=(2 * n_ops, 2))
    q, _ = np.linalg.qr(g)
    return KrausChannel(tuple(q.reshape(n_ops, 2, 2)))
