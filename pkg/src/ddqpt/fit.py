"""Least-squares estimation of channel rates from process-fidelity curves.

Two models are supported: ``AdPd`` (amplitude + phase damping, parameters
alpha and beta) and ``EffectiveDd`` (phase errors, x/y bit flips and a
residual z-rotation, parameters alpha, beta and omega).  Model curves are
produced exactly as the data would be: the step channel is applied
repeatedly, the accumulated process is converted to a chi matrix and scored
against the identity target.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy import stats
from scipy.optimize import minimize

from .channels import AdPdParams, EffectiveDdParams, make_ad_pd_channel, make_effective_dd_channel
from .errors import InvalidParameterError, TimingError
from .superop import chi_array_from_ptm
from .tomography import fidelity_to_identity

MODEL_DT = 100e-9
OMEGA_STARTS = (0.0, 10.0, 30.0, 60.0, 100.0)  # rad/ms
MAX_ITER = 10_000
REL_TOL = 1e-10
# fidelity accuracy of model curves stepped at MODEL_DT
MODEL_RESOLUTION = 1e-4

# internal scale: rates in kHz, omega in rad/ms
_KHZ = 1e3
_RAD_PER_MS = 1e3


class Model(str, Enum):
    AD_PD = "AdPd"
    EFFECTIVE_DD = "EffectiveDd"


@dataclass(frozen=True, eq=False)
class FidelitySeries:
    times: np.ndarray
    fidelities: np.ndarray
    label: str = ""

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        f = np.asarray(self.fidelities, dtype=float)
        if t.shape != f.shape or t.ndim != 1:
            raise InvalidParameterError("times and fidelities must be 1-D arrays of equal length")
        if np.any(np.diff(t) <= 0):
            raise InvalidParameterError("times must be strictly increasing")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "fidelities", f)

    def __len__(self) -> int:
        return len(self.times)


@dataclass(frozen=True)
class FitResult:
    model: str
    alpha: float
    beta: float
    omega: float
    residual_rms: float
    converged: bool
    iterations: int
    # likelihood-ratio check of omega against zero (EffectiveDd only)
    omega_f_statistic: float = 0.0
    omega_consistent_with_zero: bool = True

    def to_dict(self) -> dict:
        return {
            "model": self.model,
            "alpha_khz": self.alpha / _KHZ,
            "beta_khz": self.beta / _KHZ,
            "omega_rad_per_ms": self.omega / _RAD_PER_MS,
            "residual_rms": self.residual_rms,
            "converged": self.converged,
            "iterations": self.iterations,
            "omega_f_statistic": self.omega_f_statistic,
            "omega_consistent_with_zero": self.omega_consistent_with_zero,
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)


def _step_counts(times, dt: float) -> np.ndarray:
    t = np.asarray(times, dtype=float)
    n = np.rint(t / dt)
    if np.any(np.abs(t / dt - n) > 1e-6 * np.maximum(1.0, n)):
        raise TimingError(f"model times must be multiples of dt = {dt:.3g} s")
    return n.astype(np.int64)


def _powers(step: np.ndarray, counts: np.ndarray) -> np.ndarray:
    """``step ** n`` for every ``n`` in ``counts``.

    Phase-covariant steps (rotation about z plus axial decay, which covers
    both models here) are raised in closed form; anything else goes through
    repeated multiplication.
    """
    mask = np.ones((4, 4), bool)
    mask[[0, 1, 1, 2, 2, 3, 3], [0, 1, 2, 1, 2, 0, 3]] = False
    covariant = (
        np.allclose(step[mask], 0, atol=1e-15)
        and np.isclose(step[0, 0], 1, rtol=0, atol=1e-15)
        and np.isclose(step[1, 1], step[2, 2], rtol=0, atol=1e-15)
        and np.isclose(step[1, 2], -step[2, 1], rtol=0, atol=1e-15)
    )
    n = np.asarray(counts)
    if not covariant:
        out = np.empty((len(n), 4, 4))
        acc, have = np.eye(4), 0
        for i in np.argsort(n, kind="stable"):
            acc = np.linalg.matrix_power(step, int(n[i] - have)) @ acc
            have = n[i]
            out[i] = acc
        return out
    xy = (step[1, 1] + 1j * step[2, 1]) ** n
    d, t = step[3, 3], step[3, 0]
    dn = d ** n
    # t (1 + d + ... + d^(n-1))
    shift = t * n if d == 1 else t * (1 - dn) / (1 - d)
    out = np.zeros((len(n), 4, 4))
    out[:, 0, 0] = 1
    out[:, 1, 1] = out[:, 2, 2] = xy.real
    out[:, 2, 1] = xy.imag
    out[:, 1, 2] = -xy.imag
    out[:, 3, 3] = dn
    out[:, 3, 0] = shift
    return out


def _curve(model: Model, params, counts: np.ndarray, dt: float) -> np.ndarray:
    if model is Model.AD_PD:
        step = make_ad_pd_channel(params, dt).ptm()
    else:
        step = make_effective_dd_channel(params, dt).ptm()
    return fidelity_to_identity(chi_array_from_ptm(_powers(step, counts)))


def model_fidelity_curve(model, params, times, dt: float = MODEL_DT) -> FidelitySeries:
    """Fidelity-vs-time curve of a channel model evolved in steps of ``dt``."""
    model = Model(model)
    want = AdPdParams if model is Model.AD_PD else EffectiveDdParams
    if not isinstance(params, want):
        raise InvalidParameterError(f"{model.value} needs {want.__name__}")
    counts = _step_counts(times, dt)
    return FidelitySeries(np.asarray(times, float), _curve(model, params, counts, dt))


def _params(model: Model, x) -> AdPdParams | EffectiveDdParams:
    a = float(np.exp(np.clip(x[0], -60, 60))) * _KHZ
    b = float(np.exp(np.clip(x[1], -60, 60))) * _KHZ
    if model is Model.AD_PD:
        return AdPdParams(a, b)
    w = float(x[2]) * _RAD_PER_MS if len(x) > 2 else 0.0
    return EffectiveDdParams(a, b, w)


def _ssr_fn(model: Model, data: FidelitySeries, dt: float):
    counts = _step_counts(data.times, dt)
    y = data.fidelities

    def ssr(x):
        r = _curve(model, _params(model, x), counts, dt) - y
        return float(r @ r)

    return ssr


def _floor(data: FidelitySeries) -> float:
    return 1e-28 * len(data)


def _grid_start(ssr, omega: float | None):
    grid = np.log(np.logspace(-1, 3, 13))  # 0.1 kHz .. 1 MHz
    best, best_x = np.inf, None
    for la in grid:
        for lb in grid:
            x = [la, lb] if omega is None else [la, lb, omega]
            v = ssr(x)
            if v < best:
                best, best_x = v, x
    return np.array(best_x, dtype=float)


def _simplex(ssr, x0, floor: float = 0.0) -> tuple[np.ndarray, float, int, bool]:
    """Nelder-Mead, restarted from its optimum until the residual settles.

    ``floor`` is the residual below which the data are reproduced to
    rounding error and further work is pointless.
    """
    x, f, nit, ok = np.asarray(x0, float), ssr(x0), 0, False
    for _ in range(5):
        if f <= floor:
            break
        res = minimize(
            ssr, x, method="Nelder-Mead",
            options={"maxiter": MAX_ITER - nit, "xatol": 1e-10, "fatol": max(REL_TOL * f, floor),
                     "adaptive": False},
        )
        nit += int(res.nit)
        settled = abs(f - res.fun) <= REL_TOL * max(f, 1e-300)
        x, f = res.x, float(res.fun)
        ok = bool(res.success)
        if settled or f <= floor or nit >= MAX_ITER:
            break
    return x, f, nit, (ok or f <= floor) and nit < MAX_ITER


def fit_ad_pd(data: FidelitySeries, dt: float = MODEL_DT) -> FitResult:
    """Fit ``(alpha, beta)`` of the amplitude/phase damping model."""
    if len(data) < 4:
        raise InvalidParameterError("fit_ad_pd needs at least 4 points")
    ssr = _ssr_fn(Model.AD_PD, data, dt)
    x, f, nit, ok = _simplex(ssr, _grid_start(ssr, None), _floor(data))
    p = _params(Model.AD_PD, x)
    return FitResult(Model.AD_PD.value, p.alpha, p.beta, 0.0, float(np.sqrt(f / len(data))), ok, nit)


def fit_effective_dd(data: FidelitySeries, dt: float = MODEL_DT, omega_starts=OMEGA_STARTS,
                     confidence: float = 0.95, resolution: float = MODEL_RESOLUTION) -> FitResult:
    """Fit ``(alpha, beta, omega)`` of the effective DD channel.

    The residual is oscillatory in omega, so the simplex is restarted from
    each omega in ``omega_starts`` (rad/ms) and the lowest residual wins
    (ties go to the smallest ``|omega|``).  The data determine only
    ``|omega|``, which is what is returned.

    ``omega_consistent_with_zero`` comes from an F-test of the full fit
    against the nested fit with ``omega = 0`` at the given confidence.  The
    residual scale in the test is never taken below ``resolution``, the
    fidelity accuracy of the stepped model curves.
    """
    n = len(data)
    if n < 6:
        raise InvalidParameterError("fit_effective_dd needs at least 6 points")
    ssr = _ssr_fn(Model.EFFECTIVE_DD, data, dt)
    best = None
    total_it = 0
    for w0 in omega_starts:
        x0 = _grid_start(ssr, float(w0))
        x, f, nit, ok = _simplex(ssr, x0, _floor(data))
        total_it += nit
        x[2] = abs(x[2])
        key = (f, x[2])
        if best is None or key < best[0]:
            best = (key, x, ok)
    (f1, _), x, ok = best
    # nested model with omega pinned at zero
    ssr0 = _ssr_fn(Model.EFFECTIVE_DD, data, dt)
    x0, f0, nit0, _ = _simplex(lambda z: ssr0([z[0], z[1], 0.0]), x[:2], _floor(data))
    total_it += nit0
    f0 = min(f0, ssr0([x[0], x[1], 0.0]))
    dof = n - 3
    scale = max(f1 / dof, resolution**2, 1e2 * _floor(data))
    fstat = max(f0 - f1, 0.0) / scale
    consistent = fstat <= stats.f.ppf(confidence, 1, dof)
    p = _params(Model.EFFECTIVE_DD, x)
    return FitResult(Model.EFFECTIVE_DD.value, p.alpha, p.beta, p.omega, float(np.sqrt(f1 / n)),
                     ok, total_it, float(fstat), bool(consistent))
