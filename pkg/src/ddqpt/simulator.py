"""Monte-Carlo evolution of a qubit under DD pulses, correlated dephasing and
amplitude damping.

Every realization draws its own Ornstein-Uhlenbeck detuning path on a grid
of ``dt`` and is propagated as a Pauli transfer matrix (PTM).  Averaging the
PTMs over realizations gives the ensemble channel, from which states for any
initial condition and chi matrices follow by linearity.

Within a free-evolution segment each ``dt`` step is a z-rotation by
``delta(t) dt`` followed by the amplitude/phase damping step.  The damping
family is a semigroup and commutes with z-rotations, so the whole segment is
applied at once as ``AD+PD(T) . Rz(sum delta dt)``; this is exact, not an
approximation.
"""

from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import brentq, curve_fit
from scipy.signal import lfilter

from .channels import AdPdParams, make_ad_pd_channel
from .errors import InvalidParameterError, TimingError
from .qstate import PLUS, DensityMatrix
from .sequences import PERFECT, Pulse, PulseErrorModel, PulseSequence, build_sequence, cycle_unitary, pulse_unitary
from .superop import bloch4, density4, ptm_from_unitary

DEFAULT_DT = 1e-9
BLOCK = 256  # realizations per work unit; fixed so results never depend on worker count


@dataclass(frozen=True)
class NoiseModel:
    """Classical OU detuning (``ou_sigma`` rad/s, ``ou_tau_c`` s) plus Markovian
    amplitude damping (``t1`` s) and optional Markovian dephasing (Hz)."""

    ou_sigma: float = 0.0
    ou_tau_c: float = 1e-5
    t1: float = math.inf
    extra_markovian_dephasing: float = 0.0

    def __post_init__(self):
        vals = (self.ou_sigma, self.ou_tau_c, self.t1, self.extra_markovian_dephasing)
        if any(not v >= 0 for v in vals):
            raise InvalidParameterError("noise parameters must be non-negative")
        if self.ou_sigma > 0 and not self.ou_tau_c > 0:
            raise InvalidParameterError("ou_tau_c must be positive when ou_sigma > 0")
        if self.t1 == 0:
            raise InvalidParameterError("t1 must be positive")

    @property
    def beta(self) -> float:
        return 0.0 if math.isinf(self.t1) else 1.0 / self.t1

    def damping(self) -> AdPdParams:
        return AdPdParams(self.extra_markovian_dephasing, self.beta)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True, eq=False)
class ProcessTrajectory:
    """Ensemble-averaged PTMs at each readout time."""

    times: np.ndarray
    ptms: np.ndarray
    realizations: int
    # PTM of the ideal (error-free, noise-free) pulse product at each readout
    ideal: np.ndarray

    def states(self, rho0: DensityMatrix) -> list[DensityMatrix]:
        v = self.ptms @ bloch4(rho0.matrix)
        return [_to_density(x) for x in v]

    def toggling_frame(self) -> np.ndarray:
        """PTMs with the ideal pulse product undone, i.e. the error process."""
        return np.einsum("kji,kjl->kil", self.ideal, self.ptms)


@dataclass(frozen=True, eq=False)
class ExperimentResult:
    times: np.ndarray
    states: list
    realizations: int
    metadata: dict = field(default_factory=dict)

    def bloch(self) -> np.ndarray:
        return np.array([bloch4(s.matrix)[1:] for s in self.states])

    def to_csv(self, target: DensityMatrix | None = None) -> str:
        target = target if target is not None else self.states[0]
        surv = survival_probability(self, target)
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["time_us", "bloch_x", "bloch_y", "bloch_z", "survival_prob"])
        for t, b, s in zip(self.times, self.bloch(), surv):
            w.writerow([repr(float(t * 1e6)), *(repr(float(x)) for x in b), repr(float(s))])
        return buf.getvalue()

    def export(self, csv_path, target: DensityMatrix | None = None) -> None:
        """Write the CSV plus a ``.json`` metadata sidecar next to it."""
        with open(csv_path, "w", newline="") as fh:
            fh.write(self.to_csv(target))
        side = str(csv_path).rsplit(".", 1)[0] + ".json"
        with open(side, "w") as fh:
            json.dump(self.metadata, fh, indent=2, sort_keys=True)


def _to_density(v: np.ndarray) -> DensityMatrix:
    m = density4(v)
    return DensityMatrix(0.5 * (m + m.conj().T))


def _steps(duration: float, dt: float, what: str = "delay") -> int:
    n = duration / dt
    k = int(round(n))
    if abs(n - k) > 1e-6 * max(1.0, n):
        raise TimingError(f"{what} {duration:.6g} s is not a multiple of dt = {dt:.6g} s")
    return k


def _seed_sequence(seed, index: int) -> np.random.SeedSequence:
    if isinstance(seed, np.random.SeedSequence):
        return np.random.SeedSequence(seed.entropy, spawn_key=seed.spawn_key + (index,))
    return np.random.SeedSequence(seed, spawn_key=(index,))


def _ou_path(rng: np.random.Generator, sigma: float, tau_c: float, n: int, dt: float) -> np.ndarray:
    if sigma == 0 or n == 0:
        return np.zeros(n)
    xi = rng.standard_normal(n)
    a = math.exp(-dt / tau_c)
    b = sigma * math.sqrt(-math.expm1(-2 * dt / tau_c))
    d0 = sigma * xi[0]
    if n == 1:
        return np.array([d0])
    rest, _ = lfilter([1.0], [1.0, -a], b * xi[1:], zi=[a * d0])
    return np.concatenate(([d0], rest))


def sample_ou_trajectory(noise: NoiseModel, duration: float, dt: float, seed=None) -> np.ndarray:
    """Stationary OU detuning samples ``delta(k dt)`` in rad/s.

    ``delta(t + dt) = delta(t) e^{-dt/tau_c} + sigma sqrt(1 - e^{-2 dt/tau_c}) N(0, 1)``
    with ``delta(0) ~ N(0, sigma^2)``.
    """
    if not dt > 0 or not duration >= dt:
        raise InvalidParameterError("need dt > 0 and duration >= dt")
    n = int(round(duration / dt))
    rng = np.random.default_rng(seed)
    return _ou_path(rng, noise.ou_sigma, noise.ou_tau_c, n, dt)


# -- program representation -------------------------------------------------
# A program is a list of events applied to a PTM that starts at identity:
#   ("w", s0, s1)  free evolution over grid steps [s0, s1)
#   ("p", ptm)     instantaneous pulse
#   ("r", index)   readout into accumulator slot ``index``


@dataclass
class _Program:
    events: list
    n_steps: int


def _program_for_cycles(seq: PulseSequence, pulse_ptms, cycles: int, readout_every: int,
                        dt: float, slot0: int = 0) -> tuple[_Program, list[int]]:
    delay_steps = [_steps(d, dt) for d in seq.delays]
    events = [("r", slot0)]
    readout_cycles = [0]
    s = 0
    pending = 0  # merge adjacent delays across cycle boundaries
    slot = slot0 + 1

    def flush():
        nonlocal s, pending
        if pending:
            events.append(("w", s, s + pending))
            s += pending
            pending = 0

    for c in range(1, cycles + 1):
        for i, d in enumerate(delay_steps):
            pending += d
            if i < len(pulse_ptms):
                flush()
                events.append(("p", pulse_ptms[i]))
        if c % readout_every == 0 or c == cycles:
            flush()
            events.append(("r", slot))
            readout_cycles.append(c)
            slot += 1
    flush()
    return _Program(events, s), readout_cycles


def _program_single(seq: PulseSequence, pulse_ptms, dt: float, slot: int, prep=None) -> _Program:
    events = []
    if prep is not None:
        events.append(("p", prep))
    s = 0
    for i, d in enumerate(seq.delays):
        k = _steps(d, dt)
        if k:
            events.append(("w", s, s + k))
            s += k
        if i < len(pulse_ptms):
            events.append(("p", pulse_ptms[i]))
    events.append(("r", slot))
    return _Program(events, s)


def _damping_ptm(noise: NoiseModel, duration: float) -> np.ndarray:
    if duration <= 0:
        return np.eye(4)
    return make_ad_pd_channel(noise.damping(), duration).ptm()


def _run_block(args) -> np.ndarray:
    programs, noise, dt, seed, indices, n_slots = args
    n_max = max(p.n_steps for p in programs)
    # gather the cumulative phase at every wait boundary used by any program
    bounds = sorted({b for p in programs for e in p.events if e[0] == "w" for b in e[1:]} | {0})
    pos = {b: i for i, b in enumerate(bounds)}
    bidx = np.array(bounds, dtype=np.int64)
    phase_at = np.empty((len(indices), len(bounds)))
    for r, idx in enumerate(indices):
        rng = np.random.default_rng(_seed_sequence(seed, idx))
        delta = _ou_path(rng, noise.ou_sigma, noise.ou_tau_c, n_max, dt)
        cum = np.concatenate(([0.0], np.cumsum(delta) * dt))
        phase_at[r] = cum[bidx]

    damp_cache: dict[int, np.ndarray] = {}
    acc = np.zeros((n_slots, 4, 4))
    nb = len(indices)
    for prog in programs:
        m = np.broadcast_to(np.eye(4), (nb, 4, 4)).copy()
        for ev in prog.events:
            kind = ev[0]
            if kind == "w":
                s0, s1 = ev[1], ev[2]
                phi = phase_at[:, pos[s1]] - phase_at[:, pos[s0]]
                c, sn = np.cos(phi)[:, None], np.sin(phi)[:, None]
                x, y = m[:, 1, :].copy(), m[:, 2, :]
                m[:, 1, :] = c * x - sn * y
                m[:, 2, :] = sn * x + c * y
                n = s1 - s0
                d = damp_cache.get(n)
                if d is None:
                    d = damp_cache[n] = _damping_ptm(noise, n * dt)
                m = np.matmul(d, m)
            elif kind == "p":
                m = np.matmul(ev[1], m)
            else:
                acc[ev[1]] += m.sum(axis=0)
    return acc


def _simulate(programs: list[_Program], n_slots: int, noise: NoiseModel, realizations: int,
              dt: float, seed, workers: int) -> np.ndarray:
    if realizations < 1:
        raise InvalidParameterError("realizations must be >= 1")
    if seed is None:
        seed = np.random.SeedSequence().entropy
    blocks = [list(range(i, min(i + BLOCK, realizations))) for i in range(0, realizations, BLOCK)]
    jobs = [(programs, noise, dt, seed, b, n_slots) for b in blocks]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            parts = list(ex.map(_run_block, jobs))
    else:
        parts = [_run_block(j) for j in jobs]
    total = np.zeros((n_slots, 4, 4))
    for p in parts:  # fixed reduction order
        total += p
    return total / realizations


def _pulse_ptms(seq: PulseSequence, err: PulseErrorModel) -> list[np.ndarray]:
    return [ptm_from_unitary(pulse_unitary(p, err)) for p in seq.pulses]


def run_process_experiment(
    seq: PulseSequence,
    err: PulseErrorModel = PERFECT,
    noise: NoiseModel = NoiseModel(),
    cycles: int = 1,
    readout_every: int = 1,
    realizations: int = 1,
    seed=None,
    dt: float = DEFAULT_DT,
    workers: int = 1,
) -> ProcessTrajectory:
    """Average process after every ``readout_every`` complete cycles (and at t = 0)."""
    if cycles < 1 or readout_every < 1:
        raise InvalidParameterError("cycles and readout_every must be >= 1")
    prog, rcycles = _program_for_cycles(seq, _pulse_ptms(seq, err), cycles, readout_every, dt)
    ptms = _simulate([prog], len(rcycles), noise, realizations, dt, seed, workers)
    step = _steps(seq.cycle_time, dt, "cycle time") * dt
    u = ptm_from_unitary(cycle_unitary(seq))
    ideal = np.stack([np.linalg.matrix_power(u, c) for c in rcycles])
    return ProcessTrajectory(np.array(rcycles) * step, ptms, realizations, ideal)


def run_sequence_series(
    make_sequence: Callable[[float], PulseSequence],
    times: Sequence[float],
    err: PulseErrorModel = PERFECT,
    noise: NoiseModel = NoiseModel(),
    realizations: int = 1,
    seed=None,
    dt: float = DEFAULT_DT,
    workers: int = 1,
    prep: Pulse | None = None,
) -> ProcessTrajectory:
    """One single-cycle experiment per entry of ``times``.

    Used for Free, Hahn, inversion recovery and similar protocols where every
    time point is a separate run.  All time points of a realization share the
    same noise path.  ``prep`` is an optional pulse applied before the cycle.
    """
    times = np.asarray(times, dtype=float)
    if np.any(np.diff(times) <= 0):
        raise InvalidParameterError("times must be strictly increasing")
    prep_ptm = None if prep is None else ptm_from_unitary(pulse_unitary(prep, err))
    programs, ideal = [], []
    for k, t in enumerate(times):
        if t == 0:
            programs.append(_Program(([("p", prep_ptm)] if prep_ptm is not None else []) + [("r", k)], 0))
            ideal.append(np.eye(4) if prep is None else ptm_from_unitary(pulse_unitary(prep)))
            continue
        seq = make_sequence(float(t))
        programs.append(_program_single(seq, _pulse_ptms(seq, err), dt, k, prep_ptm))
        u = cycle_unitary(seq)
        if prep is not None:
            u = u @ pulse_unitary(prep)
        ideal.append(ptm_from_unitary(u))
    ptms = _simulate(programs, len(times), noise, realizations, dt, seed, workers)
    return ProcessTrajectory(times, ptms, realizations, np.stack(ideal))


def run_dd_experiment(
    seq: PulseSequence,
    err: PulseErrorModel,
    noise: NoiseModel,
    cycles: int,
    readout_every: int,
    realizations: int,
    rho0: DensityMatrix,
    seed=None,
    dt: float = DEFAULT_DT,
    workers: int = 1,
) -> ExperimentResult:
    """Ensemble-averaged states after every ``readout_every`` complete cycles."""
    traj = run_process_experiment(seq, err, noise, cycles, readout_every, realizations, seed, dt, workers)
    meta = {
        "sequence": seq.to_dict(),
        "pulse_error": asdict(err),
        "noise": noise.to_dict(),
        "cycles": cycles,
        "readout_every": readout_every,
        "realizations": realizations,
        "seed": seed,
        "dt": dt,
    }
    return ExperimentResult(traj.times, traj.states(rho0), realizations, meta)


def survival_probability(result: ExperimentResult, target: DensityMatrix) -> np.ndarray:
    """``Tr(rho(t) target)`` for a pure target state."""
    if abs(target.purity() - 1) > 1e-9:
        raise InvalidParameterError("survival probability needs a pure target state")
    return np.array([np.trace(s.matrix @ target.matrix).real for s in result.states])


# -- relaxation calibration experiments --------------------------------------


def inversion_recovery(noise: NoiseModel, times, realizations: int = 1, seed=None,
                       dt: float = DEFAULT_DT, err: PulseErrorModel = PERFECT) -> np.ndarray:
    """``<sz>`` after a pi pulse from ``|0>`` and a wait ``t``."""
    traj = run_sequence_series(lambda t: build_sequence("Free", total_time=t), times, err, noise,
                               realizations, seed, dt, prep=Pulse(np.pi, 0.0))
    v = traj.ptms @ np.array([1.0, 0, 0, 1.0])
    return v[:, 3]


def hahn_echo_decay(noise: NoiseModel, times, realizations: int = 1, seed=None,
                    dt: float = DEFAULT_DT, err: PulseErrorModel = PERFECT) -> np.ndarray:
    """Coherence magnitude ``|<sx> + i<sy>|`` of ``|+>`` after a Hahn echo of total time ``t``."""
    traj = hahn_process_series(noise, times, realizations, seed, dt, err)
    v = traj.ptms @ bloch4(PLUS.matrix)
    return np.hypot(v[:, 1], v[:, 2])


def hahn_process_series(noise: NoiseModel, times, realizations: int = 1, seed=None,
                        dt: float = DEFAULT_DT, err: PulseErrorModel = PERFECT,
                        workers: int = 1) -> ProcessTrajectory:
    return run_sequence_series(lambda t: build_sequence("Hahn", total_time=t), times, err, noise,
                               realizations, seed, dt, workers)


def free_process_series(noise: NoiseModel, times, realizations: int = 1, seed=None,
                        dt: float = DEFAULT_DT, workers: int = 1) -> ProcessTrajectory:
    return run_sequence_series(lambda t: build_sequence("Free", total_time=t), times, PERFECT, noise,
                               realizations, seed, dt, workers)


def fit_t1(times, sz) -> float:
    """T1 from ``<sz>(t) = a - b exp(-t / T1)``."""
    times = np.asarray(times, float)
    p0 = (1.0, 2.0, max(times) / 3)
    (a, b, t1), _ = curve_fit(lambda t, a, b, T: a - b * np.exp(-t / T), times, sz, p0=p0, maxfev=20000)
    return float(t1)


def fit_t2(times, coherence) -> float:
    """T2 from ``C(t) = a exp(-t / T2)``."""
    times = np.asarray(times, float)
    p0 = (1.0, max(times) / 3)
    (a, t2), _ = curve_fit(lambda t, a, T: a * np.exp(-t / T), times, coherence, p0=p0, maxfev=20000)
    return float(t2)


def ou_echo_variance(sigma: float, tau_c: float, t) -> np.ndarray:
    """Variance of the Hahn-echo phase accumulated from OU noise over total time ``t``."""
    t = np.asarray(t, float)
    x = t / tau_c
    return 2 * sigma**2 * tau_c**2 * (x - 3 + 4 * np.exp(-x / 2) - np.exp(-x))


def ou_free_variance(sigma: float, tau_c: float, t) -> np.ndarray:
    t = np.asarray(t, float)
    x = t / tau_c
    return 2 * sigma**2 * tau_c**2 * (x - 1 + np.exp(-x))


def expected_echo_coherence(noise: NoiseModel, t) -> np.ndarray:
    t = np.asarray(t, float)
    rate = noise.beta / 2 + noise.extra_markovian_dephasing
    ou = ou_echo_variance(noise.ou_sigma, noise.ou_tau_c, t) if noise.ou_sigma > 0 else 0.0
    return np.exp(-rate * t - 0.5 * ou)


def default_calibration_times(t2: float) -> np.ndarray:
    return np.linspace(0, 4 * t2, 41)


def calibrate_noise(t1: float = 25e-6, t2: float = 35e-6, ou_tau_c: float = 10e-6,
                    extra_markovian_dephasing: float = 0.0, times=None) -> NoiseModel:
    """Choose the OU amplitude so that a Hahn-echo fit returns ``t2``.

    ``t1`` fixes amplitude damping directly.  The echo decay is evaluated in
    closed form (Gaussian phase average) and fitted with :func:`fit_t2` over
    ``times``, the same fit applied to simulated data.
    """
    times = default_calibration_times(t2) if times is None else np.asarray(times, float)

    def mismatch(sigma):
        nm = NoiseModel(sigma, ou_tau_c, t1, extra_markovian_dephasing)
        return fit_t2(times, expected_echo_coherence(nm, times)) - t2

    base = mismatch(0.0)
    if base < 0:
        raise InvalidParameterError(
            f"T2 = {t2:.3g} s is not reachable: relaxation alone already gives {t2 + base:.3g} s")
    if base == 0:
        return NoiseModel(0.0, ou_tau_c, t1, extra_markovian_dephasing)
    hi = 1.0 / ou_tau_c
    while mismatch(hi) > 0:
        hi *= 2
    sigma = brentq(mismatch, 0.0, hi, xtol=1e-9 * hi, rtol=1e-12)
    return NoiseModel(float(sigma), ou_tau_c, t1, extra_markovian_dephasing)
