"""simulate -> tomography -> fidelity -> fit, for one sequence at a time."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidParameterError
from .fit import MODEL_DT, FidelitySeries, FitResult, fit_ad_pd, fit_effective_dd
from .qstate import DensityMatrix
from .sequences import PERFECT, PulseErrorModel, PulseSequence, SequenceKind, build_sequence, parse_kind
from .simulator import DEFAULT_DT, NoiseModel, ProcessTrajectory, run_process_experiment, run_sequence_series
from .superop import bloch4, density4
from .tomography import ProcessMatrix, qpt, process_fidelity, target_identity_chi


@dataclass(frozen=True, eq=False)
class SequenceRun:
    label: str
    kind: SequenceKind
    trajectory: ProcessTrajectory
    chis: list
    fidelity: FidelitySeries
    sequence: PulseSequence | None = None

    def chi_at(self, t: float) -> ProcessMatrix:
        i = int(np.argmin(np.abs(self.trajectory.times - t)))
        return self.chis[i]


def process_from_ptm(ptm: np.ndarray):
    def process(rho: DensityMatrix) -> DensityMatrix:
        m = density4(ptm @ bloch4(rho.matrix))
        return DensityMatrix(0.5 * (m + m.conj().T))

    return process


def tomograph(traj: ProcessTrajectory) -> list[ProcessMatrix]:
    """chi matrix of the error process (ideal pulse product removed) at each readout."""
    return [qpt(process_from_ptm(p)) for p in traj.toggling_frame()]


def _readout_every(cycle: float, interval: float, grid: float) -> int:
    k = max(1, int(round(interval / cycle)))
    for kk in range(k, k + 10_000):
        x = kk * cycle / grid
        if abs(x - round(x)) < 1e-6:
            return kk
    raise InvalidParameterError(f"no multiple of the {cycle:.4g} s cycle lands on the {grid:.3g} s grid")


def simulate_sequence(
    kind,
    tau: float | None,
    duration: float,
    readout_interval: float,
    err: PulseErrorModel = PERFECT,
    noise: NoiseModel = NoiseModel(),
    realizations: int = 1,
    seed=None,
    dt: float = DEFAULT_DT,
    workers: int = 1,
    time_grid: float = MODEL_DT,
    **seq_kw,
) -> SequenceRun:
    """Simulate ``kind`` for ``duration`` and score the process at each readout.

    DD cycles are read out after whole cycles only, at the smallest cycle
    multiple that is not shorter than ``readout_interval`` and lies on
    ``time_grid`` (the fitting step).  Free evolution and Hahn echo are run
    as independent experiments on the grid ``0, readout_interval, ...``.
    """
    k, _ = parse_kind(kind)
    if k in (SequenceKind.FREE, SequenceKind.HAHN):
        n = int(math.floor(duration / readout_interval + 1e-9))
        times = np.arange(n + 1) * readout_interval
        traj = run_sequence_series(
            lambda t: build_sequence(k, total_time=t), times, err, noise, realizations, seed, dt, workers)
        seq = None
    else:
        seq = build_sequence(kind, tau, **seq_kw)
        every = _readout_every(seq.cycle_time, readout_interval, time_grid)
        cycles = max(every, int(math.ceil(duration / seq.cycle_time / every - 1e-9)) * every)
        traj = run_process_experiment(seq, err, noise, cycles, every, realizations, seed, dt, workers)
    chis = tomograph(traj)
    target = target_identity_chi()
    fid = np.array([process_fidelity(c, target) for c in chis])
    label = seq.label if seq is not None else k.value
    return SequenceRun(label, k, traj, chis, FidelitySeries(traj.times, fid, label), seq)


def fit_run(run: SequenceRun, model: str = "auto") -> FitResult:
    """AD+PD fit for Free/Hahn, effective DD fit for everything else (``model="auto"``)."""
    if model == "auto":
        model = "AdPd" if run.kind in (SequenceKind.FREE, SequenceKind.HAHN) else "EffectiveDd"
    if model == "AdPd":
        return fit_ad_pd(run.fidelity)
    if model == "EffectiveDd":
        return fit_effective_dd(run.fidelity)
    raise InvalidParameterError(f"unknown fit model {model!r}")
