"""Acceptance criteria, each at its stated tolerance.

Every test records one PASS/FAIL line (printed live and again in the
session summary) before asserting.
"""

import time

import numpy as np
import pytest

from ddqpt.channels import (
    AdPdParams,
    EffectiveDdParams,
    apply_channel,
    chi_from_kraus,
    evolve,
    make_ad_pd_channel,
    make_effective_dd_channel,
    random_kraus_channel,
)
from ddqpt.fit import MODEL_DT, fit_ad_pd, fit_effective_dd, model_fidelity_curve
from ddqpt.pipeline import fit_run, simulate_sequence, tomograph
from ddqpt.qstate import EXCITED, GROUND, MIXED, trace_distance
from ddqpt.sequences import PERFECT, PulseErrorModel, build_sequence, ur_phases
from ddqpt.simulator import (
    NoiseModel,
    calibrate_noise,
    default_calibration_times,
    fit_t1,
    fit_t2,
    free_process_series,
    hahn_echo_decay,
    hahn_process_series,
    inversion_recovery,
    run_dd_experiment,
    survival_probability,
)
from ddqpt.tomography import ProcessMatrix, process_fidelity, qpt, target_identity_chi

from conftest import ACCEPTANCE_LINES, random_states

KHZ = 1e3
RAD_PER_MS = 1e3
PROJECTION_CHI = 0.25 * np.array([[1, 0, 0, 1], [0, 1, 1, 0], [0, 1, 1, 0], [1, 0, 0, 1]])


def report(criterion: str, ok: bool, detail: str) -> None:
    line = f"{'PASS' if ok else 'FAIL'} criterion {criterion}: {detail}"
    print(line)
    ACCEPTANCE_LINES.append(line)
    assert ok, line


@pytest.fixture(scope="module")
def calibrated():
    return calibrate_noise(t1=25e-6, t2=35e-6)


def test_criterion_1_cptp():
    rng = np.random.default_rng(1)
    start = time.perf_counter()
    worst = 0.0
    for _ in range(1000):
        a, b = 10 ** rng.uniform(0, 7, 2)
        w = rng.uniform(-1e8, 1e8)
        dt = 10 ** rng.uniform(-10, -4)
        worst = max(worst,
                    make_ad_pd_channel(AdPdParams(a, b), dt).completeness_error(),
                    make_effective_dd_channel(EffectiveDdParams(a, b, w), dt).completeness_error())
    elapsed = time.perf_counter() - start
    report("1", worst < 1e-10 and elapsed < 1.0, f"max completeness error {worst:.2e} (< 1e-10), {elapsed:.2f} s (< 1 s)")


def test_criterion_2_fixed_points():
    rng = np.random.default_rng(2)
    ad = make_ad_pd_channel(AdPdParams(20.9 * KHZ, 23 * KHZ), 10e-6)
    dd = make_effective_dd_channel(EffectiveDdParams(2 * KHZ, 27 * KHZ, 33 * RAD_PER_MS), 10e-6)
    d_ad = max(trace_distance(evolve(ad, r, 200)[-1], GROUND) for r in random_states(rng, 20))
    d_dd = max(trace_distance(evolve(dd, r, 200)[-1], MIXED) for r in random_states(rng, 20))
    report("2", d_ad < 1e-6 and d_dd < 1e-6,
           f"AD+PD -> |0><0| distance {d_ad:.1e}, effective DD -> I/2 distance {d_dd:.1e} (< 1e-6)")


def test_criterion_3_tomography_oracle():
    rng = np.random.default_rng(3)
    start = time.perf_counter()
    worst = 0.0
    for _ in range(200):
        c = random_kraus_channel(rng, int(rng.integers(1, 5)))
        chi = qpt(lambda rho: apply_channel(c, rho))
        worst = max(worst, float(np.max(np.abs(chi.chi - chi_from_kraus(c).chi))))
    elapsed = time.perf_counter() - start
    report("3", worst < 1e-8 and elapsed < 10, f"max |qpt - chi_from_kraus| {worst:.1e} (< 1e-8), {elapsed:.2f} s (< 10 s)")


def test_criterion_4_fidelity_plateaus(calibrated):
    target = target_identity_chi()
    f_dep = process_fidelity(ProcessMatrix(0.25 * np.eye(4)), target)
    f_proj = process_fidelity(ProcessMatrix(PROJECTION_CHI), target)
    exact = abs(f_dep - 0.5) < 1e-15 and abs(f_proj - 1 / (2 * np.sqrt(2))) < 1e-15

    t_end = 400e-6
    hahn = hahn_process_series(calibrated, [0.0, t_end], realizations=200, seed=40)
    f_hahn = process_fidelity(tomograph(hahn)[-1], target)
    err = PulseErrorModel(0.05)
    f_dd = {}
    for kind in ("XY4", "XY16"):
        run = simulate_sequence(kind, 80e-9, t_end, t_end, err, calibrated, 200, seed=41)
        f_dd[kind] = run.fidelity.fidelities[-1]
    sim_ok = abs(f_hahn - f_proj) < 0.02 and all(abs(v - 0.5) < 0.02 for v in f_dd.values())
    ordering = all(f_hahn < v for v in f_dd.values())
    report("4", exact and sim_ok and ordering,
           f"exact plateaus {f_dep:.5f}, {f_proj:.5f}; at 400 us Hahn {f_hahn:.4f} (0.35355 +/- 0.02), "
           + ", ".join(f"{k} {v:.4f}" for k, v in f_dd.items()) + " (0.5 +/- 0.02)")


def test_criterion_5_t2_identity():
    times = np.linspace(0, 100e-6, 51)
    out = []
    for alpha, beta in ((20.9 * KHZ, 23 * KHZ), (0.0, 1 / 25e-6)):
        noise = NoiseModel(t1=1 / beta, extra_markovian_dephasing=alpha)
        v = free_process_series(noise, times).ptms @ np.array([1.0, 1.0, 0, 0])
        t2 = fit_t2(times, np.hypot(v[:, 1], v[:, 2]))
        out.append((t2, 1 / (alpha + beta / 2)))
    (t2a, wa), (t2b, wb) = out
    ok = abs(t2a / wa - 1) < 0.01 and abs(t2b / (2 * 25e-6) - 1) < 0.01
    report("5", ok, f"T2 {t2a * 1e6:.3f} us vs (alpha+beta/2)^-1 = {wa * 1e6:.3f} us; "
                    f"alpha=0: T2 {t2b * 1e6:.3f} us vs 2 T1 = 50 us (1%)")


def test_criterion_6_calibration(calibrated):
    start = time.perf_counter()
    t1_times = np.linspace(0, 125e-6, 26)
    t2_times = default_calibration_times(35e-6)
    t1 = fit_t1(t1_times, inversion_recovery(calibrated, t1_times, realizations=2000, seed=61))
    t2 = fit_t2(t2_times, hahn_echo_decay(calibrated, t2_times, realizations=2000, seed=62))
    elapsed = time.perf_counter() - start
    ok = abs(t1 / 25e-6 - 1) < 0.02 and abs(t2 / 35e-6 - 1) < 0.05 and elapsed < 60
    report("6", ok, f"T1 {t1 * 1e6:.2f} us (25 +/- 2%), T2 {t2 * 1e6:.2f} us (35 +/- 5%), "
                    f"2000 realizations in {elapsed:.1f} s (< 60 s)")


def test_criterion_7_fit_round_trips():
    start = time.perf_counter()
    times = np.round(np.linspace(0, 150e-6, 76) / MODEL_DT) * MODEL_DT
    rel = []
    truth = AdPdParams(20.9 * KHZ, 23 * KHZ)
    r = fit_ad_pd(model_fidelity_curve("AdPd", truth, times))
    ok = abs(r.alpha / truth.alpha - 1) < 0.01 and abs(r.beta / truth.beta - 1) < 0.01
    rel.append(max(abs(r.alpha / truth.alpha - 1), abs(r.beta / truth.beta - 1)))
    for a, b, w in ((2, 27, 33), (7, 21, 81)):
        truth = EffectiveDdParams(a * KHZ, b * KHZ, w * RAD_PER_MS)
        r = fit_effective_dd(model_fidelity_curve("EffectiveDd", truth, times))
        err = max(abs(r.alpha / truth.alpha - 1), abs(r.beta / truth.beta - 1), abs(r.omega / truth.omega - 1))
        ok = ok and err < 0.02
        rel.append(err)
    elapsed = time.perf_counter() - start
    report("7", ok and elapsed < 60, f"worst relative errors AD+PD {rel[0]:.1e} (< 1%), effective DD "
                                     f"{rel[1]:.1e}, {rel[2]:.1e} (< 2%), {elapsed:.1f} s (< 60 s)")


def test_criterion_8_ur_reduction():
    xy4 = ur_phases(4, np.pi / 2, +1) == [0.0, np.pi / 2, 0.0, np.pi / 2]
    k = np.arange(1, 21)
    want = np.mod((k - 1) * (k - 2) * np.pi / 10 + (k - 1) * np.pi / 2, 2 * np.pi)
    got = np.array(ur_phases(20, np.pi / 2))
    diff = np.abs(np.mod(got - want + np.pi, 2 * np.pi) - np.pi).max()
    report("8", xy4 and diff < 1e-12, f"UR4 == XY4 exactly: {xy4}; UR20 max phase deviation {diff:.1e}")


# -- criterion 9: pulse-error phenomenology ---------------------------------------

PHENOMENOLOGY = (
    ("Hahn", "Hahn", None),
    ("XY4-40", "XY4", 40e-9),
    ("XY4-80", "XY4", 80e-9),
    ("XY4-120", "XY4", 120e-9),
    ("XY8", "XY8", 80e-9),
    ("XY16", "XY16", 80e-9),
    ("KDD", "KDD", 80e-9),
    ("UR20", "UR20", 80e-9),
)
ROBUST = ("XY8", "XY16", "KDD", "UR20")


@pytest.fixture(scope="module")
def phenomenology(calibrated):
    start = time.perf_counter()
    err = PulseErrorModel(0.05)
    out = {}
    for label, kind, tau in PHENOMENOLOGY:
        run = simulate_sequence(kind, tau, 120e-6, 2e-6, err, calibrated, 2000, seed=90)
        out[label] = (run, fit_run(run))
    return out, time.perf_counter() - start


def test_criterion_9a_omega_trend(phenomenology):
    runs, _ = phenomenology
    w = [runs[k][1].omega / RAD_PER_MS for k in ("XY4-40", "XY4-80", "XY4-120")]
    report("9(a)", w[0] > w[1] > w[2], "XY4 fitted omega (rad/ms) tau=40/80/120 ns: " + " > ".join(f"{x:.2f}" for x in w))


def test_criterion_9b_robust_sequences(phenomenology):
    runs, _ = phenomenology
    f_xy4 = runs["XY4-80"][0].fidelity.fidelities[-1]
    parts, ok = [], True
    for k in ROBUST:
        run, fit = runs[k]
        f_end = run.fidelity.fidelities[-1]
        beats = f_end > f_xy4
        zero = fit.omega_consistent_with_zero
        ok = ok and beats and zero
        parts.append(f"{k} F_end {f_end:.4f} |omega| {fit.omega / RAD_PER_MS:.3g} rad/ms "
                     f"(F-stat {fit.omega_f_statistic:.3g}, {'consistent' if zero else 'NOT consistent'} with 0)")
    report("9(b)", ok, f"XY4-80 F_end {f_xy4:.4f}; " + "; ".join(parts))


def test_criterion_9c_alpha_reduction(phenomenology):
    runs, _ = phenomenology
    a_hahn = runs["Hahn"][1].alpha
    ratios = {k: a_hahn / max(runs[k][1].alpha, 1e-300) for k in ROBUST}
    report("9(c)", all(r >= 5 for r in ratios.values()),
           f"Hahn alpha {a_hahn / KHZ:.2f} kHz; reduction factors "
           + ", ".join(f"{k} {runs[k][1].alpha / KHZ:.2f} kHz ({r:.1f}x)" for k, r in ratios.items()) + " (>= 5x)")


def test_criterion_9d_beta_spread(phenomenology):
    runs, elapsed = phenomenology
    betas = np.array([fit.beta for _, fit in runs.values()]) / KHZ
    spread = (betas.max() - betas.min()) / betas.mean()
    report("9(d)", spread < 0.30 and elapsed < 600,
           f"beta {betas.min():.2f}..{betas.max():.2f} kHz, spread {spread:.1%} of mean (< 30%); "
           f"all criterion-9 runs and fits in {elapsed:.0f} s (< 600 s)")


def test_criterion_10_survival(calibrated):
    t = 100e-6  # 4 T1
    err = PulseErrorModel(0.05)
    out = {}
    for kind in ("XY4", "XY8"):
        seq = build_sequence(kind, 100e-9)
        cycles = int(round(t / seq.cycle_time))
        res = run_dd_experiment(seq, err, calibrated, cycles, cycles, 500, EXCITED, seed=100)
        out[kind] = survival_probability(res, EXCITED)[-1]
    free = run_dd_experiment(build_sequence("Free", total_time=t), PERFECT, calibrated, 1, 1, 500, EXCITED, seed=101)
    p_free = survival_probability(free, EXCITED)[-1]
    ok = all(abs(p - 0.5) <= 0.05 for p in out.values()) and p_free < 0.05
    report("10", ok, ", ".join(f"{k} survival {p:.4f}" for k, p in out.items())
           + f" (0.5 +/- 0.05); free {p_free:.4f} (< 0.05)")
