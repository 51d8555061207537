"""Command-line front end.

Subcommands::

    ddqpt run CONFIG            simulate, tomograph, score and fit one experiment
    ddqpt compare CONFIG...     the same for several configs plus a summary table
    ddqpt sequences KIND        print one cycle of a sequence as JSON
    ddqpt calibrate             OU noise amplitude for target T1/T2
    ddqpt tomography STORE      chi matrix of a stored run at a given time

Exit codes: 0 success, 1 runtime failure, 2 usage or config error.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import sys
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np
import yaml
from jsonschema import Draft7Validator

from .errors import DDError
from .fit import MODEL_DT, FitResult
from .pipeline import SequenceRun, process_from_ptm, fit_run, simulate_sequence
from .sequences import PulseErrorModel, SequenceKind, build_sequence, parse_kind
from .simulator import (
    DEFAULT_DT,
    NoiseModel,
    _steps,
    calibrate_noise,
    default_calibration_times,
    fit_t1,
    fit_t2,
    hahn_echo_decay,
    inversion_recovery,
)
from .tomography import process_fidelity, qpt, target_identity_chi

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2
DEFAULT_REALIZATIONS = 100
DEFAULT_SEED = 0

FIDELITY_COLUMNS = ("time_us", "fidelity", "sequence")
SUMMARY_COLUMNS = ("label", "kind", "alpha_khz", "beta_khz", "omega_rad_per_ms", "final_fidelity",
                   "residual_rms", "omega_consistent_with_zero")


class ConfigError(Exception):
    """Invalid config or arguments; reported with exit code 2."""


def load_schema() -> dict:
    return json.loads(resources.files("ddqpt").joinpath("config.schema.json").read_text())


# -- config loading ----------------------------------------------------------


def _node_at(node, path):
    """YAML node reached by following ``path`` (keys and indices) from ``node``."""
    for key in path:
        if isinstance(node, yaml.MappingNode):
            nxt = next((v for k, v in node.value if k.value == key), None)
        elif isinstance(node, yaml.SequenceNode) and isinstance(key, int) and key < len(node.value):
            nxt = node.value[key]
        else:
            nxt = None
        if nxt is None:
            break
        node = nxt
    return node


def _key_node(node, path, key):
    parent = _node_at(node, path)
    if isinstance(parent, yaml.MappingNode):
        for k, _ in parent.value:
            if k.value == key:
                return k
    return parent


def _line(node) -> int:
    return node.start_mark.line + 1 if node is not None else 1


@dataclass
class LoadedConfig:
    path: str
    data: dict
    root: object  # yaml node tree, for line numbers

    def where(self, *path) -> str:
        return f"{self.path}:{_line(_node_at(self.root, path))}"


def load_config(path) -> LoadedConfig:
    """Parse and schema-check a YAML config; errors carry ``file:line``."""
    path = str(path)
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise ConfigError(f"{path}: cannot read config: {e.strerror}") from None
    try:
        root = yaml.compose(text, Loader=yaml.SafeLoader)
        data = yaml.safe_load(text)
    except yaml.YAMLError as e:
        mark = getattr(e, "problem_mark", None)
        line = mark.line + 1 if mark is not None else 1
        raise ConfigError(f"{path}:{line}: YAML syntax error: {getattr(e, 'problem', e)}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{path}:1: config must be a mapping")
    errors = sorted(Draft7Validator(load_schema()).iter_errors(data),
                    key=lambda e: (_line(_node_at(root, e.absolute_path)), e.message))
    if errors:
        e = errors[0]
        where = list(e.absolute_path)
        node = _node_at(root, where)
        msg = e.message
        if e.validator == "additionalProperties":
            allowed = set(e.schema.get("properties", {}))
            extra = sorted(k for k in e.instance if k not in allowed)
            node = _key_node(root, where, extra[0])
            msg = f"unknown key {extra[0]!r}" + (f" in {'.'.join(map(str, where))}" if where else "")
        elif e.validator == "not" and where == ["noise"]:
            node = _key_node(root, where, "t2_us")
            msg = "noise: give t2_us (calibrate the OU amplitude) or ou_sigma_rad_per_ms, not both"
        elif where:
            msg = f"{'.'.join(map(str, where))}: {msg}"
        raise ConfigError(f"{path}:{_line(node)}: {msg}")
    return LoadedConfig(path, data, root)


# -- experiment description ---------------------------------------------------


@dataclass(frozen=True)
class Experiment:
    label: str
    kind: SequenceKind
    tau: float | None
    seq_kw: dict
    err: PulseErrorModel
    noise: NoiseModel
    duration: float
    readout_interval: float
    realizations: int
    seed: int
    dt: float
    workers: int
    snapshots: tuple
    fit_model: str
    config_sha256: str
    effective_config: dict = field(repr=False)


def _hash(obj) -> str:
    return hashlib.sha256(json.dumps(obj, sort_keys=True, separators=(",", ":")).encode()).hexdigest()


def _noise_from(cfg: LoadedConfig) -> NoiseModel:
    n = cfg.data["noise"]
    t1 = n["t1_us"] * 1e-6
    tau_c = n.get("ou_tau_c_us", 10.0) * 1e-6
    extra = n.get("extra_dephasing_khz", 0.0) * 1e3
    if "t2_us" in n:
        try:
            return calibrate_noise(t1, n["t2_us"] * 1e-6, tau_c, extra)
        except DDError as e:
            raise ConfigError(f"{cfg.where('noise', 't2_us')}: {e}") from None
    return NoiseModel(n.get("ou_sigma_rad_per_ms", 0.0) * 1e3, tau_c, t1, extra)


def build_experiment(cfg: LoadedConfig, seed: int | None = None, realizations: int | None = None,
                     workers: int | None = None) -> Experiment:
    """Resolve a loaded config (plus command-line overrides) into run parameters.

    Anything the schema cannot express (sequence names, timing that does not
    fit the simulation grid) is checked here, still before any simulation.
    """
    d = json.loads(json.dumps(cfg.data))  # deep copy, plain types
    run = d["run"]
    if seed is not None:
        run["seed"] = seed
    if realizations is not None:
        run["realizations"] = realizations
    if workers is not None:
        run["workers"] = workers
    run.setdefault("seed", DEFAULT_SEED)
    run.setdefault("realizations", DEFAULT_REALIZATIONS)

    s = d["sequence"]
    try:
        kind, order = parse_kind(s["kind"])
    except DDError as e:
        raise ConfigError(f"{cfg.where('sequence', 'kind')}: {e}") from None
    seq_kw = {}
    if kind is SequenceKind.UR:
        seq_kw = {"n": s.get("ur_n", order if order is not None else 4),
                  "phi2": s.get("ur_phi2_rad", np.pi / 2), "sign": s.get("ur_sign", 1)}
    elif kind is SequenceKind.CDD:
        seq_kw = {"level": s.get("cdd_level", order if order is not None else 2)}
    dd = kind not in (SequenceKind.FREE, SequenceKind.HAHN)
    if dd and "tau_ns" not in s:
        raise ConfigError(f"{cfg.where('sequence')}: sequence.tau_ns is required for {kind.value}")
    tau = s["tau_ns"] * 1e-9 if dd else None
    out = d.get("output", {})
    fit_model = out.get("fit_model", "auto")
    dt = run.get("dt_ns", DEFAULT_DT * 1e9) * 1e-9
    duration = run["duration_us"] * 1e-6
    interval = run["readout_interval_us"] * 1e-6
    try:
        if dd:
            seq = build_sequence(kind, tau, **seq_kw)
            for x in seq.delays:
                _steps(x, dt)
        else:
            _steps(interval, dt, "readout interval")
            if fit_model != "none":
                _steps(interval, MODEL_DT, "readout interval")
            seq = build_sequence(kind, total_time=interval)
            for x in seq.delays:
                _steps(x, dt)
    except DDError as e:
        raise ConfigError(f"{cfg.where('sequence', 'tau_ns' if dd else 'kind')}: {e}") from None

    pe = d.get("pulse_error", {})
    try:
        err = PulseErrorModel(pe.get("flip_angle_error", 0.0), pe.get("detuning_tilt_rad", 0.0))
    except DDError as e:
        raise ConfigError(f"{cfg.where('pulse_error')}: {e}") from None
    noise = _noise_from(cfg)

    if fit_model != "none" and math.floor(duration / interval + 1e-9) + 1 < 6:
        raise ConfigError(f"{cfg.where('run', 'readout_interval_us')}: "
                          "fitting needs at least 6 readouts; shorten the interval or set output.fit_model: none")
    snapshots = tuple(t * 1e-6 for t in out.get("chi_snapshots_us", [0.0, run["duration_us"]]))
    if any(t > duration * (1 + 1e-9) for t in snapshots):
        raise ConfigError(f"{cfg.where('output', 'chi_snapshots_us')}: snapshot time beyond run.duration_us")

    label = d.get("label") or (seq.label if not dd else f"{seq.label}-{s['tau_ns']:g}ns")
    hashed = json.loads(json.dumps(d))
    # neither the output location nor the worker count changes the results
    hashed.get("output", {}).pop("dir", None)
    hashed["run"].pop("workers", None)
    return Experiment(
        label=label, kind=kind, tau=tau, seq_kw=seq_kw, err=err, noise=noise, duration=duration,
        readout_interval=interval, realizations=int(run["realizations"]), seed=int(run["seed"]), dt=dt,
        workers=int(run.get("workers", 1)), snapshots=snapshots, fit_model=fit_model,
        config_sha256=_hash(hashed), effective_config=d,
    )


# -- running ------------------------------------------------------------------


@dataclass
class RunOutput:
    experiment: Experiment
    run: SequenceRun
    fit: FitResult | None


def execute(exp: Experiment) -> RunOutput:
    run = simulate_sequence(exp.kind, exp.tau, exp.duration, exp.readout_interval, exp.err, exp.noise,
                            exp.realizations, exp.seed, exp.dt, exp.workers, **exp.seq_kw)
    fit = None if exp.fit_model == "none" else fit_run(run, exp.fit_model)
    return RunOutput(exp, run, fit)


def _f(x) -> str:
    return repr(float(x))


def _us(seconds) -> float:
    # readout times are whole picoseconds; strip the float noise of the unit change
    return round(float(seconds) * 1e6, 6)


def _stamp(exp_hash: str, seed) -> dict:
    return {"config_sha256": exp_hash, "seed": seed}


def _csv_text(stamp: dict, columns, rows) -> str:
    buf = io.StringIO()
    for k, v in stamp.items():
        buf.write(f"# {k}: {v}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    w.writerows(rows)
    return buf.getvalue()


def _json_text(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _fidelity_rows(out: RunOutput):
    f = out.run.fidelity
    return [[_f(_us(t)), _f(v), out.experiment.label] for t, v in zip(f.times, f.fidelities)]


def fidelity_artifact(stamp: dict, outputs: list[RunOutput], fmt: str) -> tuple[str, str]:
    rows = [r for o in outputs for r in _fidelity_rows(o)]
    if fmt == "csv":
        return "fidelity_vs_time.csv", _csv_text(stamp, FIDELITY_COLUMNS, rows)
    series = [{"sequence": o.experiment.label,
               "time_us": [_us(t) for t in o.run.fidelity.times],
               "fidelity": [float(v) for v in o.run.fidelity.fidelities]} for o in outputs]
    return "fidelity_vs_time.json", _json_text({**stamp, "series": series})


def _snapshot(out: RunOutput, t: float) -> dict:
    times = out.run.trajectory.times
    i = int(np.argmin(np.abs(times - t)))
    chi = out.run.chis[i]
    return {"requested_time_us": _us(t), "time_us": _us(times[i]),
            "fidelity": float(out.run.fidelity.fidelities[i]), "chi": chi.to_dict()}


def _store(out: RunOutput) -> dict:
    traj = out.run.trajectory
    return {
        "label": out.experiment.label,
        "realizations": traj.realizations,
        "time_us": [_us(t) for t in traj.times],
        "ptm": traj.ptms.tolist(),
        "ideal_ptm": traj.ideal.tolist(),
    }


def write_run(out: RunOutput, out_dir: Path, fmt: str) -> list[Path]:
    exp = out.experiment
    stamp = _stamp(exp.config_sha256, exp.seed)
    files = [fidelity_artifact(stamp, [out], fmt)]
    files.append(("chi_snapshots.json",
                  _json_text({**stamp, "label": exp.label, "snapshots": [_snapshot(out, t) for t in exp.snapshots]})))
    fit = out.fit.to_dict() if out.fit is not None else None
    files.append(("fit_result.json", _json_text({**stamp, "label": exp.label, "fit": fit})))
    files.append(("process_store.json", _json_text({**stamp, **_store(out)})))
    return _write_all(out_dir, files)


def _write_all(out_dir: Path, files) -> list[Path]:
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for name, text in files:
        p = out_dir / name
        p.write_text(text)
        paths.append(p)
    return paths


def summary_row(out: RunOutput) -> list:
    f = out.fit
    final = out.run.fidelity.fidelities[-1]
    if f is None:
        return [out.experiment.label, out.experiment.kind.value, "", "", "", _f(final), "", ""]
    d = f.to_dict()
    return [out.experiment.label, out.experiment.kind.value, _f(d["alpha_khz"]), _f(d["beta_khz"]),
            _f(d["omega_rad_per_ms"]), _f(final), _f(d["residual_rms"]), str(d["omega_consistent_with_zero"])]


# -- subcommands ----------------------------------------------------------------


def _out_dir(args, cfg: LoadedConfig | None = None) -> Path:
    if args.out_dir:
        return Path(args.out_dir)
    if cfg is not None and "dir" in cfg.data.get("output", {}):
        d = Path(cfg.data["output"]["dir"])
        return d if d.is_absolute() else Path(cfg.path).parent / d
    return Path(".")


def cmd_run(args) -> int:
    cfg = load_config(args.config)
    exp = build_experiment(cfg, args.seed, args.realizations, args.workers)
    out = execute(exp)
    for p in write_run(out, _out_dir(args, cfg), args.format):
        print(p)
    return EXIT_OK


def cmd_compare(args) -> int:
    exps = [build_experiment(load_config(c), args.seed, args.realizations, args.workers) for c in args.configs]
    labels = [e.label for e in exps]
    dup = sorted({x for x in labels if labels.count(x) > 1})
    if dup:
        raise ConfigError(f"duplicate labels {dup}; set a distinct top-level 'label' in each config")
    # every run must succeed before anything is written
    outputs = [execute(e) for e in exps]
    stamp = _stamp(_hash([e.config_sha256 for e in exps]), [e.seed for e in exps])
    files = [fidelity_artifact(stamp, outputs, args.format)]
    rows = [summary_row(o) for o in outputs]
    if args.format == "csv":
        files.append(("compare_summary.csv", _csv_text(stamp, SUMMARY_COLUMNS, rows)))
    else:
        files.append(("compare_summary.json", _json_text({**stamp, "rows": [dict(zip(SUMMARY_COLUMNS, r))
                                                                              for r in rows]})))
    for p in _write_all(Path(args.out_dir or "."), files):
        print(p)
    return EXIT_OK


def cmd_sequences(args) -> int:
    kw = {}
    if args.n is not None:
        kw["n"] = args.n
    if args.level is not None:
        kw["level"] = args.level
    kw["phi2"] = args.phi2
    kw["sign"] = args.sign
    try:
        k, _ = parse_kind(args.kind)
        tau = args.tau_ns * 1e-9
        if k in (SequenceKind.FREE, SequenceKind.HAHN):
            seq = build_sequence(k, total_time=tau)
        else:
            seq = build_sequence(args.kind, tau, **kw)
    except DDError as e:
        raise ConfigError(str(e)) from None
    print(seq.to_json(indent=2))
    return EXIT_OK


def cmd_calibrate(args) -> int:
    try:
        noise = calibrate_noise(args.t1_us * 1e-6, args.t2_us * 1e-6, args.ou_tau_c_us * 1e-6,
                                args.extra_dephasing_khz * 1e3)
    except DDError as e:
        raise ConfigError(str(e)) from None
    block = {
        "t1_us": args.t1_us,
        "ou_sigma_rad_per_ms": noise.ou_sigma / 1e3,
        "ou_tau_c_us": args.ou_tau_c_us,
        "extra_dephasing_khz": args.extra_dephasing_khz,
    }
    result = {"target": {"t1_us": args.t1_us, "t2_us": args.t2_us}, "noise": block}
    if args.realizations:
        seed = DEFAULT_SEED if args.seed is None else args.seed
        t1_times = np.linspace(0, 5 * args.t1_us, 26) * 1e-6
        t2_times = default_calibration_times(args.t2_us * 1e-6)
        sz = inversion_recovery(noise, t1_times, args.realizations, seed)
        coh = hahn_echo_decay(noise, t2_times, args.realizations, seed)
        result["check"] = {"realizations": args.realizations, "seed": seed,
                           "t1_us": fit_t1(t1_times, sz) * 1e6, "t2_us": fit_t2(t2_times, coh) * 1e6}
    text = _json_text(result)
    if args.out_dir:
        name = "calibration.json" if args.format == "json" else "calibration.csv"
        if args.format == "csv":
            rows = [[k, _f(v)] for k, v in block.items()]
            if "check" in result:
                rows += [["fitted_t1_us", _f(result["check"]["t1_us"])],
                         ["fitted_t2_us", _f(result["check"]["t2_us"])]]
            body = _csv_text({"seed": result.get("check", {}).get("seed", "")}, ("quantity", "value"), rows)
        else:
            body = text
        _write_all(Path(args.out_dir), [(name, body)])
    sys.stdout.write(text)
    return EXIT_OK


def cmd_tomography(args) -> int:
    try:
        store = json.loads(Path(args.store).read_text())
        times = np.asarray(store["time_us"], float)
        ptms = np.asarray(store["ptm"], float)
        ideal = np.asarray(store["ideal_ptm"], float)
    except (OSError, ValueError, KeyError) as e:
        raise ConfigError(f"{args.store}: not a readable process store ({e})") from None
    step = np.min(np.diff(times)) if len(times) > 1 else 0.0
    if not (times[0] - step <= args.time_us <= times[-1] + step):
        raise ConfigError(f"time {args.time_us} us outside the stored run [{times[0]}, {times[-1]}] us")
    i = int(np.argmin(np.abs(times - args.time_us)))
    ptm = ptms[i] if args.frame == "lab" else ideal[i].T @ ptms[i]
    chi = qpt(process_from_ptm(ptm))
    res = {
        "config_sha256": store.get("config_sha256"),
        "seed": store.get("seed"),
        "label": store.get("label"),
        "frame": args.frame,
        "time_us": float(times[i]),
        "fidelity": float(process_fidelity(chi, target_identity_chi())),
        "chi": chi.to_dict(),
    }
    text = _json_text(res)
    if args.out_dir:
        _write_all(Path(args.out_dir), [(f"chi_t{times[i]:g}us.json", text)])
    sys.stdout.write(text)
    return EXIT_OK


# -- argument parsing --------------------------------------------------------------


def _count(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be a positive integer, got {text}")
    return v


def _seed(text: str) -> int:
    v = int(text)
    if v < 0:
        raise argparse.ArgumentTypeError(f"must be non-negative, got {text}")
    return v


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=_seed, default=None, help="override run.seed")
    p.add_argument("--realizations", type=_count, default=None, help="override run.realizations")
    p.add_argument("--workers", type=_count, default=None, help="worker processes (results do not depend on it)")
    p.add_argument("--out-dir", default=None, help="directory for artifacts")
    p.add_argument("--format", choices=("csv", "json"), default="csv", help="format of tabular artifacts")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ddqpt", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run one experiment config")
    p.add_argument("config")
    _common(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("compare", help="run several configs and tabulate their fits")
    p.add_argument("configs", nargs="+")
    _common(p)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("sequences", help="print one cycle of a sequence as JSON")
    p.add_argument("kind", help="Free, Hahn, XY4, XY8, XY16, KDD, CDD<l>, UR<n>")
    p.add_argument("--tau-ns", type=float, default=100.0)
    p.add_argument("--n", type=int, default=None, help="UR order")
    p.add_argument("--level", type=int, default=None, help="CDD level")
    p.add_argument("--phi2", type=float, default=np.pi / 2, help="UR free phase (rad)")
    p.add_argument("--sign", type=int, choices=(1, -1), default=1, help="UR phase-progression sign")
    p.set_defaults(func=cmd_sequences)

    p = sub.add_parser("calibrate", help="OU noise amplitude that reproduces target T1/T2")
    p.add_argument("--t1-us", type=float, default=25.0)
    p.add_argument("--t2-us", type=float, default=35.0)
    p.add_argument("--ou-tau-c-us", type=float, default=10.0)
    p.add_argument("--extra-dephasing-khz", type=float, default=0.0)
    p.add_argument("--seed", type=_seed, default=None)
    p.add_argument("--realizations", type=int, default=0, help="if > 0, verify by simulation")
    p.add_argument("--out-dir", default=None)
    p.add_argument("--format", choices=("csv", "json"), default="json")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("tomography", help="chi matrix of a stored run at time t")
    p.add_argument("store", help="process_store.json written by 'run'")
    p.add_argument("--time-us", type=float, required=True)
    p.add_argument("--frame", choices=("toggling", "lab"), default="toggling",
                   help="toggling: ideal pulse product removed (default); lab: raw process")
    p.add_argument("--out-dir", default=None)
    p.set_defaults(func=cmd_tomography)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code) if e.code is not None else EXIT_OK
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"ddqpt: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (DDError, ArithmeticError, np.linalg.LinAlgError, OSError) as e:
        print(f"ddqpt: runtime error: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
