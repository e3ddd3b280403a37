"""Command-line orchestration for all experiments.

Configuration comes from a flat KEY=VALUE file (--config) overridden by
command-line flags; every resolved value is echoed into the run manifest
together with the sha256 of every output file, so any run can be reproduced
bitwise with `oplab rerun <manifest>`.

Exit codes: 0 success, 1 usage/config error, 2 numerical failure,
3 acceptance-comparison failure.
"""

import argparse
import math
import os
import sys
import time

import numpy as np

from . import __version__, backend_name
from . import _pyref
from .integrate import IntegratorConfig, IntegrationError, adaptive_advance
from . import hald as hald_mod
from . import langevin as langevin_mod
from .spectral import (FlowParams, ModePartition, SpectralField,
                       sample_equilibrium, read_snapshot, write_snapshot)
from .dynamics import get_plan, make_full_rhs
from .ensemble import (EnsembleConfig, run_ensemble, estimate_correlations,
                       fit_all_widths, fit_width_model, FitError,
                       CorrelationTable, WidthModel)
from .reduced import run_reduced_ensemble
from .runio import RunWriter, read_csv, parse_config_file, load_manifest

EXIT_OK, EXIT_USAGE, EXIT_NUMERICAL, EXIT_COMPARE = 0, 1, 2, 3

PRESETS = {"desk": (2, 4), "paper": (5, 10)}

INIT_STREAM = 2 ** 32  # reserved stream index for initial-field generation


class CompareFailure(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise SystemExit(EXIT_USAGE)


def _parse_bool(s):
    v = str(s).strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s}")


# (name, type, default, help) per command; None defaults mean "derived later"
HALD_PARAMS = [
    ("q1", float, 1.0, "initial q1"),
    ("p1", float, 1.0, "initial p1"),
    ("temperature", float, 1.0, "canonical temperature T"),
    ("ensemble", int, 1000, "number of Monte Carlo realizations"),
    ("t_end", float, 40.0, "time horizon"),
    ("n_out", int, 81, "number of output times"),
    ("tol", float, 1e-6, "integrator tolerance for ensemble members"),
    ("traj_tol", float, 1e-8, "integrator tolerance for the OP/Galerkin trajectories"),
    ("seed", int, 12345, "master seed"),
]

LANGEVIN_PARAMS = [
    ("gamma", float, 1.0, "damping coefficient"),
    ("noise_q", float, 2.0, "white-noise intensity (autocovariance q*delta)"),
    ("h", float, None, "Euler-Maruyama step (default 0.01/gamma)"),
    ("t_end", float, None, "time horizon (default 20/gamma)"),
    ("ensemble", int, 1000, "number of paths"),
    ("u0", float, 0.0, "initial velocity"),
    ("seed", int, 12345, "master seed"),
]

EULER_COMMON = [
    ("preset", str, None, "lattice preset: desk (m=2,bound=4) or paper (m=5,bound=10)"),
    ("m", int, None, "resolved cutoff |k|_inf <= m"),
    ("bound", int, None, "sampled bound (default 2m)"),
    ("a", float, 1.0, "smoothing length"),
    ("temperature", float, 1.0, "equilibrium temperature T"),
    ("ensemble", int, 100, "number of realizations"),
    ("t_end", float, 5.0, "time horizon"),
    ("n_out", int, 21, "number of output times"),
    ("seed", int, 12345, "master seed"),
    ("tol", float, 1e-6, "integrator tolerance"),
    ("h_max", float, 0.25, "maximum integrator step"),
]

EULER_MC_PARAMS = EULER_COMMON + [
    ("history_dt", float, 0.05, "sampled-mode history grid spacing"),
    ("max_lag", float, 5.0, "maximum correlation lag"),
    ("initial", str, None, "initial resolved field snapshot (default: generated)"),
    ("init_seed", int, None, "seed for the generated initial field (default: seed)"),
]

EULER_CORR_PARAMS = [
    ("correlations", str, None, "correlation table CSV from euler-mc"),
    ("equilibrium", _parse_bool, False,
     "estimate widths from an equilibrium run with no resolved modes"),
    ("threshold", float, 0.1, "usable-lag threshold as a fraction of C(0)"),
] + EULER_COMMON + [
    ("history_dt", float, 0.05, "sampled-mode history grid spacing"),
    ("max_lag", float, 5.0, "maximum correlation lag"),
]

EULER_SOP_PARAMS = EULER_COMMON + [
    ("widths", str, None, "widths.csv from euler-correlations"),
    ("width_c", float, None, "width-model constant c (alternative to --widths)"),
    ("sigma_at", str, "resolved",
     "evaluate sigma at the 'resolved' mode (as printed) or the 'sampled' mode"),
    ("grid_dt", float, None, "noise grid spacing (default min sigma / 8)"),
    ("initial", str, None, "initial resolved field snapshot (default: generated)"),
    ("init_seed", int, None, "seed for the generated initial field (default: seed)"),
]


def _add_params(parser, params):
    for name, typ, default, help_text in params:
        flag = "--" + name.replace("_", "-")
        if typ is _parse_bool:
            parser.add_argument(flag, type=_parse_bool, default=None,
                                metavar="BOOL", help=help_text)
        else:
            parser.add_argument(flag, type=typ, default=None, help=help_text)


def _resolve(args, params):
    cfg = {}
    file_values = {}
    if getattr(args, "config", None):
        file_values = parse_config_file(args.config)
    known = {name for name, *_ in params}
    unknown = set(file_values) - known
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    for name, typ, default, _ in params:
        value = getattr(args, name, None)
        if value is None and name in file_values:
            value = typ(file_values[name])
        cfg[name] = default if value is None else value
    return cfg


def _partition_from(cfg):
    preset, m, bound = cfg.get("preset"), cfg.get("m"), cfg.get("bound")
    if preset is not None:
        if preset not in PRESETS:
            raise ValueError(f"unknown preset {preset!r}; choose from {sorted(PRESETS)}")
        if m is not None or bound is not None:
            raise ValueError("give either --preset or --m/--bound, not both")
        m, bound = PRESETS[preset]
    elif m is None:
        m, bound = PRESETS["desk"]
    elif bound is None:
        bound = 2 * m
    cfg["m"], cfg["bound"] = m, bound
    return ModePartition(m=m, sampled_bound=bound)


def _initial_field(cfg, partition, params):
    if cfg.get("initial"):
        return read_snapshot(cfg["initial"], partition), "file"
    init_seed = cfg.get("init_seed")
    if init_seed is None:
        init_seed = cfg["seed"]
        cfg["init_seed"] = init_seed
    rng = np.random.default_rng([init_seed, INIT_STREAM])
    return sample_equilibrium(partition, params, "resolved", rng), "generated"


def _output_times(cfg):
    if cfg["n_out"] < 2:
        raise ValueError("need at least 2 output times")
    return np.linspace(0.0, cfg["t_end"], cfg["n_out"])


def run_hald(cfg, out_dir, workers):
    if cfg["ensemble"] < 1:
        raise ValueError("ensemble size must be >= 1")
    writer = RunWriter(out_dir, "hald", cfg, workers)
    times = _output_times(cfg)
    T = cfg["temperature"]
    r0 = (cfg["q1"], cfg["p1"])

    mean, se = hald_mod.ensemble_mean_trajectory(
        r0, T, cfg["ensemble"], times, cfg["seed"], tol=cfg["tol"],
        workers=workers)
    writer.add_csv("hald_mean.csv",
                   ["t", "mean_q1", "mean_p1", "stderr_q1", "stderr_p1"],
                   [(t, m[0], m[1], s[0], s[1])
                    for t, m, s in zip(times, mean, se)])

    config = IntegratorConfig(tol=cfg["traj_tol"])
    op_traj = adaptive_advance(lambda t, y: hald_mod.op_rhs(y, T),
                               0.0, np.array(r0), times[-1], config, times)
    writer.add_csv("hald_op.csv", ["t", "q1", "p1", "H_renorm"],
                   [(t, y[0], y[1], hald_mod.renormalized_hamiltonian(y, T))
                    for t, y in zip(times, op_traj)])

    gal_traj = adaptive_advance(lambda t, y: hald_mod.galerkin_rhs(y),
                                0.0, np.array(r0), times[-1], config, times)
    writer.add_csv("hald_galerkin.csv", ["t", "q1", "p1"],
                   [(t, y[0], y[1]) for t, y in zip(times, gal_traj)])
    writer.finalize()
    print(f"hald: mean amplitude at t={times[-1]:g}: "
          f"{math.hypot(mean[-1, 0], mean[-1, 1]):.6g}")
    return EXIT_OK


def run_langevin(cfg, out_dir, workers):
    if cfg["h"] is None:
        cfg["h"] = 0.01 / cfg["gamma"] if cfg["gamma"] > 0 else 0.01
    if cfg["t_end"] is None:
        if cfg["gamma"] <= 0:
            raise ValueError("t_end must be given when gamma <= 0")
        cfg["t_end"] = 20.0 / cfg["gamma"]
    lc = langevin_mod.LangevinConfig(
        gamma=cfg["gamma"], noise_q=cfg["noise_q"], h=cfg["h"],
        t_end=cfg["t_end"], n_ensemble=cfg["ensemble"])
    writer = RunWriter(out_dir, "langevin", cfg, workers)
    times, var = langevin_mod.variance_trajectory(lc, cfg["u0"], cfg["seed"])
    writer.add_csv("langevin_variance.csv", ["t", "variance"],
                   zip(times, var))
    extra = {}
    if cfg["gamma"] > 0:
        est, se = langevin_mod.stationary_variance_estimate(lc, cfg["seed"],
                                                            u0=cfg["u0"])
        expected = cfg["noise_q"] / (2.0 * cfg["gamma"])
        print(f"langevin: stationary variance = {est:.6g} +- {se:.3g} "
              f"(noise_q/(2 gamma) = {expected:.6g})")
        extra = {"stationary_variance": est, "stationary_stderr": se,
                 "fluctuation_dissipation_value": expected}
    writer.finalize(extra)
    return EXIT_OK


def _aens_rows(result):
    return [(t, a, s, nm) for t, a, s, nm in
            zip(result.times, result.aens_of_mean, result.aens_se,
                result.aens_mean_of_norms)]


AENS_HEADER = ["t", "a_enstrophy_of_mean", "stderr", "a_enstrophy_mean_of_norms"]


def run_euler_mc(cfg, out_dir, workers):
    partition = _partition_from(cfg)
    params = FlowParams(a=cfg["a"], T=cfg["temperature"])
    initial, origin = _initial_field(cfg, partition, params)
    writer = RunWriter(out_dir, "euler-mc", cfg, workers)
    write_snapshot(initial, writer.path("initial_resolved.csv"))
    writer.add_file("initial_resolved.csv")

    ens_cfg = EnsembleConfig(
        n_ensemble=cfg["ensemble"], output_times=_output_times(cfg),
        master_seed=cfg["seed"], partition=partition, params=params,
        initial_resolved=initial, tol=cfg["tol"],
        history_dt=cfg["history_dt"], h_max=cfg["h_max"], workers=workers)
    result = run_ensemble(ens_cfg)

    for j, t in enumerate(result.times):
        f = SpectralField(partition, result.mean_amps[j], modes=result.modes)
        name = f"mean_field_{j:04d}.csv"
        write_snapshot(f, writer.path(name))
        writer.add_file(name)
    writer.add_csv("aenstrophy_full.csv", AENS_HEADER, _aens_rows(result))

    max_lag = min(cfg["max_lag"],
                  result.hist_times[-1] - result.hist_times[1])
    table = estimate_correlations(result.histories, result.hist_times,
                                  result.hist_modes, max_lag)
    rows = []
    for l, tau in enumerate(table.lags):
        for j, k in enumerate(table.modes):
            rows.append((k[0], k[1], tau, table.values[l, j].real,
                         table.values[l, j].imag, table.se_real[l, j]))
    writer.add_csv("correlations.csv",
                   ["k1", "k2", "tau", "re_C", "im_C", "stderr"], rows)
    writer.finalize({"initial_field": origin,
                     "snapshot_times": list(map(float, result.times))})
    print(f"euler-mc: {cfg['ensemble']} realizations on m={cfg['m']} "
          f"bound={cfg['bound']}; A-enstrophy of mean "
          f"{result.aens_of_mean[0]:.6g} -> {result.aens_of_mean[-1]:.6g}")
    return EXIT_OK


def _table_from_csv(path):
    header, cols = read_csv(path)
    if header != ["k1", "k2", "tau", "re_C", "im_C", "stderr"]:
        raise ValueError(f"unexpected correlation table header in {path}")
    k1, k2, tau, re_c, im_c, se = cols
    modes = []
    for a, b in zip(k1, k2):
        k = (int(a), int(b))
        if k not in modes:
            modes.append(k)
    lags = sorted(set(tau))
    index = {k: j for j, k in enumerate(modes)}
    lag_index = {t: l for l, t in enumerate(lags)}
    values = np.zeros((len(lags), len(modes)), dtype=complex)
    se_r = np.zeros((len(lags), len(modes)))
    for a, b, t, re, im, s in zip(k1, k2, tau, re_c, im_c, se):
        l, j = lag_index[t], index[(int(a), int(b))]
        values[l, j] = re + 1j * im
        se_r[l, j] = s
    return CorrelationTable(modes=modes, lags=np.array(lags), values=values,
                            se_real=se_r, se_imag=np.zeros_like(se_r),
                            n_ensemble=0)


def run_euler_correlations(cfg, out_dir, workers):
    writer = RunWriter(out_dir, "euler-correlations", cfg, workers)
    if cfg["correlations"] and cfg["equilibrium"]:
        raise ValueError("give either --correlations or --equilibrium, not both")
    if cfg["correlations"]:
        table = _table_from_csv(cfg["correlations"])
    else:
        if not cfg["equilibrium"]:
            raise ValueError("need --correlations FILE or --equilibrium true")
        cfg["m"] = 0  # no resolved modes: every mode is drawn from the measure
        if cfg.get("preset"):
            cfg["bound"] = PRESETS[cfg["preset"]][1]
            cfg["preset"] = None
        partition = _partition_from(cfg)
        params = FlowParams(a=cfg["a"], T=cfg["temperature"])
        ens_cfg = EnsembleConfig(
            n_ensemble=cfg["ensemble"], output_times=_output_times(cfg),
            master_seed=cfg["seed"], partition=partition, params=params,
            initial_resolved=SpectralField.zeros(partition), tol=cfg["tol"],
            history_dt=cfg["history_dt"], h_max=cfg["h_max"], workers=workers)
        result = run_ensemble(ens_cfg)
        max_lag = min(cfg["max_lag"],
                      result.hist_times[-1] - result.hist_times[1])
        table = estimate_correlations(result.histories, result.hist_times,
                                      result.hist_modes, max_lag)
    widths, skipped = fit_all_widths(table, cfg["threshold"])
    for k in skipped:
        print(f"warning: width fit failed for mode {k}", file=sys.stderr)
    model = fit_width_model(widths)
    writer.add_csv("widths.csv", ["k1", "k2", "sigma", "sigma_times_k"],
                   [(k[0], k[1], s, s * math.hypot(*k))
                    for k, s in sorted(widths.items())])
    writer.finalize({"c": model.c, "residual": model.residual,
                     "n_fitted": len(widths), "n_skipped": len(skipped)})
    print(f"euler-correlations: fitted {len(widths)} modes; "
          f"c = {model.c:.6g}, residual = {model.residual:.4g}")
    return EXIT_OK


def _width_model_from(cfg):
    if cfg["widths"] and cfg["width_c"] is not None:
        raise ValueError("give either --widths or --width-c, not both")
    if cfg["widths"]:
        header, cols = read_csv(cfg["widths"])
        if header[:3] != ["k1", "k2", "sigma"]:
            raise ValueError(f"unexpected widths header in {cfg['widths']}")
        widths = {(int(a), int(b)): s for a, b, s in zip(cols[0], cols[1], cols[2])}
        return fit_width_model(widths)
    if cfg["width_c"] is None:
        raise ValueError("the reduced model needs --widths FILE or --width-c C")
    if cfg["width_c"] <= 0:
        raise ValueError("width constant must be > 0")
    return WidthModel(c=cfg["width_c"], residual=0.0, widths=())


def run_euler_sop(cfg, out_dir, workers):
    model = _width_model_from(cfg)
    partition = _partition_from(cfg)
    params = FlowParams(a=cfg["a"], T=cfg["temperature"])
    initial, origin = _initial_field(cfg, partition, params)
    if cfg["sigma_at"] not in ("resolved", "sampled"):
        raise ValueError("--sigma-at must be 'resolved' or 'sampled'")
    writer = RunWriter(out_dir, "euler-sop", cfg, workers)
    write_snapshot(initial.restricted("resolved"), writer.path("initial_resolved.csv"))
    writer.add_file("initial_resolved.csv")
    ens_cfg = EnsembleConfig(
        n_ensemble=cfg["ensemble"], output_times=_output_times(cfg),
        master_seed=cfg["seed"], partition=partition, params=params,
        initial_resolved=initial, tol=cfg["tol"], h_max=cfg["h_max"],
        workers=workers)
    result = run_reduced_ensemble(ens_cfg, model, sigma_at=cfg["sigma_at"],
                                  grid_dt=cfg["grid_dt"])
    writer.add_csv("aenstrophy_reduced.csv", AENS_HEADER, _aens_rows(result))
    writer.finalize({"initial_field": origin, "width_c": model.c})
    print(f"euler-sop: {cfg['ensemble']} realizations, c={model.c:.6g}; "
          f"A-enstrophy of mean {result.aens_of_mean[0]:.6g} -> "
          f"{result.aens_of_mean[-1]:.6g}")
    return EXIT_OK


def run_compare(path_full, path_reduced, tol):
    h1, cols1 = read_csv(path_full)
    h2, cols2 = read_csv(path_reduced)
    t1, v1 = np.array(cols1[0]), np.array(cols1[1])
    t2, v2 = np.array(cols2[0]), np.array(cols2[1])
    if t1.shape != t2.shape or not np.array_equal(t1, t2):
        raise ValueError("time grids are not aligned")
    with np.errstate(divide="ignore", invalid="ignore"):
        rel = np.abs(v2 - v1) / np.abs(v1)
    rel = np.where((v1 == 0) & (v2 == 0), 0.0, rel)
    max_dev = float(np.max(rel))
    decay1 = 1.0 - v1[-1] / v1[0] if v1[0] != 0 else math.nan
    decay2 = 1.0 - v2[-1] / v2[0] if v2[0] != 0 else math.nan
    print(f"compare: max relative deviation = {max_dev:.6g}")
    print(f"compare: decay fraction reference = {decay1:.6g}, candidate = {decay2:.6g}")
    if not max_dev <= tol:
        print(f"compare: FAIL (tolerance {tol:g})")
        raise CompareFailure
    print(f"compare: PASS (tolerance {tol:g})")
    return EXIT_OK


def run_bench(m, bound, a, repeat, seed):
    from . import dynamics
    try:
        from . import _core
    except ImportError:
        _core = None
    partition = ModePartition(m=m, sampled_bound=bound)
    params = FlowParams(a=a, T=1.0)
    plan = get_plan(partition, params)
    rng = np.random.default_rng(seed)
    f = sample_equilibrium(partition, params, "all", rng)
    y = f.amps.astype(complex).view(float)
    print(f"bench: lattice m={m} bound={bound}: {plan.n_canon} canonical modes, "
          f"{len(plan.full[0])} convolution terms")
    timings = {}
    for name, kernels in (("python", _pyref), ("compiled", _core)):
        if kernels is None:
            print("bench: compiled backend not built; skipping")
            continue
        rhs = make_full_rhs(partition, params, kernels=kernels)
        rhs(0.0, y)  # warm up
        t0 = time.perf_counter()
        for _ in range(repeat):
            out = rhs(0.0, y)
        dt = (time.perf_counter() - t0) / repeat
        timings[name] = dt
        print(f"bench: {name:>8}: {dt * 1e6:9.1f} us/eval "
              f"({1.0 / dt:,.0f} evals/s)")
    if len(timings) == 2:
        ref = make_full_rhs(partition, params, kernels=_pyref)(0.0, y)
        new = make_full_rhs(partition, params, kernels=_core)(0.0, y)
        print(f"bench: speedup x{timings['python'] / timings['compiled']:.1f}, "
              f"max |diff| = {np.max(np.abs(ref - new)):.3g}")
    return EXIT_OK


def _add_common(sub):
    sub.add_argument("--config", help="flat KEY=VALUE configuration file")
    sub.add_argument("--out-dir", default=None,
                     help="output directory (default $OPLAB_OUT_DIR or '.')")
    sub.add_argument("--workers", type=int, default=1,
                     help="ensemble worker processes (never affects results)")


COMMANDS = {
    "hald": (HALD_PARAMS, run_hald),
    "langevin": (LANGEVIN_PARAMS, run_langevin),
    "euler-mc": (EULER_MC_PARAMS, run_euler_mc),
    "euler-correlations": (EULER_CORR_PARAMS, run_euler_correlations),
    "euler-sop": (EULER_SOP_PARAMS, run_euler_sop),
}


def build_parser():
    parser = _Parser(prog="oplab",
                     description="optimal-prediction laboratory")
    parser.add_argument("--version", action="version",
                        version=f"oplab {__version__} ({backend_name()} kernels)")
    subs = parser.add_subparsers(dest="command", required=True)
    for name, (params, _) in COMMANDS.items():
        sub = subs.add_parser(name)
        _add_common(sub)
        _add_params(sub, params)
    comp = subs.add_parser("compare")
    comp.add_argument("reference", help="reference A-enstrophy CSV (full MC)")
    comp.add_argument("candidate", help="candidate A-enstrophy CSV (reduced)")
    comp.add_argument("--tol", type=float, default=0.10,
                      help="maximum relative deviation")
    bench = subs.add_parser("bench")
    bench.add_argument("--m", type=int, default=5)
    bench.add_argument("--bound", type=int, default=10)
    bench.add_argument("--a", type=float, default=1.0)
    bench.add_argument("--repeat", type=int, default=100)
    bench.add_argument("--seed", type=int, default=0)
    rerun = subs.add_parser("rerun")
    rerun.add_argument("manifest", help="manifest JSON from a previous run")
    rerun.add_argument("--out-dir", default=None)
    rerun.add_argument("--workers", type=int, default=None)
    return parser


def _out_dir(args):
    if getattr(args, "out_dir", None):
        return args.out_dir
    return os.environ.get("OPLAB_OUT_DIR", ".")


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command in COMMANDS:
            params, runner = COMMANDS[args.command]
            cfg = _resolve(args, params)
            return runner(cfg, _out_dir(args), max(1, args.workers))
        if args.command == "compare":
            return run_compare(args.reference, args.candidate, args.tol)
        if args.command == "bench":
            return run_bench(args.m, args.bound, args.a, args.repeat, args.seed)
        if args.command == "rerun":
            manifest = load_manifest(args.manifest)
            command = manifest["command"]
            if command not in COMMANDS:
                raise ValueError(f"manifest command {command!r} is not rerunnable")
            params, runner = COMMANDS[command]
            cfg = dict(manifest["config"])
            workers = args.workers if args.workers else manifest.get("workers", 1)
            out_dir = args.out_dir or _out_dir(args)
            return runner(cfg, out_dir, max(1, workers))
        raise ValueError(f"unknown command {args.command!r}")
    except (ValueError, FileNotFoundError, KeyError) as exc:
        print(f"oplab: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (IntegrationError, FitError, np.linalg.LinAlgError) as exc:
        print(f"oplab: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except CompareFailure:
        return EXIT_COMPARE


if __name__ == "__main__":
    sys.exit(main())
