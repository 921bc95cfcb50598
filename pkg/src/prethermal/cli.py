"""Command-line front end.

Exit codes: 0 success, 2 configuration error, 3 numerical failure,
4 partial sweep failure.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .acquisition import (
    iter_windows,
    moving_average,
    pipeline_round_trip,
    write_raw_windows,
)
from .errors import ConfigError, InvalidConfig, NumericalError
from .experiment import (
    ANALYSES,
    derive_seed,
    execute,
    load_config,
    realization,
    run_analyses,
    write_json,
    write_manifest,
)
from .lattice import coupling_scale, generate_lattice, median_coupling, sample_disorder, save_lattice
from .propagation import read_trace_csv, write_trace_csv

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_PARTIAL = 0, 2, 3, 4

log = logging.getLogger("prethermal")


def _say(args, msg: str) -> None:
    if not args.quiet:
        print(msg)


def _config(args):
    overrides = {"master_seed": args.seed, "workers": args.workers}
    if args.output is not None:
        overrides["output_dir"] = str(args.output)
    return load_config(args.config, overrides)


def cmd_generate(args) -> int:
    cfg = _config(args)
    out = Path(cfg.run.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    if args.full:
        seed = cfg.run.master_seed
        lat = generate_lattice(replace(cfg.lattice, rng_seed=derive_seed(seed, "lattice", 0)))
        lat = sample_disorder(lat, replace(cfg.disorder, rng_seed=derive_seed(seed, "disorder", 0)))
    else:
        lat = realization(cfg, 0).lattice
    path = out / "lattice.json"
    save_lattice(lat, path)
    if lat.spin_count >= 2:
        _say(args, f"spins={lat.spin_count} median_coupling_hz={median_coupling(lat):.6g} "
                   f"J={coupling_scale(lat):.6g} s^-1")
    else:
        _say(args, f"spins={lat.spin_count}")
    _say(args, f"wrote {path}")
    return EXIT_OK


def _report_run(args, res) -> None:
    for pt in res.points:
        if pt is not None:
            _say(args, f"point {pt['point']}: tau={pt['tau_s']:.6g} s zeta={pt['zeta']:.6g} "
                       f"theta={pt['flip_angle']:.6g}")
    _say(args, f"J={res.coupling:.6g} s^-1; output in {res.output_dir}")


def cmd_simulate(args) -> int:
    cfg = _config(args)
    if cfg.sweep is not None:
        cfg = replace(cfg, sweep=None)
    res = execute(cfg, Path(cfg.run.output_dir))
    _report_run(args, res)
    if res.failures:
        _say(args, f"failed: {res.failures[0]['message']}")
        return EXIT_NUMERICAL
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = _config(args)
    if cfg.sweep is None:
        raise InvalidConfig("sweep command needs a sweep section")
    res = execute(cfg, Path(cfg.run.output_dir), per_realization=False)
    _report_run(args, res)
    for f in res.failures:
        _say(args, f"point {f['point']} failed: {f['error']}: {f['message']}")
    if res.failures:
        return EXIT_PARTIAL
    return EXIT_OK


def cmd_pipeline(args) -> int:
    cfg = _config(args)
    if cfg.acquisition is None:
        raise InvalidConfig("pipeline needs an acquisition section")
    out = Path(cfg.run.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    if args.trace is not None:
        survival = read_trace_csv(args.trace)
    else:
        res = execute(replace(cfg, sweep=None, analysis=()), out / "simulation", per_realization=False)
        if res.failures:
            raise NumericalError(res.failures[0]["message"])
        survival = res.points[0]["trace"]
    tau = float(survival.times[1] - survival.times[0])
    if not np.allclose(np.diff(survival.times), tau, rtol=1e-9, atol=0):
        raise InvalidConfig("pipeline needs a uniformly sampled (per-pulse) survival trace")
    acq = replace(cfg.acquisition, rng_seed=derive_seed(cfg.run.master_seed, "acquisition"))
    decay = pipeline_round_trip(survival, acq, tau)
    if args.raw_windows > 0:
        first = survival.survival[: args.raw_windows]
        write_raw_windows(out / "windows.f32", iter_windows(first, tau, acq), acq)
    write_trace_csv(decay, out / "decay.csv", value_column="amplitude")
    if args.moving_average is not None:
        write_trace_csv(moving_average(decay, args.moving_average), out / "decay_smoothed.csv",
                        value_column="amplitude")
    write_manifest(out, cfg, [{"acquisition_seed": acq.rng_seed}], {})
    _say(args, f"{len(decay)} windows extracted; wrote {out / 'decay.csv'}")
    return EXIT_OK


def _plot_csv(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([repr(float(x)) for x in r])


def cmd_analyze(args) -> int:
    names = [a.strip() for a in args.analyses.split(",") if a.strip()]
    bad = [a for a in names if a not in ANALYSES]
    if bad:
        raise InvalidConfig(f"unknown analysis {bad}; choose from {ANALYSES}")
    try:
        trace = read_trace_csv(args.trace)
    except (OSError, ValueError, IndexError) as exc:
        raise InvalidConfig(f"cannot read trace {args.trace}: {exc}") from None
    out = Path(args.output) if args.output is not None else Path(args.trace).with_suffix("")
    out.mkdir(parents=True, exist_ok=True)
    meta = trace.metadata
    tau = args.tau if args.tau is not None else meta.get("tau_s")
    theta = meta.get("flip_angle")
    reports = run_analyses(trace, names, tau, theta)
    for name, rep in reports.items():
        write_json(out / f"{name}.json", rep)
    t, s = trace.times, trace.survival
    ok = s > 0
    _plot_csv(out / "plot_log.csv", ["time_s", "ln_s"], zip(t[ok], np.log(s[ok])))
    _plot_csv(out / "plot_sqrt.csv", ["sqrt_time_s", "ln_s"], zip(np.sqrt(t[ok]), np.log(s[ok])))
    failed = [n for n, r in reports.items() if "error" in r]
    for n in names:
        status = f"failed ({reports[n]['error']})" if n in failed else "ok"
        _say(args, f"{n}: {status}")
    return EXIT_NUMERICAL if failed and len(failed) == len(names) else EXIT_OK


def cmd_version(args) -> int:
    print(__version__)
    return EXIT_OK


def _globals(parser, suppress: bool) -> None:
    d = argparse.SUPPRESS if suppress else None
    parser.add_argument("--config", type=Path, default=d, help="YAML experiment configuration")
    parser.add_argument("--output", type=Path, default=d, help="output directory")
    parser.add_argument("--seed", type=int, default=d, help="master seed")
    parser.add_argument("--workers", type=int, default=d, help="worker processes")
    parser.add_argument("--quiet", action="store_true", default=argparse.SUPPRESS if suppress else False)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="prethermal", description="Floquet prethermalization desk lab")
    _globals(p, suppress=False)
    sub = p.add_subparsers(dest="command", required=True)
    common = argparse.ArgumentParser(add_help=False)
    _globals(common, suppress=True)
    g = sub.add_parser("generate", parents=[common], help="write a lattice realization as JSON")
    g.add_argument("--full", action="store_true", help="keep the whole supercell instead of a cluster")
    g.set_defaults(func=cmd_generate)
    sub.add_parser("simulate", parents=[common], help="disorder-averaged survival trace").set_defaults(
        func=cmd_simulate)
    sub.add_parser("sweep", parents=[common], help="parameter sweep with scaling fit").set_defaults(
        func=cmd_sweep)
    pp = sub.add_parser("pipeline", parents=[common], help="synthetic acquisition round trip")
    pp.add_argument("--trace", type=Path, help="survival CSV to acquire (default: simulate one)")
    pp.add_argument("--raw-windows", type=int, default=0, help="also write the first N raw windows")
    pp.add_argument("--moving-average", type=float, help="smoothing window in seconds")
    pp.set_defaults(func=cmd_pipeline)
    a = sub.add_parser("analyze", parents=[common], help="fits, segmentation and spectra of a trace")
    a.add_argument("trace", type=Path)
    a.add_argument("--analyses", default="stretched,one_over_e",
                   help=f"comma-separated subset of {','.join(ANALYSES)}")
    a.add_argument("--tau", type=float, help="pulse spacing in s (default: from trace metadata)")
    a.set_defaults(func=cmd_analyze)
    sub.add_parser("version", parents=[common], help="print the version").set_defaults(func=cmd_version)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code not in (0, None) else EXIT_OK
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO, format="%(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
