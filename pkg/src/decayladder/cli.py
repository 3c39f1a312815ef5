"""Command-line entry point: simulate, sweep, fit, and oracle subcommands.

Every run ends by writing manifest.json describing what was produced.  Data
files are deterministic for a fixed config and seed (the manifest's duration
field is the one thing that varies between identical runs).  Exit codes: 0
on success, 2 for configuration or input-file problems, 3 for numerical
failures.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
import time
from typing import List, Optional

import numpy as np

from . import __version__, serialize
from .config import (apply_seed_override, build_ensemble_config,
                     build_sweep_configs, load_json)
from .ensemble import run_ensemble, sweep, write_sweep_csv
from .exchange import DIM_CAP_DEFAULT, oracle_run
from .ladder import IntegrationError
from .observables import log_trace, mean_decay_time, normalize, transition_time
from .physics import ConfigError
from .traces import (energy_from_power, find_t_zero, fit_xi, pulse_onset,
                     read_sidecar, read_trace_csv, rezero, subtract_background)


def _write_manifest(out_dir: str, subcommand: str, config_path: Optional[str],
                    config_echo: dict, master_seed: Optional[int],
                    outputs: List[str], started: float) -> None:
    manifest = {
        "subcommand": subcommand,
        "config_path": config_path,
        "config": config_echo,
        "master_seed": master_seed,
        "version": __version__,
        "outputs": sorted(os.path.basename(p) for p in outputs),
        "duration_s": time.monotonic() - started,
    }
    serialize.write_json(os.path.join(out_dir, "manifest.json"), manifest)


def _out_path(args, name: str) -> str:
    os.makedirs(args.out, exist_ok=True)
    return os.path.join(args.out, name)


def _cmd_simulate(args) -> int:
    started = time.monotonic()
    config = apply_seed_override(build_ensemble_config(load_json(args.config)),
                                 args.seed)
    summary = run_ensemble(config, threads=args.threads)
    tau_a = config.phys.tau_a

    outputs = []
    path = _out_path(args, "ensemble_summary.csv")
    summary.to_csv(path)
    outputs.append(path)
    path = _out_path(args, "ensemble_summary.json")
    serialize.write_json(path, summary.sidecar_dict())
    outputs.append(path)

    ln_e = log_trace(normalize(summary.energy_trace()))
    ln_p = log_trace(normalize(summary.power_trace()))
    n_rows = min(len(ln_e), len(ln_p))
    path = _out_path(args, "ln_traces.csv")
    serialize.write_csv(path, ["t_ns", "ln_E", "ln_P"],
                        [ln_e.times[:n_rows] * 1e9, ln_e.values[:n_rows],
                         ln_p.values[:n_rows]])
    outputs.append(path)

    window = (0.0, min(2.3 * tau_a, summary.times[-1]))
    stats = mean_decay_time(normalize(summary.energy_trace()), window)
    doc = stats.to_json_dict()
    doc["source"] = "energy"
    path = _out_path(args, "decay_time_stats.json")
    serialize.write_json(path, doc)
    outputs.append(path)

    p_norm = normalize(summary.power_trace())
    if p_norm.span >= 3.0 * tau_a:
        t_star = transition_time(p_norm, tau_a)
        reason = None
    else:
        t_star, reason = None, "record shorter than 3 tau_a"
    doc = {"transition_time_ns": None if t_star is None else t_star * 1e9,
           "hold_ns": 0.5 * tau_a * 1e9, "source": "power"}
    if reason:
        doc["skipped"] = reason
    path = _out_path(args, "transition_time.json")
    serialize.write_json(path, doc)
    outputs.append(path)

    _write_manifest(args.out, "simulate", args.config, config.config_dict(),
                    config.master_seed, outputs, started)
    print(f"simulate: {summary.n_realizations} realizations, "
          f"{len(outputs) + 1} files in {args.out}")
    return 0


def _cmd_sweep(args) -> int:
    started = time.monotonic()
    doc = load_json(args.config)
    if args.seed is not None:
        base = doc.get("base")
        if not isinstance(base, dict):
            raise ConfigError("sweep config needs a 'base' section")
        base["master_seed"] = args.seed
    configs, selector = build_sweep_configs(doc)
    rows = sweep(configs, selector=selector, threads=args.threads)

    path = _out_path(args, "sweep.csv")
    write_sweep_csv(path, rows)
    echo = {"selector": selector, "n_points": len(configs),
            "points": [c.config_dict() for c in configs]}
    _write_manifest(args.out, "sweep", args.config, echo,
                    args.seed, [path], started)
    print(f"sweep: {len(rows)} points in {args.out}")
    return 0


def _cmd_fit(args) -> int:
    started = time.monotonic()
    doc = load_json(args.config)
    fit_doc = doc.pop("fit", {})
    if not isinstance(fit_doc, dict):
        raise ConfigError("fit section must be an object")
    unknown = set(fit_doc) - {"xi_bounds", "xtol"}
    if unknown:
        raise ConfigError(f"unknown key(s) in fit: {', '.join(sorted(unknown))}")
    bounds = fit_doc.get("xi_bounds", [0.0, 2.0])
    if (not isinstance(bounds, list) or len(bounds) != 2):
        raise ConfigError("fit.xi_bounds must be a two-element list")
    xtol = float(fit_doc["xtol"]) if "xtol" in fit_doc else None
    config = apply_seed_override(build_ensemble_config(doc), args.seed)

    try:
        fluor = read_trace_csv(args.trace)
        meta = read_sidecar(args.trace)
        background = 0.0
        if args.pulse:
            pulse = read_trace_csv(args.pulse)
            t0 = find_t_zero(pulse)
            fluor, background = subtract_background(fluor, pulse_onset(pulse))
            fluor = rezero(fluor, t0)
        energy = energy_from_power(fluor)
    except (OSError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc

    result = fit_xi(energy, config, bounds=(float(bounds[0]), float(bounds[1])),
                    xtol=xtol, threads=args.threads)

    doc_out = result.to_json_dict()
    doc_out["background_level"] = background
    doc_out["trace_metadata"] = meta
    path = _out_path(args, "fit_result.json")
    serialize.write_json(path, doc_out)
    _write_manifest(args.out, "fit", args.config, config.config_dict(),
                    config.master_seed, [path], started)
    print(f"fit: xi* = {result.xi_star:.4f} "
          f"(residual {result.residual:.4g}, {result.n_evaluations} evaluations)")
    return 0


def _cmd_oracle(args) -> int:
    started = time.monotonic()
    if args.n < 2:
        raise ConfigError(f"--n must be >= 2, got {args.n}")
    if not 1 <= args.m <= args.n - 1:
        raise ConfigError(f"--m must lie in [1, n-1], got {args.m}")
    if args.trials < 1:
        raise ConfigError(f"--trials must be >= 1, got {args.trials}")
    if not args.kr > 0:
        raise ConfigError(f"--kr must be positive, got {args.kr}")
    if math.comb(args.n, args.m) > DIM_CAP_DEFAULT:
        raise ConfigError(f"subspace dimension C({args.n},{args.m}) exceeds "
                          f"the cap {DIM_CAP_DEFAULT}")

    report = oracle_run(args.n, args.m, trials=args.trials,
                        seed=args.seed if args.seed is not None else 0,
                        kr=args.kr)
    path = _out_path(args, "oracle_report.json")
    serialize.write_json(path, report.to_json_dict())
    echo = {"n": args.n, "m": args.m, "trials": args.trials, "kr": args.kr}
    _write_manifest(args.out, "oracle", None, echo, report.seed, [path], started)
    print(f"oracle: N={args.n} M={args.m} dim={report.dim} "
          f"worst mismatch {report.max_rel_mismatch:.3e}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="decay-ladder",
        description="Stochastic decay-ladder simulations of collective emission")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    def common(p, needs_config=True):
        if needs_config:
            p.add_argument("--config", required=True, help="JSON config file")
        p.add_argument("--seed", type=int, default=None,
                       help="override the master seed")
        p.add_argument("--threads", type=int, default=None,
                       help="worker threads (default: DECAY_LADDER_THREADS or all cores)")
        p.add_argument("--out", default=".", help="output directory")

    p = sub.add_parser("simulate", help="run one averaged ensemble")
    common(p)
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("sweep", help="run a family of ensembles and tabulate decay times")
    common(p)
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("fit", help="fit the shape factor xi to a measured trace")
    common(p)
    p.add_argument("--trace", required=True, help="fluorescence CSV (t_ns, counts)")
    p.add_argument("--pulse", default=None,
                   help="excitation pulse CSV used to locate t0 and the background")
    p.set_defaults(func=_cmd_fit)

    p = sub.add_parser("oracle", help="spectral check of the rate-width formula")
    p.add_argument("--n", type=int, required=True, help="atom count")
    p.add_argument("--m", type=int, required=True, help="excitation number")
    p.add_argument("--trials", type=int, default=20, help="random clouds to test")
    p.add_argument("--seed", type=int, default=None, help="RNG seed")
    p.add_argument("--kr", type=float, default=5.0,
                   help="cloud radius in units of 1/kappa_a")
    p.add_argument("--out", default=".", help="output directory")
    p.set_defaults(func=_cmd_oracle)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (IntegrationError, ValueError, ArithmeticError,
            np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
