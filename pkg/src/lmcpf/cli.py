"""Command-line driver.

Subcommands: ``cycle``, ``forecast``, ``weights``, ``simhist``, ``diag``.
Failures print one JSON line ``{"status": "error", ...}`` on stderr and exit
nonzero.
"""
import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .config import ExperimentConfig, from_dict, load_config
from .diagnostics import DecayModel, fit_decay_exponent, histogram, simulate_norms
from .errors import LmcpfError
from .experiment import (
    compare_weights_curve,
    instance_from_record,
    load_instance,
    load_states,
    manifest,
    recompute_point_diagnostics,
    records_from_states,
    run_cycle_experiment,
    run_forecasts,
    save_instance,
    write_csv,
    write_forecast_table,
    write_outputs,
)

EXIT_USER = 2
EXIT_INTERNAL = 1


def _config(args):
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    if args.seed is not None:
        cfg = cfg.replace(seed=args.seed)
    if getattr(args, "filter", None):
        cfg = cfg.with_filter(kind=args.filter)
    if getattr(args, "workers", None):
        cfg = cfg.replace(workers=args.workers)
    return cfg


def _out(args, cfg):
    out = Path(args.out if args.out else cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _emit(summary):
    print(json.dumps({"status": "ok", **summary}, sort_keys=True))


def cmd_cycle(args):
    cfg = _config(args)
    out = _out(args, cfg)
    result = run_cycle_experiment(cfg)
    write_outputs(result, out)
    _emit({"command": "cycle", "out": str(out), "filter": cfg.filter.kind.value,
           "rmse_a": result.mean_score("rmse_a"), "rmse_free": result.rmse_free,
           "spread_mean": result.mean_score("spread_mean")})


def cmd_forecast(args):
    cfg = _config(args)
    out = _out(args, cfg)
    if args.states:
        result = records_from_states(cfg, load_states(args.states))
    else:
        result = run_cycle_experiment(cfg)
        write_outputs(result, out)
    table = run_forecasts(cfg, result)
    write_forecast_table(table, out / "forecast.csv")
    _emit({"command": "forecast", "out": str(out),
           "rmse_by_lead": {str(s.lead): s.rmse for s in table}})


def cmd_weights(args):
    cfg = _config(args)
    out = _out(args, cfg)
    if args.instance:
        q = load_instance(args.instance)
    else:
        # take the instance from a short run of the configured experiment
        cycles = max(args.cycle + 1, 1)
        short = cfg.replace(cycles=cycles, spinup_cycles=0)
        result = run_cycle_experiment(short)
        q = instance_from_record(short, result.records[args.cycle], args.point)
        save_instance(q, out / "instance.npz")
    kappas = np.linspace(args.kappa_min, args.kappa_max, args.kappa_steps)
    rows = compare_weights_curve(q, kappas)
    write_csv(out / "weights_curve.csv", ("kappa", "member", "exact", "approx"), rows)
    _emit({"command": "weights", "out": str(out), "members": q.L, "kappas": len(kappas)})


def cmd_simhist(args):
    out = Path(args.out or "out")
    out.mkdir(parents=True, exist_ok=True)
    seed = 0 if args.seed is None else args.seed
    model = DecayModel(args.eta, args.nu)
    norms = simulate_norms(model, args.dim, args.draws, seed)
    hist = histogram(norms, args.bin_width)
    rows = zip(hist.edges[:-1], hist.edges[1:], hist.counts)
    write_csv(out / "simhist.csv", ("left", "right", "count"), rows)
    fit = fit_decay_exponent(model.sigmas(args.dim))
    _emit({"command": "simhist", "out": str(out), "mean": hist.mean, "median": hist.median,
           "fit_eta": fit.eta, "fit_nu": fit.nu})


def cmd_diag(args):
    states_dir = Path(args.states or args.out or "out")
    if args.config:
        cfg = _config(args)
    else:
        man = json.loads((states_dir / "manifest.json").read_text())
        cfg = from_dict(man["config"])
    out = Path(args.out or states_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = list(recompute_point_diagnostics(cfg, load_states(states_dir)))
    write_csv(out / "diag_points.csv", ("cycle", "point", "location", "d_C", "d_min", "rho_raw", "n_obs"), rows)
    (out / "diag_manifest.json").write_text(json.dumps(manifest(cfg, {"rows": len(rows)}), indent=2,
                                                       sort_keys=True) + "\n")
    _emit({"command": "diag", "out": str(out), "rows": len(rows)})


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON experiment config")
    common.add_argument("--seed", type=int, help="override the experiment seed")
    common.add_argument("--out", help="output directory")

    filt = argparse.ArgumentParser(add_help=False)
    filt.add_argument("--filter", choices=["letkf", "lapf", "lmcpf"], help="override filter kind")
    filt.add_argument("--workers", type=int, help="threads for the per-point analyses")

    p = argparse.ArgumentParser(prog="lmcpf", description="Localized mixture-coefficient particle filter experiments")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("cycle", parents=[common, filt], help="run a cycled twin experiment")
    s.set_defaults(func=cmd_cycle)

    s = sub.add_parser("forecast", parents=[common, filt], help="score free forecasts from each analysis")
    s.add_argument("--states", help="directory with states.npz from a previous cycle run")
    s.set_defaults(func=cmd_forecast)

    s = sub.add_parser("weights", parents=[common, filt], help="exact vs approximate weights along kappa")
    s.add_argument("--instance", help="saved instance .npz")
    s.add_argument("--cycle", type=int, default=0)
    s.add_argument("--point", type=int, default=0)
    s.add_argument("--kappa-min", type=float, default=1e-3)
    s.add_argument("--kappa-max", type=float, default=5.0)
    s.add_argument("--kappa-steps", type=int, default=51)
    s.set_defaults(func=cmd_weights)

    s = sub.add_parser("simhist", parents=[common], help="norm histogram of decaying-variance draws")
    s.add_argument("--eta", type=float, default=4.0)
    s.add_argument("--nu", type=float, default=0.0)
    s.add_argument("--dim", type=int, default=40)
    s.add_argument("--draws", type=int, default=100_000)
    s.add_argument("--bin-width", type=float)
    s.set_defaults(func=cmd_simhist)

    s = sub.add_parser("diag", parents=[common], help="recompute point diagnostics from saved states")
    s.add_argument("--states", help="directory with states.npz and manifest.json")
    s.set_defaults(func=cmd_diag)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args.func(args)
    except (LmcpfError, ValueError, OSError) as err:
        _fail(err, EXIT_USER)
        return EXIT_USER
    except Exception as err:  # noqa: BLE001 - last-resort machine-readable report
        _fail(err, EXIT_INTERNAL)
        return EXIT_INTERNAL
    return 0


def _fail(err, code):
    line = {"status": "error", "error": type(err).__name__, "message": str(err), "exit_code": code}
    for key in ("member", "cycle"):
        if getattr(err, key, None) is not None:
            line[key] = getattr(err, key)
    print(json.dumps(line, sort_keys=True), file=sys.stderr)


if __name__ == "__main__":
    sys.exit(main())
