"""Command-line front end.

Subcommands cover the single-run simulators (simulate-ff, pure-growth),
the percolation estimators (theta, sdp, sdp-scan), the depth-sweep
experiments (converge, scaling), the schedule classifier (regimes) and
the exact small-tree oracle comparison (oracle-check).

Configuration precedence per option: command-line flag, then environment
(TREEFIRE_SEED / TREEFIRE_WORKERS only), then the INI config file given
via --config (section [common] plus a section named after the
subcommand), then built-in defaults.  All outputs are deterministic
functions of the resolved configuration: rerunning a subcommand with the
same config and seed reproduces every output byte.

Exit codes: 0 success, 2 configuration error, 3 runtime cap exceeded.
"""

from __future__ import annotations

import argparse
import configparser
import json
import math
import os
import sys

import numpy as np

from . import analytics, engine, experiments, growth, sdp
from .analytics import FuncSpec, LambdaSchedule
from .rng import StreamFamily
from .topology import TreeTopology

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3

ENV_SEED = "TREEFIRE_SEED"
ENV_WORKERS = "TREEFIRE_WORKERS"


class ConfigError(ValueError):
    pass


def _load_config_file(path: str, section: str) -> dict:
    parser = configparser.ConfigParser()
    read = parser.read(path)
    if not read:
        raise ConfigError(f"config file {path!r} not found or unreadable")
    merged: dict[str, str] = {}
    for sec in ("common", section):
        if parser.has_section(sec):
            merged.update(parser.items(sec))
    return merged


def _resolve(args: argparse.Namespace, defaults: dict) -> dict:
    """Merge flags > env > config file > defaults for one subcommand."""
    file_cfg = {}
    if args.config:
        file_cfg = _load_config_file(args.config, args.command)
    out = {}
    for key, default in defaults.items():
        flag_val = getattr(args, key, None)
        if flag_val is not None:
            out[key] = flag_val
            continue
        if key == "seed" and ENV_SEED in os.environ:
            out[key] = int(os.environ[ENV_SEED])
            continue
        if key == "workers" and ENV_WORKERS in os.environ:
            out[key] = int(os.environ[ENV_WORKERS])
            continue
        if key in file_cfg:
            raw = file_cfg[key]
            caster = type(default) if default is not None else str
            try:
                if caster is bool:
                    out[key] = raw.strip().lower() in ("1", "true", "yes")
                elif default is not None and isinstance(default, (int, float)):
                    out[key] = caster(raw)
                else:
                    out[key] = raw
            except ValueError as exc:
                raise ConfigError(f"bad config value {key}={raw!r}: {exc}") from exc
            continue
        out[key] = default
    return out


def _parse_int_list(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(x) for x in text.replace(",", " ").split())
    except ValueError as exc:
        raise ConfigError(f"bad integer list {text!r}") from exc


def _parse_float_list(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(x) for x in text.replace(",", " ").split())
    except ValueError as exc:
        raise ConfigError(f"bad float list {text!r}") from exc


def _emit_json(payload: dict, out: str | None) -> None:
    text = json.dumps(payload, sort_keys=True, indent=2, allow_nan=False) + "\n"
    if out:
        with open(out, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _dry_run(cfg: dict, command: str) -> int:
    _emit_json({"command": command, "resolved_config": cfg}, None)
    return EXIT_OK


# --------------------------------------------------------------------------
# subcommands


def _cmd_simulate_ff(args) -> int:
    defaults = dict(r=2, depth=4, lam=None, horizon=1.0, seed=0, trial=0,
                    snapshot_time=-1.0, out=None, max_events=engine.DEFAULT_MAX_EVENTS)
    cfg = _resolve(args, defaults)
    if args.dry_run:
        return _dry_run(cfg, "simulate-ff")
    if cfg["lam"] is None:
        raise ConfigError("simulate-ff requires --lambda")
    if cfg["lam"] <= 0.0:
        raise ConfigError(
            "--lambda 0 is the degenerate no-fire case; use the pure-growth "
            "subcommand for the bare growth field"
        )
    topo = TreeTopology(cfg["r"], cfg["depth"])
    streams = StreamFamily(cfg["seed"], cfg["trial"])
    snap = cfg["snapshot_time"] if cfg["snapshot_time"] >= 0.0 else None
    state = engine.run(
        topo, streams, cfg["lam"], cfg["horizon"],
        snapshot_time=snap, max_events=int(cfg["max_events"]),
    )
    if cfg["out"]:
        engine.event_log_to_csv(state, cfg["out"])
    payload = {
        "schema_version": experiments.SCHEMA_VERSION,
        "config": {k: v for k, v in cfg.items() if k != "out"},
        "final_occupied": int(state.final_occupancy.sum()),
        "ignitions": int(state.ignition_times.shape[0]),
        "burns": int(state.burn_times.shape[0]),
        "burned_mass": int(state.burn_sizes.sum()),
    }
    _emit_json(payload, None)
    return EXIT_OK


def _cmd_pure_growth(args) -> int:
    defaults = dict(r=2, depth=4, t=1.0, seed=0, trial=0, out=None)
    cfg = _resolve(args, defaults)
    if args.dry_run:
        return _dry_run(cfg, "pure-growth")
    topo = TreeTopology(cfg["r"], cfg["depth"])
    snap = growth.snapshot(topo, StreamFamily(cfg["seed"], cfg["trial"]), cfg["t"])
    if cfg["out"]:
        with open(cfg["out"], "w", newline="") as fh:
            fh.write("vertex,occupied\n")
            for v in range(topo.vertex_count):
                fh.write(f"{v},{int(snap.occupied[v])}\n")
    payload = {
        "schema_version": experiments.SCHEMA_VERSION,
        "config": {k: v for k, v in cfg.items() if k != "out"},
        "occupied": int(snap.occupied.sum()),
        "vertex_count": topo.vertex_count,
        "root_cluster_reaches_boundary": growth.infinite_proxy(snap, 0),
    }
    _emit_json(payload, None)
    return EXIT_OK


def _cmd_theta(args) -> int:
    defaults = dict(r=2, p=0.75, depth=0, trials=0, seed=0, out=None)
    cfg = _resolve(args, defaults)
    if args.dry_run:
        return _dry_run(cfg, "theta")
    payload = {
        "schema_version": experiments.SCHEMA_VERSION,
        "config": {k: v for k, v in cfg.items() if k != "out"},
        "theta_fixed_point": analytics.theta_fixed_point(cfg["r"], cfg["p"]),
    }
    if cfg["trials"] > 0:
        if cfg["depth"] < 1:
            raise ConfigError("Monte Carlo theta needs --depth >= 1")
        freq = growth.boundary_reach_frequency(
            cfg["seed"], cfg["r"], cfg["depth"], cfg["p"], cfg["trials"]
        )
        payload["boundary_reach_estimate"] = freq
    _emit_json(payload, cfg["out"])
    return EXIT_OK


def _cmd_sdp(args) -> int:
    defaults = dict(r=2, depth=10, p=-1.0, delta=-1.0, tau=-1.0, eps=-1.0,
                    trials=1000, seed=0, out=None)
    cfg = _resolve(args, defaults)
    if args.dry_run:
        return _dry_run(cfg, "sdp")
    topo = TreeTopology(cfg["r"], cfg["depth"])
    if cfg["tau"] > 0.0:
        config = sdp.SdpConfig.from_times(topo, cfg["tau"], cfg["eps"])
    elif cfg["p"] > 0.0:
        if cfg["delta"] < 0.0:
            raise ConfigError("sdp needs --delta along with --p")
        config = sdp.SdpConfig.from_probabilities(topo, cfg["p"], cfg["delta"])
    else:
        raise ConfigError("sdp needs either (--p, --delta) or (--tau, --eps)")
    est = sdp.estimate_theta(config, cfg["seed"], cfg["trials"])
    lo, hi = est.wilson()
    payload = {
        "schema_version": experiments.SCHEMA_VERSION,
        "config": {k: v for k, v in cfg.items() if k != "out"},
        "p": config.p,
        "delta": config.delta,
        "estimate": est.estimate,
        "ci_low": lo,
        "ci_high": hi,
        "trials": est.trials,
        "hits": est.hits,
    }
    _emit_json(payload, cfg["out"])
    return EXIT_OK


def _cmd_sdp_scan(args) -> int:
    defaults = dict(r=2, p=0.75, deltas="0.4 0.2 0.1 0.05", depths="8 12 16",
                    trials=1000, seed=0, out=None, out_json=None)
    cfg = _resolve(args, defaults)
    if args.dry_run:
        return _dry_run(cfg, "sdp-scan")
    deltas = _parse_float_list(cfg["deltas"])
    depths = _parse_int_list(cfg["depths"])
    result = sdp.critical_delta_scan(
        cfg["r"], cfg["p"], deltas, depths, cfg["seed"], cfg["trials"]
    )
    if cfg["out"]:
        with open(cfg["out"], "w", newline="") as fh:
            fh.write(
                "p,delta,depth,trials,hits,estimate,ci_low,ci_high,"
                "zero_indistinguishable\n"
            )
            for row in result.rows:
                fh.write(
                    f"{row.p!r},{row.delta!r},{row.depth},{row.trials},"
                    f"{row.hits},{row.estimate!r},{row.ci_low!r},"
                    f"{row.ci_high!r},{int(row.zero_indistinguishable)}\n"
                )
    payload = {
        "schema_version": experiments.SCHEMA_VERSION,
        "config": {k: v for k, v in cfg.items() if k not in ("out", "out_json")},
        "critical_delta": {
            f"p={p:g},n={n}": v for (p, n), v in result.critical_delta.items()
        },
        "extrapolated_heuristic": {
            f"p={p:g},delta={d:g}": v for (p, d), v in result.extrapolated.items()
        },
    }
    _emit_json(payload, cfg["out_json"])
    return EXIT_OK


def _experiment_from_cfg(cfg: dict) -> experiments.ConvergenceExperiment:
    return experiments.ConvergenceExperiment(
        r=cfg["r"],
        tau=cfg["tau"],
        delta=cfg["delta"],
        n_list=_parse_int_list(cfg["n_list"]),
        trials=cfg["trials"],
        seed=cfg["seed"],
        targets=_parse_int_list(cfg["targets"]),
        g=FuncSpec.parse(cfg["g"]),
        f=FuncSpec.parse(cfg["f"]),
        workers=cfg["workers"],
        max_events=int(cfg["max_events"]),
    )


def _cmd_converge(args) -> int:
    defaults = dict(r=2, tau=1.0, delta=0.3, n_list="8 10 12 14 16",
                    trials=200, seed=0, targets="0", g="const:1", f="sqrt",
                    workers=1, mode="equality", max_events=engine.DEFAULT_MAX_EVENTS,
                    out_json=None, out_csv=None)
    cfg = _resolve(args, defaults)
    if args.dry_run:
        return _dry_run(cfg, "converge")
    exp = _experiment_from_cfg(cfg)
    mode = cfg["mode"]
    if mode == "equality":
        summary = experiments.run_equality_destruction(exp)
    elif mode in ("after", "before"):
        summary = experiments.run_destruction_direction(exp, mode)
    else:
        raise ConfigError(f"--mode must be equality/after/before, got {mode!r}")
    if cfg["out_json"]:
        summary.write_json(cfg["out_json"])
    if cfg["out_csv"]:
        summary.write_csv(cfg["out_csv"])
    if not cfg["out_json"]:
        sys.stdout.write(summary.to_json() + "\n")
    return EXIT_OK


def _cmd_scaling(args) -> int:
    defaults = dict(r=2, tau=1.0, delta=0.3, n_list="8 10 12 14 16",
                    trials=200, seed=0, targets="0", g="const:1", f="sqrt",
                    workers=1, max_events=engine.DEFAULT_MAX_EVENTS,
                    out_json=None, out_csv=None)
    cfg = _resolve(args, defaults)
    if args.dry_run:
        return _dry_run(cfg, "scaling")
    summary = experiments.run_cluster_scaling(_experiment_from_cfg(cfg))
    if cfg["out_json"]:
        summary.write_json(cfg["out_json"])
    if cfg["out_csv"]:
        summary.write_csv(cfg["out_csv"])
    if not cfg["out_json"]:
        sys.stdout.write(summary.to_json() + "\n")
    return EXIT_OK


def _cmd_regimes(args) -> int:
    defaults = dict(r=2, form="direct", rate_func="const:0.3", tau=1.0,
                    n_list="8 16 24 32 40 48", out=None)
    cfg = _resolve(args, defaults)
    if args.dry_run:
        return _dry_run(cfg, "regimes")
    func = FuncSpec.parse(cfg["rate_func"])
    if cfg["form"] == "direct":
        schedule = analytics.LambdaSchedule(cfg["r"], "direct", func)
    elif cfg["form"] == "g":
        schedule = LambdaSchedule.from_g(cfg["r"], cfg["tau"], func)
    else:
        raise ConfigError(f"--form must be direct or g, got {cfg['form']!r}")
    try:
        fit = analytics.classify_regime(schedule, _parse_int_list(cfg["n_list"]))
    except analytics.AmbiguousRegime as exc:
        raise ConfigError(str(exc)) from exc
    payload = {
        "schema_version": experiments.SCHEMA_VERSION,
        "config": {k: v for k, v in cfg.items() if k != "out"},
        "regime": fit.regime.value,
        "slope": fit.slope,
        "fitted_m": fit.fitted_m,
        "residual": fit.residual,
    }
    _emit_json(payload, cfg["out"])
    return EXIT_OK


def _cmd_oracle_check(args) -> int:
    defaults = dict(which="b0", r=2, lam=1.0, t=1.0, trials=10000, seed=0, out=None)
    cfg = _resolve(args, defaults)
    if args.dry_run:
        return _dry_run(cfg, "oracle-check")
    which = cfg["which"]
    if which not in ("b0", "b1"):
        raise ConfigError(f"--which must be b0 or b1, got {which!r}")
    depth = 0 if which == "b0" else 1
    topo = TreeTopology(cfg["r"], depth)
    exact = analytics.ctmc_occupancy(cfg["r"], depth, cfg["lam"], cfg["t"], 0)
    hits = 0
    buffers = engine.EngineBuffers.for_topology(topo)
    for trial in range(cfg["trials"]):
        state = engine.run(
            topo, StreamFamily(cfg["seed"], trial), cfg["lam"], cfg["t"],
            record_members=False, buffers=buffers,
        )
        hits += int(state.final_occupancy[0])
    est = hits / cfg["trials"]
    se = math.sqrt(max(exact * (1 - exact), 1e-12) / cfg["trials"])
    payload = {
        "schema_version": experiments.SCHEMA_VERSION,
        "config": {k: v for k, v in cfg.items() if k != "out"},
        "exact": exact,
        "estimate": est,
        "se": se,
        "abs_error_in_se": abs(est - exact) / se,
    }
    _emit_json(payload, cfg["out"])
    return EXIT_OK


# --------------------------------------------------------------------------


def _add_common(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--config", help="INI config file")
    sub.add_argument("--dry-run", action="store_true",
                     help="print the resolved configuration and exit")
    sub.add_argument("--seed", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="treefire",
        description="Forest-fire and self-destructive percolation on finite trees",
    )
    subs = parser.add_subparsers(dest="command", required=True)

    p = subs.add_parser("simulate-ff", help="run the forest-fire engine once")
    _add_common(p)
    p.add_argument("--r", type=int)
    p.add_argument("--depth", type=int)
    p.add_argument("--lambda", dest="lam", type=float)
    p.add_argument("--horizon", type=float)
    p.add_argument("--trial", type=int)
    p.add_argument("--snapshot-time", dest="snapshot_time", type=float)
    p.add_argument("--max-events", dest="max_events", type=int)
    p.add_argument("--out", help="event-log CSV path")
    p.set_defaults(func=_cmd_simulate_ff)

    p = subs.add_parser("pure-growth", help="pure-growth occupancy snapshot")
    _add_common(p)
    p.add_argument("--r", type=int)
    p.add_argument("--depth", type=int)
    p.add_argument("--t", type=float)
    p.add_argument("--trial", type=int)
    p.add_argument("--out", help="occupancy CSV path")
    p.set_defaults(func=_cmd_pure_growth)

    p = subs.add_parser("theta", help="percolation probability (exact and MC)")
    _add_common(p)
    p.add_argument("--r", type=int)
    p.add_argument("--p", type=float)
    p.add_argument("--depth", type=int)
    p.add_argument("--trials", type=int)
    p.add_argument("--out")
    p.set_defaults(func=_cmd_theta)

    p = subs.add_parser("sdp", help="stabilise-vacate-refresh estimate")
    _add_common(p)
    p.add_argument("--r", type=int)
    p.add_argument("--depth", type=int)
    p.add_argument("--p", type=float)
    p.add_argument("--delta", type=float)
    p.add_argument("--tau", type=float)
    p.add_argument("--eps", type=float)
    p.add_argument("--trials", type=int)
    p.add_argument("--out")
    p.set_defaults(func=_cmd_sdp)

    p = subs.add_parser("sdp-scan", help="delta/depth scan of the refresh model")
    _add_common(p)
    p.add_argument("--r", type=int)
    p.add_argument("--p", type=float)
    p.add_argument("--deltas")
    p.add_argument("--depths")
    p.add_argument("--trials", type=int)
    p.add_argument("--out", help="CSV path")
    p.add_argument("--out-json", dest="out_json")
    p.set_defaults(func=_cmd_sdp_scan)

    for name, fn in (("converge", _cmd_converge), ("scaling", _cmd_scaling)):
        p = subs.add_parser(name, help=f"{name} depth-sweep experiment")
        _add_common(p)
        p.add_argument("--r", type=int)
        p.add_argument("--tau", type=float)
        p.add_argument("--delta", type=float)
        p.add_argument("--n-list", dest="n_list")
        p.add_argument("--trials", type=int)
        p.add_argument("--targets")
        p.add_argument("--g")
        p.add_argument("--f")
        p.add_argument("--workers", type=int)
        p.add_argument("--max-events", dest="max_events", type=int)
        if name == "converge":
            p.add_argument("--mode", choices=("equality", "after", "before"))
        p.add_argument("--out-json", dest="out_json")
        p.add_argument("--out-csv", dest="out_csv")
        p.set_defaults(func=fn)

    p = subs.add_parser("regimes", help="classify a lightning-rate schedule")
    _add_common(p)
    p.add_argument("--r", type=int)
    p.add_argument("--form", choices=("direct", "g"))
    p.add_argument("--func", dest="rate_func")
    p.add_argument("--tau", type=float)
    p.add_argument("--n-list", dest="n_list")
    p.add_argument("--out")
    p.set_defaults(func=_cmd_regimes)

    p = subs.add_parser("oracle-check", help="engine vs exact small-tree oracle")
    _add_common(p)
    p.add_argument("--which", choices=("b0", "b1"))
    p.add_argument("--r", type=int)
    p.add_argument("--lambda", dest="lam", type=float)
    p.add_argument("--t", type=float)
    p.add_argument("--trials", type=int)
    p.add_argument("--out")
    p.set_defaults(func=_cmd_oracle_check)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ValueError) as exc:
        sys.stderr.write(f"configuration error: {exc}\n")
        return EXIT_CONFIG
    except engine.EventCapExceeded as exc:
        sys.stderr.write(f"runtime cap exceeded: {exc}\n")
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
