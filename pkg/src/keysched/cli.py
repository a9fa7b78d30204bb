"""Command-line interface: run, batch, scan, report, validate.

Exit codes: 0 success, 1 configuration error, 2 runtime invariant violation,
3 I/O failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .config import (
    BASELINE_METHODS,
    METHOD_LABELS,
    RunConfig,
    ScanSpec,
    build_config,
    config_from_dict,
    config_to_dict,
    dump_config_yaml,
    load_config,
    load_scan,
)
from .core import ConfigError, InvariantViolation
from .engine import run_batch, run_scenario
from .metrics import feasibility_margin
from .qkd import SCENARIO_NAMES
from .report import emit_all

logger = logging.getLogger("keysched")

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_INVARIANT = 2
EXIT_IO = 3


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=None, help="override run seed")
    p.add_argument("--out", default=None, help="output directory")
    p.add_argument("--horizon-hours", type=float, default=None,
                   help="override evaluation horizon")
    p.add_argument("--ledger-dump", action="store_true",
                   help="also write the per-slot ledger (gzip CSV)")


def _load_or_build(args) -> RunConfig:
    if args.config:
        cfg = load_config(args.config)
    else:
        cfg = build_config()
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.horizon_hours is not None:
        overrides["horizon_hours"] = args.horizon_hours
    if args.out is not None:
        overrides["out_dir"] = args.out
    if overrides:
        data = _cfg_dict_for_rebuild(cfg)
        data.update(overrides)
        cfg = config_from_dict(data)
    return cfg


def _cfg_dict_for_rebuild(cfg: RunConfig) -> dict:
    snap = config_to_dict(cfg)
    return {
        "scenario": snap["scenario"],
        "method": snap["method"],
        "seed": snap["seed"],
        "terminals": snap["terminals"],
        "clusters": snap["clusters"],
        "horizon_hours": snap["horizon_slots"] * snap["slot_length_s"] / 3600.0,
        "measurable": snap["measurable"],
        "unbounded_keys": snap["unbounded_keys"],
        "out_dir": cfg.out_dir,
    }


def cmd_run(args) -> int:
    cfg = _load_or_build(args)
    out_dir = args.out or cfg.out_dir or "results"
    result = run_scenario(cfg, out_dir=out_dir, dump_ledger=args.ledger_dump)
    s = result.summary
    print(f"{cfg.run_id()}: served={s.totals['served']} "
          f"discard_rate={s.totals['total']:.4f} "
          f"agg_p99_s={s.aggregate_p99_s()}")
    return EXIT_OK


def cmd_batch(args) -> int:
    base = load_config(args.config) if args.config else build_config()
    snap = _cfg_dict_for_rebuild(base)
    scenarios = (args.scenarios.split(",") if args.scenarios
                 else [snap["scenario"]])
    if scenarios == ["all"]:
        scenarios = [s for s in SCENARIO_NAMES if s != "sustained_outage"]
    methods = args.methods.split(",") if args.methods else list(BASELINE_METHODS)
    for m in methods:
        if m not in METHOD_LABELS:
            raise ConfigError(f"unknown method {m!r}")
    seeds = list(range(args.seeds))
    out_dir = args.out or "results"
    configs = []
    for scenario in scenarios:
        for method in methods:
            for seed in seeds:
                data = dict(snap)
                data.update(scenario=scenario, method=method, seed=seed,
                            out_dir=None)
                configs.append(config_from_dict(data))
    dump_for = set()
    if args.dump_timewindow:
        for method in ("ours", "priority"):
            for scenario in scenarios:
                dump_for.add(f"{scenario}__{method}__seed0")
    summaries = run_batch(configs, out_dir=out_dir, parallel=args.parallel,
                          dump_ledger_for=dump_for)
    print(f"batch complete: {len(summaries)}/{len(configs)} runs ok -> {out_dir}")
    return EXIT_OK if len(summaries) == len(configs) else EXIT_INVARIANT


def cmd_scan(args) -> int:
    spec = load_scan(args.config) if args.config else ScanSpec()
    out_root = Path(args.out or "results")
    n_runs = spec.grid_size()
    configs = []
    for rho in spec.rho_grid:
        for beta in spec.beta_grid:
            for seed in spec.seeds:
                from .config import SchedulerParams

                cfg = build_config(
                    scenario=spec.scenario, method="ours", seed=seed,
                    horizon_hours=spec.horizon_hours,
                    params=SchedulerParams(rho=rho, beta=beta),
                    tag=f"rho{rho}_beta{beta}",
                )
                configs.append(cfg)
    logger.info("sensitivity scan: %d runs", n_runs)
    run_batch(configs, out_dir=out_root / "sensitivity", parallel=args.parallel)
    if spec.n_terminals:
        scale_cfgs = []
        for n in spec.n_terminals:
            for method in ("ours", "priority"):
                for seed in spec.seeds:
                    scale_cfgs.append(build_config(
                        scenario=spec.scenario, method=method, seed=seed,
                        terminals=n, horizon_hours=spec.horizon_hours,
                        tag=f"n{n}"))
        logger.info("scalability scan: %d runs", len(scale_cfgs))
        run_batch(scale_cfgs, out_dir=out_root / "scalability",
                  parallel=args.parallel)
    print(f"scan complete -> {out_root}")
    return EXIT_OK


def cmd_report(args) -> int:
    written = emit_all(args.results_dir, out_dir=args.out)
    print(f"wrote {len(written)} figure CSVs")
    return EXIT_OK


def cmd_validate(args) -> int:
    cfg = load_config(args.config) if args.config else build_config()
    rates = cfg.mean_rates()
    print(f"config ok: scenario={cfg.scenario} method={cfg.method_label} "
          f"terminals={cfg.traffic.terminals} horizon={cfg.clock.horizon_slots} slots")
    for label, model in sorted(cfg.regime_models.items()):
        fm = feasibility_margin(rates, cfg.class_specs, model.base_rate)
        print(f"  regime {label:<9} G_mean={fm['lhs_g_mean']:>8.0f} "
              f"theta_demand={fm['rhs_otp']:>8.1f} "
              f"feasible={fm['feasible']} headroom={fm['headroom']:+.2%}")
    return EXIT_OK


def cmd_make_config(args) -> int:
    cfg = build_config(scenario=args.scenario, method=args.method, seed=args.seed or 0)
    dump_config_yaml(cfg, args.output)
    print(f"wrote {args.output}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="keysched",
        description="Slotted simulator for key-budgeted message scheduling.",
    )
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="execute one scenario run")
    p.add_argument("config", nargs="?", help="config YAML (defaults when omitted)")
    _add_common(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("batch", help="run a methods x seeds comparison batch")
    p.add_argument("config", nargs="?", help="base config YAML")
    p.add_argument("--seeds", type=int, default=10)
    p.add_argument("--methods", default=",".join(BASELINE_METHODS))
    p.add_argument("--scenarios", default="all",
                   help="comma list or 'all' (three evaluation regimes)")
    p.add_argument("--parallel", type=int, default=1)
    p.add_argument("--out", default="results")
    p.add_argument("--dump-timewindow", action="store_true",
                   help="dump ledgers for the time-window figure runs")
    p.set_defaults(func=cmd_batch)

    p = sub.add_parser("scan", help="parameter grid scan")
    p.add_argument("config", nargs="?", help="scan YAML")
    p.add_argument("--parallel", type=int, default=1)
    p.add_argument("--out", default="results")
    p.set_defaults(func=cmd_scan)

    p = sub.add_parser("report", help="emit per-figure CSVs from results")
    p.add_argument("results_dir")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("validate", help="validate a config and report feasibility")
    p.add_argument("config", nargs="?")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("make-config", help="write a default config YAML")
    p.add_argument("--scenario", default="normal", choices=sorted(SCENARIO_NAMES))
    p.add_argument("--method", default="ours")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-o", "--output", default="config.yaml")
    p.set_defaults(func=cmd_make_config)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except ConfigError as exc:
        logger.error("configuration error: %s", exc)
        return EXIT_CONFIG
    except InvariantViolation as exc:
        logger.error("invariant violation: %s", exc)
        return EXIT_INVARIANT
    except OSError as exc:
        logger.error("I/O error: %s", exc)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
