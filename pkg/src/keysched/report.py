"""Per-figure CSV emission from completed run summaries.

One file per evaluation figure/table. All statistics are computed here from
persisted run summaries (plus optional ledger dumps for the time-window
trace); the rendering layer does no numerical work beyond plotting.
"""

from __future__ import annotations

import csv
import gzip
import json
import logging
from collections import defaultdict
from pathlib import Path

from .core import CLASS_ORDER, CRITICAL_CLASSES
from .metrics import RunSummary, ccdf_points, mean_ci95

logger = logging.getLogger(__name__)

FIGURE_CSVS = (
    "p99_by_class_method.csv",
    "discards_by_method.csv",
    "timewindow.csv",
    "regime_violin.csv",
    "recovery.csv",
    "ccdf_crit.csv",
    "reserve_scatter.csv",
    "power_metrics.csv",
    "sensitivity_grid.csv",
    "scalability.csv",
)

METHOD_PLOT_ORDER = ("fifo", "priority", "staticquota", "ours", "ideal",
                     "ours_noforecast", "ours_noreserve", "ours_nodegrade", "ours_wrr")


def load_summaries(results_dir: str | Path,
                   exclude: tuple[Path, ...] = ()) -> list[RunSummary]:
    """All run summaries under a results tree, sorted for determinism."""
    excluded = [Path(e).resolve() for e in exclude]
    out = []
    for path in sorted(Path(results_dir).glob("**/summary.json")):
        resolved = path.resolve()
        if any(e == resolved or e in resolved.parents for e in excluded):
            continue
        with open(path) as fh:
            out.append(RunSummary.from_json_dict(json.load(fh)))
    return out


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        return f"{x:.6g}"
    return str(x)


def _write(path: Path, header: list[str], rows: list[list]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(x) for x in row])


def _group(summaries, key):
    groups = defaultdict(list)
    for s in summaries:
        groups[key(s)].append(s)
    return dict(sorted(groups.items()))


def _sorted_methods(methods) -> list[str]:
    order = {m: i for i, m in enumerate(METHOD_PLOT_ORDER)}
    return sorted(methods, key=lambda m: (order.get(m, 99), m))


def _agg(values):
    vals = [v for v in values if v is not None]
    if not vals:
        return None, None
    return mean_ci95(vals)


def emit_p99_by_class_method(summaries: list[RunSummary], out: Path) -> None:
    rows = []
    groups = _group(summaries, lambda s: (s.scenario, s.method))
    for (scenario, method), runs in groups.items():
        for c in CLASS_ORDER:
            p99, p99_ci = _agg([r.per_class[c.label]["delay_p99_s"] for r in runs])
            p50, _ = _agg([r.per_class[c.label]["delay_p50_s"] for r in runs])
            p95, _ = _agg([r.per_class[c.label]["delay_p95_s"] for r in runs])
            p99c, p99c_ci = _agg(
                [r.per_class[c.label]["delay_p99_censored_s"] for r in runs])
            rows.append([scenario, method, c.label, len(runs), p99, p99_ci,
                         p50, p95, p99c, p99c_ci])
    _write(out, ["scenario", "method", "class", "n_seeds", "p99_mean_s", "p99_ci95_s",
                 "p50_mean_s", "p95_mean_s", "p99_censored_mean_s",
                 "p99_censored_ci95_s"], rows)


def emit_discards_by_method(summaries: list[RunSummary], out: Path) -> None:
    rows = []
    for (scenario, method), runs in _group(
            summaries, lambda s: (s.scenario, s.method)).items():
        total, total_ci = _agg([r.totals["total"] for r in runs])
        passive, passive_ci = _agg([r.totals["passive"] for r in runs])
        active, active_ci = _agg([r.totals["active"] for r in runs])
        eff, eff_ci = _agg([r.keys["efficiency"] for r in runs])
        eff_crit, _ = _agg([r.keys["per_crit_spent_bit"] for r in runs])
        eff_gen, _ = _agg([r.keys["per_generated_bit"] for r in runs])
        rows.append([scenario, method, len(runs), total, total_ci, passive,
                     passive_ci, active, active_ci, eff, eff_ci, eff_crit, eff_gen])
    _write(out, ["scenario", "method", "n_seeds", "total_mean", "total_ci95",
                 "passive_mean", "passive_ci95", "active_mean", "active_ci95",
                 "key_eff_mean", "key_eff_ci95", "key_eff_crit_spend",
                 "key_eff_generated"], rows)


def emit_regime_violin(summaries: list[RunSummary], out: Path) -> None:
    rows = []
    for s in sorted(summaries, key=lambda s: (s.scenario, s.method, s.seed)):
        rows.append([s.scenario, s.method, s.seed,
                     s.aggregate_p99_s(), s.aggregate_p99_s(censored=True),
                     s.critical_p99_s(), s.totals["total"]])
    _write(out, ["scenario", "method", "seed", "p99_s", "p99_censored_s",
                 "crit_p99_s", "discard_rate"], rows)


def emit_recovery(summaries: list[RunSummary], out: Path) -> None:
    rows = []
    for s in sorted(summaries, key=lambda s: (s.scenario, s.method, s.seed)):
        for entry in s.recovery:
            rows.append([s.scenario, s.measurable, s.method, s.seed,
                         entry["switch_slot"], entry["from_regime"],
                         entry["to_regime"], entry["recovery_s"], entry["capped"]])
    _write(out, ["scenario", "measurable", "method", "seed", "switch_slot",
                 "from_regime", "to_regime", "recovery_s", "capped"], rows)


def emit_ccdf_crit(summaries: list[RunSummary], out: Path) -> None:
    rows = []
    for (scenario, method), runs in _group(
            summaries, lambda s: (s.scenario, s.method)).items():
        pooled: dict[int, int] = defaultdict(int)
        for r in runs:
            for k, v in r.critical_hist().items():
                pooled[k] += v
        dt = runs[0].slot_length_s
        for wait, ccdf in ccdf_points(dict(pooled)):
            rows.append([scenario, method, wait * dt, ccdf])
    _write(out, ["scenario", "method", "delay_s", "ccdf"], rows)


def emit_reserve_scatter(summaries: list[RunSummary], out: Path) -> None:
    rows = []
    for s in sorted(summaries, key=lambda s: (s.scenario, s.method, s.seed)):
        for i, act in enumerate(s.reserve.get("activations", [])):
            rows.append([s.scenario, s.method, s.seed, i,
                         act["depth_bits"], act["duration_s"]])
    _write(out, ["scenario", "method", "seed", "activation", "depth_bits",
                 "duration_s"], rows)


def emit_power_metrics(summaries: list[RunSummary], out: Path) -> None:
    rows = []
    for (scenario, method), runs in _group(
            summaries, lambda s: (s.scenario, s.method)).items():
        runs = [r for r in runs if r.power]
        if not runs:
            continue
        rmse, rmse_ci = _agg([r.power["rmse_kw"] for r in runs])
        nrmse, nrmse_ci = _agg([r.power["nrmse"] for r in runs])
        count, count_ci = _agg([float(r.power["violation_count"]) for r in runs])
        dur, dur_ci = _agg([r.power["violation_duration_s"] for r in runs])
        rows.append([scenario, method, len(runs), rmse, rmse_ci, nrmse, nrmse_ci,
                     count, count_ci, dur, dur_ci])
    _write(out, ["scenario", "method", "n_seeds", "rmse_mean_kw", "rmse_ci95_kw",
                 "nrmse_mean", "nrmse_ci95", "violations_mean", "violations_ci95",
                 "violation_s_mean", "violation_s_ci95"], rows)


def emit_timewindow(results_dir: str | Path, out: Path,
                    window_s: tuple[float, float] = (960.0, 1380.0)) -> None:
    """Per-slot traces around the key-famine window, from ledger dumps."""
    rows = []
    for path in sorted(Path(results_dir).glob("**/ledger.csv.gz")):
        run_id = path.parent.name
        parts = run_id.split("__")
        if len(parts) != 3:
            continue
        scenario, method, seed = parts[0], parts[1], parts[2]
        with gzip.open(path, "rt") as fh:
            reader = csv.DictReader(fh)
            for rec in reader:
                t_s = int(rec["slot"]) * 0.1
                if not window_s[0] <= t_s <= window_s[1]:
                    continue
                s_crit = sum(
                    int(rec[f"Sreg_{c.label}"]) + int(rec[f"Spre_{c.label}"])
                    for c in CRITICAL_CLASSES
                )
                rows.append([scenario, method, seed, rec["slot"], f"{t_s:.1f}",
                             rec["regime"], rec["G"], rec["K_end"], rec["R_end"],
                             s_crit, rec["P_ref_kw"], rec["P_kw"]])
    _write(out, ["scenario", "method", "seed", "slot", "time_s", "regime",
                 "G_bits", "K_bits", "R_emg_bits", "S_crit", "P_ref_kw", "P_kw"], rows)


def emit_sensitivity_grid(summaries: list[RunSummary], out: Path) -> None:
    rows = []
    for s in sorted(summaries, key=lambda s: (s.params["params"]["rho"],
                                              s.params["params"]["beta"], s.seed)):
        rows.append([s.params["params"]["rho"], s.params["params"]["beta"], s.seed,
                     s.aggregate_p99_s(censored=True), s.totals["total"]])
    _write(out, ["rho", "beta", "seed", "p99_s", "discard_rate"], rows)


def emit_scalability(summaries: list[RunSummary], out: Path) -> None:
    rows = []
    for s in sorted(summaries, key=lambda s: (s.n_terminals, s.method, s.seed)):
        rows.append([s.n_terminals, s.method, s.seed,
                     s.aggregate_p99_s(censored=True), s.keys["efficiency"]])
    _write(out, ["n_terminals", "method", "seed", "p99_s", "key_efficiency"], rows)


def emit_all(results_dir: str | Path, out_dir: str | Path | None = None,
             scan_dir: str | Path | None = None,
             scale_dir: str | Path | None = None) -> list[Path]:
    """Emit every figure CSV that has source data under results_dir.

    scan_dir and scale_dir point at sensitivity-scan and scalability batch
    outputs; they default to subdirectories of results_dir when present.
    """
    results_dir = Path(results_dir)
    out = Path(out_dir) if out_dir else results_dir / "figures_csv"
    out.mkdir(parents=True, exist_ok=True)
    scan_dir = Path(scan_dir) if scan_dir else results_dir / "sensitivity"
    scale_dir = Path(scale_dir) if scale_dir else results_dir / "scalability"
    base = load_summaries(results_dir, exclude=(scan_dir, scale_dir))
    written: list[Path] = []

    def emit(name: str, fn, rows) -> None:
        path = out / name
        fn(rows, path)
        written.append(path)

    emit("p99_by_class_method.csv", emit_p99_by_class_method, base)
    emit("discards_by_method.csv", emit_discards_by_method, base)
    emit("regime_violin.csv", emit_regime_violin, base)
    emit("recovery.csv", emit_recovery, base)
    emit("ccdf_crit.csv", emit_ccdf_crit, base)
    emit("reserve_scatter.csv", emit_reserve_scatter, base)
    emit("power_metrics.csv", emit_power_metrics, base)
    path = out / "timewindow.csv"
    emit_timewindow(results_dir, path)
    written.append(path)

    emit("sensitivity_grid.csv", emit_sensitivity_grid,
         load_summaries(scan_dir) if scan_dir.is_dir() else [])
    emit("scalability.csv", emit_scalability,
         load_summaries(scale_dir) if scale_dir.is_dir() else [])

    logger.info("wrote %d figure CSVs to %s", len(written), out)
    return written
