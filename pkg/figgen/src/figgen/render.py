"""Renderers, one per figure id. Each takes parsed CSV rows and writes one
image; empty inputs produce empty axes rather than crashing."""

from __future__ import annotations

import math
from collections import defaultdict
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

METHOD_ORDER = ("fifo", "priority", "staticquota", "ours", "ideal",
                "ours_noforecast", "ours_noreserve", "ours_nodegrade", "ours_wrr")
METHOD_LABELS = {
    "fifo": "FIFO", "priority": "Priority", "staticquota": "StaticQuota+Prio",
    "ours": "Ours", "ideal": "Ideal keys", "ours_noforecast": "-Forecast",
    "ours_noreserve": "-Reserve", "ours_nodegrade": "-Degradation",
    "ours_wrr": "WRR arbiter",
}
METHOD_COLORS = {
    "fifo": "#888888", "priority": "#d95f02", "staticquota": "#7570b3",
    "ours": "#1b9e77", "ideal": "#444444",
}
CLASS_ORDER = ("Prot", "Disp", "Meas", "Mkt", "Log")
SCENARIO_ORDER = ("normal", "degraded", "outage")


def _f(value: str, default: float = math.nan) -> float:
    try:
        return float(value)
    except (TypeError, ValueError):
        return default


def _sorted_methods(methods) -> list[str]:
    rank = {m: i for i, m in enumerate(METHOD_ORDER)}
    return sorted(set(methods), key=lambda m: (rank.get(m, 99), m))


def _color(method: str):
    return METHOD_COLORS.get(method)


def _label(method: str) -> str:
    return METHOD_LABELS.get(method, method)


def _save(fig, out_path: str | Path) -> None:
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    metadata = {"Date": None} if out_path.suffix == ".svg" else {}
    fig.savefig(out_path, dpi=130, bbox_inches="tight", metadata=metadata)
    plt.close(fig)


def _empty(ax, note: str = "no data") -> None:
    ax.text(0.5, 0.5, note, ha="center", va="center", transform=ax.transAxes,
            color="#999999")


def render_overall_p99(rows, out_path) -> None:
    fig, ax = plt.subplots(figsize=(7.2, 3.6))
    data = [r for r in rows if r["scenario"] == "normal"] or rows
    if not data:
        _empty(ax)
    else:
        methods = _sorted_methods(r["method"] for r in data)
        width = 0.8 / max(1, len(methods))
        x = np.arange(len(CLASS_ORDER))
        for i, method in enumerate(methods):
            vals, errs = [], []
            for cls in CLASS_ORDER:
                row = next((r for r in data
                            if r["method"] == method and r["class"] == cls), None)
                vals.append(_f(row["p99_mean_s"]) if row else math.nan)
                errs.append(_f(row["p99_ci95_s"], 0.0) if row else 0.0)
            ax.bar(x + i * width, vals, width, yerr=errs, capsize=2,
                   label=_label(method), color=_color(method))
        ax.set_xticks(x + 0.4 - width / 2)
        ax.set_xticklabels(CLASS_ORDER)
        ax.set_yscale("log")
        ax.legend(fontsize=8, ncol=2)
    ax.set_ylabel("P99 delay (s)")
    ax.set_title("P99 end-to-end delay by class and method")
    _save(fig, out_path)


def render_overall_discards_keyeff(rows, out_path) -> None:
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9.0, 3.4))
    data = [r for r in rows if r["scenario"] == "outage"] or rows
    if not data:
        _empty(ax1)
        _empty(ax2)
    else:
        methods = _sorted_methods(r["method"] for r in data)
        passive = []
        active = []
        eff = []
        for m in methods:
            row = next(r for r in data if r["method"] == m)
            passive.append(100 * _f(row["passive_mean"], 0.0))
            active.append(100 * _f(row["active_mean"], 0.0))
            eff.append(_f(row["key_eff_mean"], 0.0))
        x = np.arange(len(methods))
        ax1.bar(x, passive, 0.6, label="passive timeouts", color="#d95f02")
        ax1.bar(x, active, 0.6, bottom=passive, label="active drops",
                color="#7570b3")
        ax1.set_xticks(x)
        ax1.set_xticklabels([_label(m) for m in methods], rotation=20, fontsize=8)
        ax1.set_ylabel("discard rate (%)")
        ax1.legend(fontsize=8)
        ax2.bar(x, eff, 0.6, color=[_color(m) or "#333333" for m in methods])
        ax2.set_xticks(x)
        ax2.set_xticklabels([_label(m) for m in methods], rotation=20, fontsize=8)
        ax2.set_ylabel("critical messages per key bit")
    ax1.set_title("Discard decomposition")
    ax2.set_title("Key efficiency")
    _save(fig, out_path)


def _timewindow_series(rows, value_col):
    series = defaultdict(list)
    for r in rows:
        series[r["method"]].append((_f(r["time_s"]), _f(r[value_col])))
    for method in series:
        series[method].sort()
    return series


def render_overall_timewindow(rows, out_path) -> None:
    fig, axes = plt.subplots(4, 1, figsize=(8.0, 7.0), sharex=True)
    cols = ("G_bits", "K_bits", "R_emg_bits", "S_crit")
    titles = ("key production G(t)", "inventory K(t)", "emergency reserve",
              "critical serves per slot")
    if not rows:
        for ax in axes:
            _empty(ax)
    else:
        for ax, col, title in zip(axes, cols, titles):
            for method, points in sorted(_timewindow_series(rows, col).items()):
                t = [p[0] for p in points]
                v = [p[1] for p in points]
                ax.plot(t, v, lw=0.8, label=_label(method), color=_color(method))
            ax.set_ylabel(title, fontsize=8)
        axes[0].legend(fontsize=8, ncol=2)
    axes[-1].set_xlabel("time (s)")
    fig.suptitle("Regime-switch window: supply, inventory, reserve, service")
    _save(fig, out_path)


def _violin(ax, rows, value_col, ylabel):
    groups: dict[tuple[str, str], list[float]] = defaultdict(list)
    for r in rows:
        v = _f(r[value_col])
        if not math.isnan(v):
            groups[(r["scenario"], r["method"])].append(v)
    if not groups:
        _empty(ax)
        return
    scenarios = [s for s in SCENARIO_ORDER if any(k[0] == s for k in groups)]
    methods = _sorted_methods(k[1] for k in groups)
    data, positions, colors = [], [], []
    ticks, tick_labels = [], []
    pos = 0.0
    for scenario in scenarios:
        start = pos
        for method in methods:
            values = groups.get((scenario, method))
            if values:
                data.append(values)
                positions.append(pos)
                colors.append(_color(method) or "#333333")
            pos += 1.0
        ticks.append((start + pos - 1.0) / 2)
        tick_labels.append(scenario)
        pos += 1.0
    parts = ax.violinplot(data, positions=positions, widths=0.85,
                          showmedians=True)
    for body, color in zip(parts["bodies"], colors):
        body.set_facecolor(color)
        body.set_alpha(0.7)
    ax.set_xticks(ticks)
    ax.set_xticklabels(tick_labels)
    ax.set_ylabel(ylabel)
    handles = [plt.Line2D([], [], color=_color(m) or "#333333", lw=4,
                          label=_label(m)) for m in methods]
    ax.legend(handles=handles, fontsize=7, ncol=2)


def render_robust_p99_violin(rows, out_path) -> None:
    fig, ax = plt.subplots(figsize=(7.6, 3.6))
    _violin(ax, rows, "p99_censored_s", "P99 delay (s, deadline-censored)")
    ax.set_title("P99 delay across key-generation regimes")
    _save(fig, out_path)


def render_robust_discard_violin(rows, out_path) -> None:
    fig, ax = plt.subplots(figsize=(7.6, 3.6))
    _violin(ax, rows, "discard_rate", "total discard rate")
    ax.set_title("Discard rate across key-generation regimes")
    _save(fig, out_path)


def _recovery_box(rows, out_path, measurable: bool, title: str) -> None:
    fig, ax = plt.subplots(figsize=(6.4, 3.4))
    want = "True" if measurable else "False"
    data: dict[str, list[float]] = defaultdict(list)
    for r in rows:
        if r["measurable"] != want:
            continue
        v = _f(r["recovery_s"])
        if not math.isnan(v):
            data[r["method"]].append(v)
    if not data:
        _empty(ax)
    else:
        methods = _sorted_methods(data)
        ax.boxplot([data[m] for m in methods], tick_labels=[_label(m) for m in methods],
                   showmeans=True)
    ax.set_ylabel("recovery duration (s)")
    ax.set_title(title)
    _save(fig, out_path)


def render_recovery_measurable(rows, out_path) -> None:
    _recovery_box(rows, out_path, True,
                  "Switch recovery with measurable foreknowledge")


def render_recovery_nonmeasurable(rows, out_path) -> None:
    _recovery_box(rows, out_path, False,
                  "Switch recovery without foreknowledge")


def render_robust_ccdf(rows, out_path) -> None:
    fig, ax = plt.subplots(figsize=(6.4, 3.8))
    data = [r for r in rows if r.get("scenario") in (None, "", "outage")] or rows
    series = defaultdict(list)
    for r in data:
        series[r["method"]].append((_f(r["delay_s"]), _f(r["ccdf"])))
    if not series:
        _empty(ax)
    else:
        for method in _sorted_methods(series):
            pts = sorted(series[method])
            ax.semilogy([p[0] for p in pts],
                        [max(p[1], 1e-7) for p in pts],
                        label=_label(method), color=_color(method), lw=1.2)
        ax.legend(fontsize=8)
    ax.set_xlabel("critical waiting time (s)")
    ax.set_ylabel("CCDF")
    ax.set_title("Critical-class waiting time CCDF")
    _save(fig, out_path)


def render_reserve_depth_duration(rows, out_path) -> None:
    fig, ax = plt.subplots(figsize=(6.0, 3.8))
    series = defaultdict(list)
    for r in rows:
        series[r["method"]].append((_f(r["duration_s"]), _f(r["depth_bits"])))
    if not series:
        _empty(ax)
    else:
        for method in _sorted_methods(series):
            pts = series[method]
            ax.scatter([p[0] for p in pts], [p[1] for p in pts], s=14,
                       alpha=0.7, label=_label(method), color=_color(method))
        ax.legend(fontsize=8)
    ax.set_xlabel("activation duration (s)")
    ax.set_ylabel("activation depth (key bits)")
    ax.set_title("Emergency-reserve activations")
    _save(fig, out_path)


def render_power_timewindow(rows, out_path) -> None:
    fig, ax = plt.subplots(figsize=(8.0, 3.6))
    if not rows:
        _empty(ax)
    else:
        ref = sorted({(_f(r["time_s"]), _f(r["P_ref_kw"])) for r in rows})
        ax.plot([p[0] for p in ref], [p[1] for p in ref], "k--", lw=1.0,
                label="reference")
        for method, pts in sorted(_timewindow_series(rows, "P_kw").items()):
            ax.plot([p[0] for p in pts], [p[1] for p in pts], lw=0.9,
                    label=_label(method), color=_color(method))
        ax.legend(fontsize=8)
    ax.set_xlabel("time (s)")
    ax.set_ylabel("power (kW)")
    ax.set_title("Power tracking through the key-famine window")
    _save(fig, out_path)


def render_combo_ablation_scalability(rows, out_path, radar_rows=None) -> None:
    """Left: ablation radar when ablation-method rows are available.
    Middle/right: P99 and key efficiency vs terminal count."""
    fig = plt.figure(figsize=(10.5, 3.6))
    ax_radar = fig.add_subplot(1, 3, 1, projection="polar")
    ax_p99 = fig.add_subplot(1, 3, 2)
    ax_eff = fig.add_subplot(1, 3, 3)

    radar_rows = radar_rows or []
    metrics = ("total_mean", "passive_mean", "key_eff_mean")
    by_method = {r["method"]: r for r in radar_rows
                 if r.get("scenario") == "outage" or not radar_rows}
    ablations = [m for m in METHOD_ORDER
                 if m in by_method and (m.startswith("ours") or m == "ours")]
    if len(ablations) >= 2:
        angles = np.linspace(0, 2 * np.pi, len(metrics), endpoint=False).tolist()
        angles += angles[:1]
        maxima = {k: max(_f(by_method[m][k], 0.0) for m in ablations) or 1.0
                  for k in metrics}
        for m in ablations:
            # higher = better on every axis: invert the discard measures
            vals = [1.0 - _f(by_method[m]["total_mean"], 0.0) / max(1e-9, maxima["total_mean"]),
                    1.0 - _f(by_method[m]["passive_mean"], 0.0) / max(1e-9, maxima["passive_mean"]),
                    _f(by_method[m]["key_eff_mean"], 0.0) / max(1e-9, maxima["key_eff_mean"])]
            vals += vals[:1]
            ax_radar.plot(angles, vals, lw=1.0, label=_label(m))
            ax_radar.fill(angles, vals, alpha=0.08)
        ax_radar.set_xticks(angles[:-1])
        ax_radar.set_xticklabels(["1-discards", "1-timeouts", "key eff"], fontsize=7)
        ax_radar.legend(fontsize=6, loc="lower right", bbox_to_anchor=(1.2, -0.15))
    else:
        ax_radar.set_xticks([])
        ax_radar.text(0.5, 0.5, "no ablation rows", ha="center", va="center",
                      transform=ax_radar.transAxes, color="#999999")

    groups: dict[tuple[str, int], list[tuple[float, float]]] = defaultdict(list)
    for r in rows:
        groups[(r["method"], int(_f(r["n_terminals"], 0.0)))].append(
            (_f(r["p99_s"]), _f(r["key_efficiency"])))
    if not groups:
        _empty(ax_p99)
        _empty(ax_eff)
    else:
        methods = _sorted_methods(k[0] for k in groups)
        for method in methods:
            ns = sorted(n for m, n in groups if m == method)
            p99 = [np.nanmean([p[0] for p in groups[(method, n)]]) for n in ns]
            eff = [np.nanmean([p[1] for p in groups[(method, n)]]) for n in ns]
            ax_p99.plot(ns, p99, "o-", label=_label(method), color=_color(method))
            ax_eff.plot(ns, eff, "o-", label=_label(method), color=_color(method))
        ax_p99.set_xlabel("terminals N")
        ax_p99.set_ylabel("P99 delay (s)")
        ax_eff.set_xlabel("terminals N")
        ax_eff.set_ylabel("key efficiency")
        ax_p99.legend(fontsize=7)
    ax_radar.set_title("Ablations", fontsize=9)
    ax_p99.set_title("Scalability: P99", fontsize=9)
    ax_eff.set_title("Scalability: key efficiency", fontsize=9)
    fig.tight_layout()
    _save(fig, out_path)


def render_combo_sensitivity(rows, out_path) -> None:
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9.0, 3.4))
    if not rows:
        _empty(ax1)
        _empty(ax2)
    else:
        rhos = sorted({_f(r["rho"]) for r in rows})
        betas = sorted({_f(r["beta"]) for r in rows})
        p99 = np.full((len(betas), len(rhos)), np.nan)
        disc = np.full((len(betas), len(rhos)), np.nan)
        cells: dict[tuple[float, float], list[tuple[float, float]]] = defaultdict(list)
        for r in rows:
            cells[(_f(r["rho"]), _f(r["beta"]))].append(
                (_f(r["p99_s"]), _f(r["discard_rate"])))
        for (rho, beta), vals in cells.items():
            i = betas.index(beta)
            j = rhos.index(rho)
            p99[i, j] = np.nanmean([v[0] for v in vals])
            disc[i, j] = np.nanmean([v[1] for v in vals])
        for ax, grid, title in ((ax1, p99, "P99 delay (s)"),
                                (ax2, disc, "discard rate")):
            im = ax.imshow(grid, origin="lower", aspect="auto", cmap="viridis")
            ax.set_xticks(range(len(rhos)))
            ax.set_xticklabels([f"{v:g}" for v in rhos], fontsize=8)
            ax.set_yticks(range(len(betas)))
            ax.set_yticklabels([f"{v:g}" for v in betas], fontsize=8)
            ax.set_xlabel("guard band rho")
            ax.set_ylabel("reserve fraction beta")
            ax.set_title(title, fontsize=9)
            fig.colorbar(im, ax=ax, shrink=0.85)
    fig.tight_layout()
    _save(fig, out_path)
