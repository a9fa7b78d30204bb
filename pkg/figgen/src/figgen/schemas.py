"""Figure registry: input CSV, required columns, and renderer per figure id.

The CSVs are the hand-off surface from the simulator's report stage; all
statistics are computed there. Rendering does no numerical work beyond
plotting transforms.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path


class SchemaError(ValueError):
    """Input CSV does not match the expected column schema."""


@dataclass(frozen=True)
class FigureSpec:
    figure_id: str
    csv_name: str
    required_columns: tuple[str, ...]
    renderer: str


FIGURES: dict[str, FigureSpec] = {
    spec.figure_id: spec
    for spec in (
        FigureSpec("overall_p99", "p99_by_class_method.csv",
                   ("scenario", "method", "class", "p99_mean_s", "p99_ci95_s"),
                   "render_overall_p99"),
        FigureSpec("overall_discards_keyeff", "discards_by_method.csv",
                   ("scenario", "method", "total_mean", "passive_mean",
                    "active_mean", "key_eff_mean"),
                   "render_overall_discards_keyeff"),
        FigureSpec("overall_timewindow", "timewindow.csv",
                   ("method", "time_s", "regime", "G_bits", "K_bits",
                    "R_emg_bits", "S_crit"),
                   "render_overall_timewindow"),
        FigureSpec("robust_p99_violin", "regime_violin.csv",
                   ("scenario", "method", "seed", "p99_censored_s"),
                   "render_robust_p99_violin"),
        FigureSpec("robust_discard_violin", "regime_violin.csv",
                   ("scenario", "method", "seed", "discard_rate"),
                   "render_robust_discard_violin"),
        FigureSpec("recovery_measurable", "recovery.csv",
                   ("measurable", "method", "recovery_s"),
                   "render_recovery_measurable"),
        FigureSpec("recovery_nonmeasurable", "recovery.csv",
                   ("measurable", "method", "recovery_s"),
                   "render_recovery_nonmeasurable"),
        FigureSpec("robust_ccdf", "ccdf_crit.csv",
                   ("method", "delay_s", "ccdf"),
                   "render_robust_ccdf"),
        FigureSpec("reserve_depth_duration", "reserve_scatter.csv",
                   ("method", "depth_bits", "duration_s"),
                   "render_reserve_depth_duration"),
        FigureSpec("power_timewindow", "timewindow.csv",
                   ("method", "time_s", "P_ref_kw", "P_kw"),
                   "render_power_timewindow"),
        FigureSpec("combo_ablation_scalability", "scalability.csv",
                   ("n_terminals", "method", "seed", "p99_s", "key_efficiency"),
                   "render_combo_ablation_scalability"),
        FigureSpec("combo_sensitivity", "sensitivity_grid.csv",
                   ("rho", "beta", "seed", "p99_s", "discard_rate"),
                   "render_combo_sensitivity"),
    )
}


def load_rows(csv_path: str | Path, spec: FigureSpec) -> list[dict[str, str]]:
    """Read and schema-validate one figure input."""
    path = Path(csv_path)
    if not path.is_file():
        raise SchemaError(f"{spec.figure_id}: input CSV not found: {path}")
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [col for col in spec.required_columns if col not in header]
        if missing:
            raise SchemaError(
                f"{spec.figure_id}: {path.name} is missing columns {missing}"
            )
        return list(reader)
