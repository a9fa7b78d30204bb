"""figgen CLI: render evaluation figures from the per-figure CSVs."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import render as renderers
from .schemas import FIGURES, SchemaError, load_rows

logger = logging.getLogger("figgen")


def find_csv_dir(results_dir: Path) -> Path:
    """Accept either the CSV directory itself or a results root containing
    the report stage's figures_csv/ output."""
    if (results_dir / "p99_by_class_method.csv").is_file():
        return results_dir
    candidate = results_dir / "figures_csv"
    if candidate.is_dir():
        return candidate
    return results_dir


def render_figure(figure_id: str, csv_dir: Path, out_dir: Path,
                  image_format: str = "png") -> Path:
    spec = FIGURES[figure_id]
    rows = load_rows(csv_dir / spec.csv_name, spec)
    out_path = out_dir / f"{figure_id}.{image_format}"
    fn = getattr(renderers, spec.renderer)
    if figure_id == "combo_ablation_scalability":
        radar_spec = FIGURES["overall_discards_keyeff"]
        radar_path = csv_dir / radar_spec.csv_name
        radar_rows = load_rows(radar_path, radar_spec) if radar_path.is_file() else []
        fn(rows, out_path, radar_rows=radar_rows)
    else:
        fn(rows, out_path)
    logger.info("rendered %s -> %s", figure_id, out_path)
    return out_path


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="figgen", description="Render evaluation figures from CSVs.")
    group = parser.add_mutually_exclusive_group(required=True)
    group.add_argument("--all", action="store_true", help="render every figure")
    group.add_argument("--figure", choices=sorted(FIGURES), help="one figure id")
    parser.add_argument("results_dir", help="results root or CSV directory")
    parser.add_argument("--out", default=None, help="output image directory")
    parser.add_argument("--format", default="png", choices=("png", "svg"))
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(levelname)s: %(message)s")

    csv_dir = find_csv_dir(Path(args.results_dir))
    out_dir = Path(args.out) if args.out else csv_dir.parent / "figures"
    out_dir.mkdir(parents=True, exist_ok=True)

    figure_ids = sorted(FIGURES) if args.all else [args.figure]
    failures = []
    for figure_id in figure_ids:
        try:
            render_figure(figure_id, csv_dir, out_dir, args.format)
        except SchemaError as exc:
            logger.error("%s", exc)
            failures.append(figure_id)
    if failures:
        logger.error("failed figures: %s", failures)
        return 1
    print(f"rendered {len(figure_ids)} figures -> {out_dir}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
