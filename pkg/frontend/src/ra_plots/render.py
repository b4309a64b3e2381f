"""Median curves with 10-90% bands from an experiment metrics CSV.

Presentation layer only: every number drawn comes straight from the CSV
(median, q10, q90 per gamma/method/stat row); nothing is recomputed here.
"""

from __future__ import annotations

import argparse
import csv
import sys
from dataclasses import dataclass
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402


class SchemaMismatch(Exception):
    """Input CSV does not have the expected metrics schema."""


EXPECTED_HEADER = ["gamma", "method", "stat", "median", "q10", "q90"]
METRICS = ("bias", "variance", "nrmse")
AXIS_LABELS = {
    "bias": "normalized |bias|",
    "variance": "normalized variance",
    "nrmse": "nRMSE",
}

# Fixed style so repeated renders of the same data are pixel-identical.
STYLE = {
    "figure.figsize": (6.0, 4.0),
    "figure.dpi": 110,
    "font.size": 10,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "svg.hashsalt": "ra-plots",
}


@dataclass(frozen=True)
class FigureSpec:
    input_path: str | Path
    metric: str
    output_path: str | Path
    methods: tuple[str, ...] = ()  # empty means every method in the file

    def __post_init__(self):
        if self.metric not in METRICS:
            raise SchemaMismatch(
                f"unknown metric {self.metric!r}; expected one of {METRICS}"
            )


def load_metrics(path: str | Path) -> list[dict]:
    """Rows of the metrics CSV as dicts; comment lines are skipped."""
    with open(path, newline="") as fh:
        reader = csv.reader(line for line in fh if not line.startswith("#"))
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaMismatch(f"{path} is empty") from None
        header = [h.strip() for h in header]
        if header != EXPECTED_HEADER:
            extra = [col for col in header if col not in EXPECTED_HEADER]
            missing = [col for col in EXPECTED_HEADER if col not in header]
            offending = (extra + missing or header)[0]
            raise SchemaMismatch(
                f"bad metrics header in {path}: offending column {offending!r} "
                f"(expected {EXPECTED_HEADER})"
            )
        rows = []
        for row in reader:
            if not row:
                continue
            rows.append({
                "gamma": float(row[0]),
                "method": row[1],
                "stat": row[2],
                "median": float(row[3]),
                "q10": float(row[4]),
                "q90": float(row[5]),
            })
    return rows


def collect_series(rows: list[dict], metric: str,
                   methods: tuple[str, ...]) -> dict[str, dict[str, list[float]]]:
    """Per-method gamma-sorted (gamma, median, q10, q90) series for one metric."""
    available = []
    for row in rows:
        if row["method"] not in available:
            available.append(row["method"])
    if not any(row["stat"] == metric for row in rows):
        raise SchemaMismatch(f"metric {metric!r} absent from the stat column")
    chosen = list(methods) if methods else available
    unknown = [m for m in chosen if m not in available]
    if unknown:
        raise SchemaMismatch(f"methods not present in the file: {unknown}")
    series: dict[str, dict[str, list[float]]] = {}
    for method in chosen:
        points = sorted(
            (row["gamma"], row["median"], row["q10"], row["q90"])
            for row in rows
            if row["method"] == method and row["stat"] == metric
        )
        series[method] = {
            "gamma": [p[0] for p in points],
            "median": [p[1] for p in points],
            "q10": [p[2] for p in points],
            "q90": [p[3] for p in points],
        }
    return series


def render(spec: FigureSpec) -> dict[str, dict[str, list[float]]]:
    """Write the figure and return exactly the series that were drawn."""
    rows = load_metrics(spec.input_path)
    series = collect_series(rows, spec.metric, spec.methods)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        for method, data in series.items():
            (line,) = ax.plot(data["gamma"], data["median"], marker="o",
                              markersize=3, label=method)
            ax.fill_between(data["gamma"], data["q10"], data["q90"],
                            color=line.get_color(), alpha=0.2, linewidth=0)
        ax.set_xlabel("covariate dimension exponent")
        ax.set_ylabel(AXIS_LABELS[spec.metric])
        ax.legend()
        fig.tight_layout()
        fig.savefig(spec.output_path, metadata=_bare_metadata(spec.output_path))
        plt.close(fig)
    return series


def _bare_metadata(output_path: str | Path) -> dict:
    # Strip per-run metadata (dates, tool versions) so output bytes are stable.
    suffix = Path(output_path).suffix.lower()
    if suffix == ".svg":
        return {"Date": None, "Creator": None}
    if suffix == ".png":
        return {"Software": None}
    return {}


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="ra-plot",
        description="Render median curves with 10-90% bands from a metrics CSV",
    )
    parser.add_argument("metrics_csv")
    parser.add_argument("--metric", required=True, choices=METRICS)
    parser.add_argument("--out", required=True, help="output image (.png or .svg)")
    parser.add_argument("--methods", default="",
                        help="comma-separated filter; empty plots everything")
    args = parser.parse_args(argv)
    methods = tuple(m for m in args.methods.split(",") if m)
    try:
        render(FigureSpec(args.metrics_csv, args.metric, args.out, methods))
    except SchemaMismatch as exc:
        print(f"error\tSchemaMismatch\t{exc}", file=sys.stderr)
        return 1
    print(f"wrote\t{args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
