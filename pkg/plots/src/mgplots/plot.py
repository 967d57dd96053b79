"""Turn sweep CSVs into a trade-off figure: weighted objective versus the
renewable recharge probability, one curve per method, error bars where the
rows carry a standard error.

The input is the versioned sweep CSV emitted by the solver CLI; this module
only consumes that file format and never imports the solver.
"""

from __future__ import annotations

import argparse
import csv
import sys
from dataclasses import dataclass, field
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

SUPPORTED_SCHEMA = 1
REQUIRED_COLUMNS = ("method", "p_e", "weighted")

# One stable look per known method; unknown methods fall back onto a cycle.
DEFAULT_STYLES = {
    "lower-bound": {"marker": "v", "linestyle": "--", "color": "tab:gray"},
    "mdp": {"marker": "o", "linestyle": "-", "color": "tab:blue"},
    "tp-opt": {"marker": "s", "linestyle": "-", "color": "tab:green"},
    "tp-fixed": {"marker": "^", "linestyle": "-", "color": "tab:orange"},
    "bcp": {"marker": "d", "linestyle": "-", "color": "tab:red"},
}
FALLBACK_STYLES = [
    {"marker": "x", "linestyle": "-"},
    {"marker": "+", "linestyle": "--"},
    {"marker": "*", "linestyle": ":"},
]


class SchemaMismatch(ValueError):
    """The CSV declares a schema this renderer does not understand."""


class MissingColumn(ValueError):
    """A required column is absent from the CSV."""


@dataclass
class PlotSpec:
    """What to read and how to draw it."""

    inputs: list
    output: str
    title: str = "Privacy-cost trade-off vs recharge probability"
    ylabel: str = "weighted objective (bits / energy units per slot)"
    labels: dict = field(default_factory=dict)  # method -> legend label
    styles: dict = field(default_factory=dict)  # method -> matplotlib kwargs


@dataclass
class Series:
    method: str
    p_e: list
    weighted: list
    stderr: list


def read_sweep(path) -> list:
    """Parse one sweep CSV into per-method series sorted by recharge rate."""
    lines = Path(path).read_text().splitlines()
    if not lines or not lines[0].startswith("# schema="):
        raise SchemaMismatch(f"{path}: missing schema header")
    declared = lines[0].split("=", 1)[1].strip()
    if declared != str(SUPPORTED_SCHEMA):
        raise SchemaMismatch(f"{path}: schema {declared} unsupported (want {SUPPORTED_SCHEMA})")
    body = [line for line in lines[1:] if not line.startswith("#")]
    rows = list(csv.DictReader(body))
    if not rows:
        raise MissingColumn(f"{path}: no data rows")
    for column in REQUIRED_COLUMNS:
        if column not in rows[0]:
            raise MissingColumn(f"{path}: required column {column!r} missing")
    has_stderr = "stderr_weighted" in rows[0]
    by_method: dict = {}
    for row in rows:
        if row.get("status") not in (None, "", "ok"):
            continue
        if not row["weighted"]:
            continue
        series = by_method.setdefault(row["method"], Series(row["method"], [], [], []))
        series.p_e.append(float(row["p_e"]))
        series.weighted.append(float(row["weighted"]))
        err = row.get("stderr_weighted", "") if has_stderr else ""
        series.stderr.append(float(err) if err else 0.0)
    out = []
    for series in by_method.values():
        order = sorted(range(len(series.p_e)), key=lambda i: series.p_e[i])
        out.append(
            Series(
                series.method,
                [series.p_e[i] for i in order],
                [series.weighted[i] for i in order],
                [series.stderr[i] for i in order],
            )
        )
    out.sort(key=lambda s: s.method)
    return out


def render(spec: PlotSpec) -> dict:
    """Draw the figure and write a raster and a vector file.

    Returns a structural summary: per-method point counts and output paths.
    Rendering reads the inputs only; repeating it rewrites the same outputs.
    """
    all_series: list = []
    for path in spec.inputs:
        all_series.extend(read_sweep(path))
    fig, ax = plt.subplots(figsize=(7.0, 4.8))
    fallback = 0
    for series in all_series:
        style = dict(DEFAULT_STYLES.get(series.method, {}))
        if not style:
            style = dict(FALLBACK_STYLES[fallback % len(FALLBACK_STYLES)])
            fallback += 1
        style.update(spec.styles.get(series.method, {}))
        label = spec.labels.get(series.method, series.method)
        if any(e > 0.0 for e in series.stderr):
            ax.errorbar(
                series.p_e, series.weighted, yerr=series.stderr, label=label, capsize=3, **style
            )
        else:
            ax.plot(series.p_e, series.weighted, label=label, **style)
    ax.set_xlabel("renewable recharge probability per slot")
    ax.set_ylabel(spec.ylabel)
    ax.set_title(spec.title)
    ax.grid(True, alpha=0.3)
    ax.legend()
    raster, vector = _output_pair(spec.output)
    fig.savefig(raster, dpi=150)
    fig.savefig(vector)
    summary = {
        "methods": [s.method for s in all_series],
        "points": {s.method: len(s.p_e) for s in all_series},
        "raster": str(raster),
        "vector": str(vector),
        "curves": len(all_series),
    }
    plt.close(fig)
    return summary


def _output_pair(output: str):
    path = Path(output)
    if path.suffix.lower() in (".svg", ".pdf"):
        return path.with_suffix(".png"), path
    return path, path.with_suffix(".svg")


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="mgplot", description="Render sweep CSVs into a trade-off figure"
    )
    parser.add_argument("--in", dest="inputs", action="append", required=True, metavar="CSV")
    parser.add_argument("--out", required=True, metavar="IMAGE")
    parser.add_argument("--title")
    args = parser.parse_args(argv)
    spec = PlotSpec(inputs=args.inputs, output=args.out)
    if args.title:
        spec.title = args.title
    try:
        summary = render(spec)
    except (SchemaMismatch, MissingColumn, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {summary['raster']} and {summary['vector']} ({summary['curves']} curves)")
    return 0


if __name__ == "__main__":
    sys.exit(main())
