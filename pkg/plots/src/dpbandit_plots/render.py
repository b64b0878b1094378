"""Render regret figures from dpbandit result CSVs.

Reads the versioned results CSV (schema tag ``dpbandit.v1``), aggregates
time-average regret over instances, and draws one panel per privacy level:
x is the pull count t on a log scale, y is the mean time-average regret per
algorithm label, with an optional +-1 standard deviation band.  Aggregation
happens here, never in the simulator, so the raw per-instance rows stay
auditable.

Standalone usage::

    dpbandit-plots results.csv --out figures/ [--kind easy]
        [--epsilon 0.1 --epsilon 0.5] [--label Dist-DP-SE] [--no-band]
"""

from __future__ import annotations

import argparse
import csv
import io
import os
import sys
from dataclasses import dataclass

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

SCHEMA_TAG = "dpbandit.v1"

_COLUMNS = (
    "instance_id",
    "seed",
    "label",
    "epsilon",
    "s",
    "t",
    "cumulative_regret",
    "time_avg_regret",
    "eliminated_optimal",
)


class PlotError(Exception):
    """Base class for rendering failures."""


class SchemaMismatch(PlotError):
    """The input CSV does not carry the expected schema tag or columns."""


class MissingSeries(PlotError):
    """A requested label or privacy level is absent from the CSV."""


@dataclass(frozen=True)
class PlotSpec:
    """What to draw: a results CSV, grouped into per-epsilon panels."""

    input_csv: str
    out_dir: str
    instance_kind: str = "easy"
    labels: tuple[str, ...] | None = None  # None = every label in the CSV
    epsilons: tuple[float, ...] | None = None  # None = every epsilon in the CSV
    band: bool = True


@dataclass(frozen=True)
class Row:
    instance_id: int
    label: str
    epsilon: float
    t: int
    time_avg_regret: float


def load_rows(path_or_text: str, from_text: bool = False) -> list[Row]:
    """Parse a results CSV, validating the schema tag and column header."""
    text = path_or_text
    if not from_text:
        with open(path_or_text, "r", encoding="utf-8") as fh:
            text = fh.read()
    lines = text.splitlines()
    if not lines or lines[0].strip() != f"schema={SCHEMA_TAG}":
        raise SchemaMismatch(f"input is not a schema={SCHEMA_TAG} results file")
    reader = csv.reader(io.StringIO("\n".join(lines[1:])))
    try:
        header = tuple(next(reader))
    except StopIteration:
        raise SchemaMismatch("schema tag present but no header row") from None
    if header != _COLUMNS:
        raise SchemaMismatch(f"unexpected columns: {header}")
    rows = []
    for record in reader:
        if not record:
            continue
        if len(record) != len(_COLUMNS):
            raise SchemaMismatch(f"row has {len(record)} fields, want {len(_COLUMNS)}")
        rows.append(
            Row(
                instance_id=int(record[0]),
                label=record[2],
                epsilon=float(record[3]),
                t=int(record[5]),
                time_avg_regret=float(record[7]),
            )
        )
    if not rows:
        raise SchemaMismatch("results file holds no data rows")
    return rows


def series_points(
    rows: list[Row], label: str, epsilon: float
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Checkpoint grid, mean, and std of time-average regret over instances."""
    per_t: dict[int, list[float]] = {}
    for row in rows:
        if row.label == label and row.epsilon == epsilon:
            per_t.setdefault(row.t, []).append(row.time_avg_regret)
    if not per_t:
        raise MissingSeries(f"no rows for label {label!r} at epsilon {epsilon:g}")
    ts = np.array(sorted(per_t), dtype=np.int64)
    means = np.array([np.mean(per_t[t]) for t in ts])
    stds = np.array([np.std(per_t[t]) for t in ts])
    return ts, means, stds


def render(spec: PlotSpec) -> list[str]:
    """Draw one panel per privacy level; returns the written image paths."""
    rows = load_rows(spec.input_csv)
    labels = spec.labels if spec.labels is not None else tuple(
        sorted({r.label for r in rows})
    )
    epsilons = spec.epsilons if spec.epsilons is not None else tuple(
        sorted({r.epsilon for r in rows})
    )
    present_labels = {r.label for r in rows}
    for label in labels:
        if label not in present_labels:
            raise MissingSeries(f"label {label!r} does not appear in the CSV")

    os.makedirs(spec.out_dir, exist_ok=True)
    written = []
    for eps in epsilons:
        fig, ax = plt.subplots(figsize=(5.0, 3.6))
        for label in labels:
            ts, means, stds = series_points(rows, label, eps)
            ax.plot(ts, means, marker="o", markersize=2.5, linewidth=1.2, label=label)
            if spec.band and len(ts) > 1:
                ax.fill_between(ts, means - stds, means + stds, alpha=0.15)
        ax.set_xscale("log")
        ax.set_xlabel("users t")
        ax.set_ylabel("time-average regret")
        ax.set_title(f"{spec.instance_kind} instance, eps = {eps:g}")
        ax.legend(fontsize=8)
        fig.tight_layout()
        out = os.path.join(
            spec.out_dir, f"regret_{spec.instance_kind}_eps{eps:g}.png".replace(" ", "")
        )
        fig.savefig(out, dpi=150)
        plt.close(fig)
        written.append(out)
    return written


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="dpbandit-plots", description="Render regret panels from a results CSV"
    )
    parser.add_argument("input_csv")
    parser.add_argument("--out", required=True, help="output directory for panel images")
    parser.add_argument("--kind", default="easy", help="instance-kind tag used in titles")
    parser.add_argument(
        "--epsilon", action="append", type=float, default=None, help="panel filter (repeatable)"
    )
    parser.add_argument(
        "--label", action="append", default=None, help="series filter (repeatable)"
    )
    parser.add_argument("--no-band", action="store_true", help="disable the std band")
    args = parser.parse_args(argv)
    spec = PlotSpec(
        input_csv=args.input_csv,
        out_dir=args.out,
        instance_kind=args.kind,
        labels=tuple(args.label) if args.label else None,
        epsilons=tuple(args.epsilon) if args.epsilon else None,
        band=not args.no_band,
    )
    try:
        written = render(spec)
    except (PlotError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    for path in written:
        print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
