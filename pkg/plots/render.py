#!/usr/bin/env python3
"""Log-log convergence figures from study CSVs.

Reads one or more study CSVs (schema: run_id, geometry, bc_case, strategy,
degree, n_spans, h_char, dofs, err_l2_rel, err_h1_rel, wall_time_s), groups
series by (strategy, degree) and draws them on a log-log plot against the
characteristic mesh size or the number of degrees of freedom, together with
a dashed reference line of optimal slope anchored at the coarsest datapoint.

Usage:
    plots/render.py --csv results/a.csv [results/b.csv ...] \
        --x h|dofs --norm l2|h1 --out figure.svg [--png]
"""

from __future__ import annotations

import argparse
import csv
import sys
from collections import defaultdict

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

# text stays text in the SVG output: reviewable diffs, searchable labels
matplotlib.rcParams["svg.fonttype"] = "none"
matplotlib.rcParams["svg.hashsalt"] = "thb-sbm-plots"

REQUIRED = ("strategy", "degree", "n_spans", "h_char", "dofs",
            "err_l2_rel", "err_h1_rel")

STRATEGY_COLORS = {
    "none": "tab:red",
    "h": "tab:green",
    "p": "tab:blue",
    "k": "black",
}
DEGREE_MARKERS = {1: "o", 2: "s", 3: "^", 4: "D", 5: "v"}


def read_rows(paths: list[str]) -> list[dict]:
    rows = []
    for path in paths:
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            header = reader.fieldnames or []
            missing = [c for c in REQUIRED if c not in header]
            if missing:
                raise SystemExit(f"error: {path}: missing column(s) {', '.join(missing)}")
            for row in reader:
                rows.append(row)
    if not rows:
        raise SystemExit("error: no data rows in the given CSV file(s)")
    return rows


def build_series(rows: list[dict], x_axis: str, norm: str) -> dict:
    ycol = "err_l2_rel" if norm == "l2" else "err_h1_rel"
    xcol = "h_char" if x_axis == "h" else "dofs"
    series = defaultdict(list)
    for row in rows:
        key = (row["strategy"], int(row["degree"]))
        series[key].append((float(row[xcol]), float(row[ycol])))
    for pts in series.values():
        pts.sort()
    return dict(series)


def render(series: dict, x_axis: str, norm: str, out: str) -> None:
    fig, ax = plt.subplots(figsize=(6.0, 4.5))
    for (strategy, degree) in sorted(series):
        pts = series[(strategy, degree)]
        xs = [p[0] for p in pts]
        ys = [p[1] for p in pts]
        ax.loglog(xs, ys,
                  color=STRATEGY_COLORS.get(strategy, "tab:gray"),
                  marker=DEGREE_MARKERS.get(degree, "x"),
                  markersize=4, linewidth=1.2,
                  linestyle="--" if strategy == "none" else "-",
                  label=f"{strategy}, degree {degree}")
    if x_axis == "h":
        # dashed reference of optimal slope degree+1, anchored at the
        # coarsest datapoint of each degree
        for degree in sorted({d for (_, d) in series}):
            pts = [p for (s, d), ps in series.items() if d == degree for p in ps]
            x0, y0 = max(pts, key=lambda p: p[0])
            xs = sorted({p[0] for p in pts})
            ref = [y0 * (x / x0) ** (degree + 1) for x in xs]
            ax.loglog(xs, ref, "k--", linewidth=0.9, alpha=0.8,
                      label=f"slope {degree + 1} reference")
    ax.set_xlabel("characteristic mesh size h" if x_axis == "h"
                  else "degrees of freedom")
    ax.set_ylabel(f"relative {'L2' if norm == 'l2' else 'H1'} error")
    if x_axis == "h":
        ax.invert_xaxis()
    ax.grid(True, which="both", alpha=0.25)
    ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(out, metadata=_stable_metadata(out))
    plt.close(fig)


def _stable_metadata(out: str):
    # keep repeated renders byte-stable (no embedded timestamps)
    if out.endswith(".svg"):
        return {"Date": None}
    return {}


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--csv", nargs="+", required=True, help="input study CSV files")
    ap.add_argument("--x", choices=("h", "dofs"), default="h")
    ap.add_argument("--norm", choices=("l2", "h1"), default="l2")
    ap.add_argument("--out", required=True, help="output figure path (.svg or .png)")
    args = ap.parse_args(argv)
    try:
        rows = read_rows(args.csv)
    except FileNotFoundError as exc:
        print(f"error: {exc.filename}: no such file", file=sys.stderr)
        return 1
    except SystemExit as exc:
        print(exc, file=sys.stderr)
        return 1
    series = build_series(rows, args.x, args.norm)
    render(series, args.x, args.norm, args.out)
    print(f"wrote {args.out} ({len(series)} series)")
    return 0


if __name__ == "__main__":
    sys.exit(main())
