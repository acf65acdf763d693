"""Sweep report assembly and rendering (JSON, Markdown, CSV and series files)."""

from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path

from .simulation import VARIANTS, SweepResult

REPORT_VERSION = 1
SERIES_COLUMNS = ("t", "x1", "x2", "u", "V", "V_lower", "V_upper", "alpha_t", "r_t")
LABELS = {
    "dad-asy": "DAD-FRI-Asy", "dad-rob": "DAD-FRI-Rob",
    "fri-only": "FRI-only (approx.)", "robust": "Robust", "lqr": "LQR",
}


def _clean(x):
    """JSON cannot hold inf/nan; store them as strings."""
    if isinstance(x, float) and not math.isfinite(x):
        return str(x)
    if isinstance(x, dict):
        return {k: _clean(v) for k, v in x.items()}
    if isinstance(x, list):
        return [_clean(v) for v in x]
    return x


def build_report(result: SweepResult, spec, alphas, seeds, eta=None) -> dict:
    first = seeds[0]
    traj = {}
    for (variant, alpha, seed), m in result.runs.items():
        if seed == first:
            traj.setdefault(repr(float(alpha)), {})[variant] = m.trajectory()
    return _clean({
        "version": REPORT_VERSION,
        "config": spec.to_dict(),
        "alphas": list(alphas), "seeds": list(seeds),
        "eta": "rule" if eta is None else eta,
        "table": result.table(),
        "cells": result.cells,
        "faults": result.faults,
        "trajectory_seed": first,
        "trajectories": traj,
    })


def write_report(report: dict, path) -> None:
    path = Path(path)
    path.write_text(json.dumps(report, indent=1))
    path.with_suffix(".csv").write_text(cells_csv(report))


def load_report(path) -> dict:
    data = json.loads(Path(path).read_text())
    if data.get("version") != REPORT_VERSION or "table" not in data:
        raise ValueError(f"{path} is not a sweep report")
    return data


def cells_csv(report) -> str:
    cols = ("alpha", "variant", "seed", "V_T", "max_V", "J", "J_over_J_lqr", "alpha_T", "fault")
    buf = io.StringIO()
    w = csv.DictWriter(buf, cols, extrasaction="ignore", lineterminator="\n")
    w.writeheader()
    for c in report["cells"]:
        w.writerow({k: ("" if c.get(k) is None else c.get(k)) for k in cols})
    return buf.getvalue()


def table_csv(report) -> str:
    cols = ("alpha", "variant", "n", "J_over_J_lqr", "V_T", "max_V")
    buf = io.StringIO()
    w = csv.DictWriter(buf, cols, lineterminator="\n")
    w.writeheader()
    for row in report["table"]:
        w.writerow({k: row[k] for k in cols})
    return buf.getvalue()


def table_markdown(report) -> str:
    """alpha rows x variant columns, each cell J/J_LQR | V_T (medians over seeds)."""
    present = [v for v in VARIANTS if any(r["variant"] == v for r in report["table"])]
    by = {(r["alpha"], r["variant"]): r for r in report["table"]}
    alphas = sorted({r["alpha"] for r in report["table"]})
    head = "| alpha | " + " | ".join(f"{LABELS[v]} J/J_LQR | {LABELS[v]} V_T" for v in present)
    lines = [head + " |", "|" + "---|" * (1 + 2 * len(present))]
    for a in alphas:
        cells = []
        for v in present:
            r = by.get((a, v))
            cells += ["-", "-"] if r is None else [f"{float(r['J_over_J_lqr']):.3f}",
                                                  f"{r['V_T']:.3f}"]
        lines.append(f"| {a:g} | " + " | ".join(cells) + " |")
    n_seeds = len(report["seeds"])
    lines.append("")
    lines.append(f"Medians over {n_seeds} seed(s). FRI-only is an approximation of the "
                 "FRI-based comparator.")
    if report["faults"]:
        lines.append(f"{len(report['faults'])} run(s) faulted; see the report JSON.")
    return "\n".join(lines) + "\n"


def write_series(report, out_dir) -> list:
    """One CSV per (alpha, variant) with the plot-ready series of the first seed."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for alpha, by_variant in report["trajectories"].items():
        for variant, tr in by_variant.items():
            path = out_dir / f"series_alpha{float(alpha):g}_{variant}.csv"
            n = len(tr["t"])
            with path.open("w", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(SERIES_COLUMNS)
                for i in range(n):
                    # V and its band start at t = 1, u stops at T - 1
                    row = [tr["t"][i], tr["x1"][i], tr["x2"][i],
                           tr["u"][i] if i < len(tr["u"]) else ""]
                    row += ["", "", ""] if i == 0 else [tr["V"][i - 1], tr["V_lower"][i - 1],
                                                        tr["V_upper"][i - 1]]
                    row += [tr["alpha_t"][i], tr["r_t"][i]]
                    w.writerow(row)
            written.append(path)
    return written
