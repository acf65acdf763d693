"""Matplotlib figures for a sweep report: x2, V_t with its band, alpha_t and r_t."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .report import LABELS  # noqa: E402

FIGURE_ALPHA = 0.2


def _pick_alpha(report, alpha):
    keys = report["trajectories"]
    if not keys:
        raise ValueError("report holds no trajectories")
    if alpha is None:
        alpha = FIGURE_ALPHA if repr(FIGURE_ALPHA) in keys else float(next(iter(keys)))
    key = repr(float(alpha))
    if key not in keys:
        raise ValueError(f"no trajectories for alpha={alpha}")
    return float(alpha), keys[key]


def render_figures(report, out_dir, alpha=None) -> list:
    alpha, trajs = _pick_alpha(report, alpha)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    x_hi = report["config"]["constraints"]["x_upper"][1]
    x_lo = report["config"]["constraints"]["x_lower"][1]
    paths = []

    fig, ax = plt.subplots(figsize=(8, 3.5))
    for v, tr in trajs.items():
        ax.plot(tr["t"], tr["x2"], lw=0.7, label=LABELS[v])
    ax.axhline(x_hi, color="k", ls="--", lw=0.8)
    ax.axhline(x_lo, color="k", ls="--", lw=0.8)
    ax.set_xlabel("t")
    ax.set_ylabel("x2")
    ax.set_title(f"state x2, alpha={alpha:g}")
    ax.legend(fontsize=7, ncol=3)
    paths.append(_save(fig, out_dir / f"fig_x2_alpha{alpha:g}.png"))

    fig, ax = plt.subplots(figsize=(8, 3.5))
    for v, tr in trajs.items():
        t = tr["t"][1:]
        (line,) = ax.plot(t, tr["V"], lw=0.9, label=LABELS[v])
        if v in ("dad-asy", "dad-rob", "fri-only"):
            ax.fill_between(t, tr["V_lower"], tr["V_upper"], color=line.get_color(), alpha=0.15)
    ax.axhline(alpha, color="k", ls=":", lw=0.8)
    ax.set_ylim(0, max(1.0, 2 * alpha))
    ax.set_xlabel("t")
    ax.set_ylabel("V_t")
    ax.set_title("average violation with the confidence band")
    ax.legend(fontsize=7, ncol=3)
    paths.append(_save(fig, out_dir / f"fig_V_alpha{alpha:g}.png"))

    dad = {v: tr for v, tr in trajs.items() if v in ("dad-asy", "dad-rob", "fri-only")}
    if dad:
        fig, (a1, a2) = plt.subplots(2, 1, figsize=(8, 5), sharex=True)
        for v, tr in dad.items():
            a1.plot(tr["t"], tr["alpha_t"], lw=0.8, label=LABELS[v])
            a2.step(tr["t"], tr["r_t"], lw=0.8, where="post", label=LABELS[v])
        a1.set_ylabel("alpha_t")
        a2.set_ylabel("r_t")
        a2.set_xlabel("t")
        a1.legend(fontsize=7)
        paths.append(_save(fig, out_dir / f"fig_alpha_r_alpha{alpha:g}.png"))
    return paths


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
