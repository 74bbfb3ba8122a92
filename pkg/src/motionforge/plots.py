"""Figure rendering for training logs and evaluation reports.

Every delimited output (loss log, report file) has a matching PNG written
next to it; rendering is headless (Agg).
"""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402


def save_loss_curves(log_lines: list[str], out_path) -> Path:
    """Loss-per-iteration curves from tab-separated log lines (header first)."""
    header = log_lines[0].split("\t")
    rows = [line.split("\t") for line in log_lines[1:]]
    if not rows:
        raise ValueError("save_loss_curves: no data rows")
    iters = [int(r[0]) for r in rows]
    fig, ax = plt.subplots(figsize=(7, 4))
    for col in range(1, len(header)):
        ax.plot(iters, [float(r[col]) for r in rows], label=header[col], linewidth=1.2)
    ax.set_xlabel("iteration")
    ax.set_ylabel("loss")
    ax.legend(fontsize=8)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    out_path = Path(out_path)
    fig.savefig(out_path, dpi=120)
    plt.close(fig)
    return out_path


def save_pose_loss_curves(log, out_path) -> Path:
    """Curves for the pose autoencoder log (list of PoseAaeLosses)."""
    fig, ax = plt.subplots(figsize=(7, 4))
    iters = range(1, len(log) + 1)
    ax.plot(iters, [e.l_cyc for e in log], label="l_cyc", linewidth=1.2)
    ax.plot(iters, [e.l_adv_de for e in log], label="l_adv_de", linewidth=1.2)
    ax.plot(iters, [e.l_adv_disc for e in log], label="l_adv_disc", linewidth=1.2)
    ax.set_xlabel("iteration")
    ax.set_ylabel("loss")
    ax.legend(fontsize=8)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    out_path = Path(out_path)
    fig.savefig(out_path, dpi=120)
    plt.close(fig)
    return out_path


def save_horizon_figure(rows: list[tuple], out_path) -> Path:
    """Horizon-error curves, one line per (category, metric), from report rows
    of (category, horizon, metric, value); non-horizon rows are skipped."""
    series: dict[tuple, list[tuple[int, float]]] = {}
    for cat, horizon, metric, value in rows:
        try:
            h = int(horizon)
        except (TypeError, ValueError):
            continue
        series.setdefault((cat, metric), []).append((h, float(value)))
    fig, ax = plt.subplots(figsize=(7, 4))
    for (cat, metric), points in sorted(series.items(), key=lambda kv: str(kv[0])):
        points.sort()
        ax.plot([p[0] for p in points], [p[1] for p in points],
                marker="o", markersize=3, linewidth=1.2, label=f"{metric} cat={cat}")
    ax.set_xlabel("horizon (ms)")
    ax.set_ylabel("euler error")
    if series:
        ax.legend(fontsize=7)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    out_path = Path(out_path)
    fig.savefig(out_path, dpi=120)
    plt.close(fig)
    return out_path
