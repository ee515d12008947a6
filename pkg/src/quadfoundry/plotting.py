"""Figure rendering for the study reports.

Every analysis subcommand writes its delimited output next to a static PNG
produced here. Matplotlib runs on the Agg backend so the CLI works headless.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

plt.rcParams.update({
    "figure.figsize": (7.0, 4.5),
    "figure.dpi": 110,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "font.size": 9,
    "legend.fontsize": 8,
})


def save(fig, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return path


def probe_figure(true_vals, pred_vals, r2: float, mse: float, path) -> Path:
    fig, ax = plt.subplots(figsize=(4.5, 4.5))
    ax.scatter(true_vals, pred_vals, s=4, alpha=0.25, edgecolors="none")
    lo = min(np.min(true_vals), np.min(pred_vals))
    hi = max(np.max(true_vals), np.max(pred_vals))
    ax.plot([lo, hi], [lo, hi], "k--", lw=1)
    ax.set_xlabel("true thrust-to-weight ratio")
    ax.set_ylabel("probe prediction")
    ax.set_title(f"linear probe on hidden states (R$^2$={r2:.3f}, MSE={mse:.3f})")
    return save(fig, path)


def tracking_figure(record, path, title: str = "trajectory tracking") -> Path:
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 4))
    p, r = record.positions, record.ref_positions
    ax1.plot(r[:, 0], r[:, 1], "k--", lw=1, label="reference")
    ax1.plot(p[:, 0], p[:, 1], lw=1, label="flown")
    ax1.set_xlabel("x [m]")
    ax1.set_ylabel("y [m]")
    ax1.set_aspect("equal")
    ax1.legend()
    t = record.times if record.times is not None else np.arange(len(p)) * 0.01
    ax2.plot(t, p[:, 2], lw=1, label="z")
    ax2.plot(t, r[:, 2], "k--", lw=1, label="z ref")
    ax2.set_xlabel("t [s]")
    ax2.set_ylabel("z [m]")
    ax2.legend()
    fig.suptitle(title)
    return save(fig, path)


def timeseries_figure(record, path, title: str) -> Path:
    fig, (ax1, ax2) = plt.subplots(2, 1, sharex=True, figsize=(7, 5))
    t = record.times if record.times is not None else np.arange(len(record)) * 0.01
    err = np.linalg.norm(record.positions - record.ref_positions, axis=1)
    ax1.plot(t, err, lw=1)
    ax1.set_ylabel("position error [m]")
    if record.velocities is not None:
        ax2.plot(t, np.linalg.norm(record.velocities, axis=1), lw=1)
    ax2.set_ylabel("speed [m/s]")
    ax2.set_xlabel("t [s]")
    fig.suptitle(title)
    return save(fig, path)


def hidden_figure(record, path, title: str = "hidden state") -> Path:
    fig, ax = plt.subplots()
    t = record.times if record.times is not None else np.arange(len(record)) * 0.01
    ax.plot(t, record.hidden_states, lw=0.8)
    ax.set_xlabel("t [s]")
    ax.set_ylabel("hidden activation")
    ax.set_ylim(-1.05, 1.05)
    ax.set_title(title)
    return save(fig, path)


def delay_figure(rows: list[dict], path) -> Path:
    fig, ax = plt.subplots()
    for mitigation in (False, True):
        sel = [r for r in rows if r["mitigation"] == mitigation]
        if not sel:
            continue
        d = [r["delay"] * 1e3 for r in sel]
        z = [r["z_std"] for r in sel]
        ax.plot(d, z, "o-", label="with mitigation" if mitigation else "no mitigation")
    ax.set_xlabel("velocity delay [ms]")
    ax.set_ylabel("z-position std over final window [m]")
    ax.set_title("delay-induced z oscillation")
    ax.legend()
    return save(fig, path)


def scaling_figure(rows: list[dict], path) -> Path:
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 4))
    counts = sorted({r["teachers"] for r in rows})
    for c in counts:
        sel = sorted((r for r in rows if r["teachers"] == c), key=lambda r: r["flops"])
        ax1.plot([r["flops"] for r in sel], [r["episode_length"] for r in sel],
                 "o-", label=f"{c} teachers")
    ax1.set_xscale("log")
    ax1.set_xlabel("inference FLOPs per step")
    ax1.set_ylabel("held-out episode length")
    ax1.legend()
    hiddens = sorted({r["hidden"] for r in rows})
    for h in hiddens:
        sel = sorted((r for r in rows if r["hidden"] == h), key=lambda r: r["teachers"])
        ax2.plot([r["teachers"] for r in sel], [r["episode_length"] for r in sel],
                 "o-", label=f"H={h}")
    ax2.set_xlabel("number of teachers")
    ax2.set_ylabel("held-out episode length")
    ax2.legend()
    return save(fig, path)


def context_figure(per_loop_rmse: list[float], path) -> Path:
    fig, ax = plt.subplots()
    ax.plot(np.arange(1, len(per_loop_rmse) + 1), per_loop_rmse, "o-")
    ax.set_xlabel("loop index")
    ax.set_ylabel("per-loop RMSE [m]")
    ax.set_title("context-window extrapolation over consecutive loops")
    return save(fig, path)


def curve_figure(csv_path, path, x_col: str, y_cols: list[str], title: str) -> Path:
    import csv as csv_mod
    with open(csv_path) as f:
        rows = list(csv_mod.DictReader(f))
    fig, ax = plt.subplots()
    x = [float(r[x_col]) for r in rows]
    for col in y_cols:
        ys = [(float(r[col]) if r[col] else np.nan) for r in rows]
        ax.plot(x, ys, lw=1, label=col)
    ax.set_xlabel(x_col)
    ax.legend()
    ax.set_title(title)
    return save(fig, path)
