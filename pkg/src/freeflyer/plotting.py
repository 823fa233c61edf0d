"""Figures written next to the CSV/JSON outputs.

Everything renders through the Agg backend into files; nothing opens a window.
PNG metadata is stripped so repeated runs write identical bytes.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
from matplotlib.patches import Circle, Rectangle  # noqa: E402

from freeflyer.global_plan import GlobalPlan, ObstacleWorld  # noqa: E402

PARAM_LABELS = ("m [kg]", "cx [m]", "cy [m]", "Izz [kg m²]")
_SAVE = dict(dpi=120, metadata={"Software": None}, bbox_inches="tight")


def _save(fig, path) -> Path:
    path = Path(path)
    fig.savefig(path, **_SAVE)
    plt.close(fig)
    return path


def draw_world(ax, world: ObstacleWorld, goal=None):
    xmin, xmax, ymin, ymax = world.bounds
    ax.add_patch(Rectangle((xmin, ymin), xmax - xmin, ymax - ymin, fill=False, lw=1.0, ec="0.3"))
    if len(world.obstacles):
        for x, y, ri in world.inflated:
            ax.add_patch(Circle((x, y), ri, color="0.85", lw=0))
        for x, y, r in world.obstacles:
            ax.add_patch(Circle((x, y), r, color="0.45", lw=0))
    if goal is not None:
        ax.add_patch(Circle(goal.center, goal.tolerance, fill=False, ls="--", ec="tab:green"))
    ax.set_xlim(xmin - 0.1, xmax + 0.1)
    ax.set_ylim(ymin - 0.1, ymax + 0.1)
    ax.set_aspect("equal")
    ax.set_xlabel("x [m]")
    ax.set_ylabel("y [m]")


def plot_global_plan(plan: GlobalPlan, world: ObstacleWorld, goal, path):
    fig, ax = plt.subplots(figsize=(6, 4.5))
    draw_world(ax, world, goal)
    pts = plan.positions
    ax.plot(pts[:, 0], pts[:, 1], "o-", ms=3, color="tab:blue", label="global plan")
    ax.plot(*pts[0], "ks", ms=6, label="start")
    ax.legend(loc="best", fontsize=8)
    ax.set_title(f"{len(pts)} nodes, {plan.total_time:.0f} s")
    return _save(fig, path)


def plot_run(trace, path):
    """World, global plan, local plans and the executed trajectory."""
    cfg = trace.config
    fig, ax = plt.subplots(figsize=(6, 4.5))
    draw_world(ax, cfg.world, cfg.goal)
    if trace.global_plan is not None:
        p = trace.global_plan.positions
        ax.plot(p[:, 0], p[:, 1], "o--", ms=2, lw=0.8, color="0.5", label="global plan")
    for i, lp in enumerate(trace.local_plans):
        ax.plot(lp.states[:, 0], lp.states[:, 1], lw=0.8, color="tab:orange",
                label="local plans" if i == 0 else None)
    x = trace.truth_fine
    ax.plot(x[:, 0], x[:, 1], lw=1.5, color="tab:blue", label="executed")
    ax.legend(loc="best", fontsize=8)
    ax.set_title(f"{trace.status} after {trace.duration:.1f} s")
    return _save(fig, path)


def plot_estimates(trace, path):
    """Parameter estimates with one-sigma bands against the truth."""
    rows = trace.rows
    truth = np.asarray(trace.config.theta_true)
    fig, axes = plt.subplots(4, 1, figsize=(6, 7), sharex=True)
    if len(rows):
        t = rows[:, 0]
        for j, ax in enumerate(axes):
            est, sd = rows[:, 16 + j], np.sqrt(np.maximum(rows[:, 20 + j], 0.0))
            ax.fill_between(t, est - sd, est + sd, color="tab:blue", alpha=0.25, lw=0)
            ax.plot(t, est, color="tab:blue")
            ax.axhline(truth[j], color="k", ls="--", lw=0.8)
            for ts in (s[0] for s in trace.swaps):
                ax.axvline(ts, color="tab:red", lw=0.5, alpha=0.6)
            ax.set_ylabel(PARAM_LABELS[j])
    axes[-1].set_xlabel("t [s]")
    return _save(fig, path)


def plot_comparison(comparison, path):
    """Final covariance change per parameter, informative vs nominal."""
    names = list(comparison.change_pct)
    vals = [comparison.change_pct[k] for k in names]
    fig, ax = plt.subplots(figsize=(5, 3.5))
    colors = ["tab:green" if v < 0 else "tab:red" for v in vals]
    ax.bar(names, vals, color=colors)
    ax.axhline(0.0, color="k", lw=0.8)
    ax.set_ylabel("covariance change [%]")
    n = len(comparison.nominal.runs)
    ax.set_title(f"informative vs nominal, {n} matched seeds")
    return _save(fig, path)
