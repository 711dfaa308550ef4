"""Learning-curve aggregation across seeds, with a CSV as the source of truth.

Every figure is derived from an aggregate CSV written next to it, so the
numbers behind a plot can be diffed and regenerated without reading pixels.
Runs of one method may disagree on length if some aborted; curves are
truncated to the shortest run with a warning rather than silently padded.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from ..errors import ContractError
from .runlog import read_runlog


@dataclass
class AggregateCurve:
    label: str
    iterations: np.ndarray
    env_steps: np.ndarray
    mean: np.ndarray
    std: np.ndarray
    n_seeds: int


def aggregate_runs(label: str, runlog_paths, column: str = "mean_episode_reward") -> AggregateCurve:
    paths = [Path(p) for p in runlog_paths]
    if not paths:
        raise ContractError(f"{label}: no run logs to aggregate")
    tables = [read_runlog(p) for p in paths]
    for p, t in zip(paths, tables):
        if column not in t.numeric:
            raise ContractError(f"{p} has no column {column!r}")
        if len(t) == 0:
            raise ContractError(f"{p} has no data rows")
    lengths = [len(t) for t in tables]
    horizon = min(lengths)
    if len(set(lengths)) > 1:
        warnings.warn(
            f"{label}: run lengths differ {sorted(set(lengths))}; truncating to {horizon}",
            RuntimeWarning,
        )
    stacked = np.stack([t[column][:horizon] for t in tables])
    return AggregateCurve(
        label=label,
        iterations=tables[0]["iteration"][:horizon],
        env_steps=tables[0]["env_steps"][:horizon],
        mean=stacked.mean(axis=0),
        std=stacked.std(axis=0),
        n_seeds=len(tables),
    )


def write_aggregate_csv(path, curves: list[AggregateCurve], column: str) -> None:
    lines = ["label,iteration,env_steps,%s_mean,%s_std,n_seeds" % (column, column)]
    for curve in curves:
        for it, steps, m, s in zip(curve.iterations, curve.env_steps, curve.mean, curve.std):
            lines.append(
                "%s,%d,%d,%.17g,%.17g,%d" % (curve.label, int(it), int(steps), m, s, curve.n_seeds)
            )
    Path(path).write_text("\n".join(lines) + "\n")


def discover_runs(root) -> dict[str, list[Path]]:
    """Group ``<root>/<method>_s<seed>/runlog.csv`` files by method."""
    root = Path(root)
    grouped: dict[str, list[Path]] = {}
    for runlog in sorted(root.glob("*_s*/runlog.csv")):
        name = runlog.parent.name
        label = name.rsplit("_s", 1)[0]
        grouped.setdefault(label, []).append(runlog)
    if not grouped:
        raise ContractError(f"no run logs found under {root}")
    return grouped


def plot_learning_curves(
    grouped: dict[str, list],
    out_path,
    column: str = "mean_episode_reward",
    title: str | None = None,
) -> Path:
    """Mean curve with a one-standard-deviation band per method.

    Returns the figure path; the aggregate CSV lands next to it with the
    same stem.
    """
    out_path = Path(out_path)
    curves = [aggregate_runs(label, paths, column) for label, paths in sorted(grouped.items())]
    csv_path = out_path.with_suffix(".csv")
    write_aggregate_csv(csv_path, curves, column)

    fig, ax = plt.subplots(figsize=(7.0, 4.5))
    for curve in curves:
        x = curve.env_steps
        ax.plot(x, curve.mean, label=f"{curve.label} ({curve.n_seeds} seeds)")
        ax.fill_between(x, curve.mean - curve.std, curve.mean + curve.std, alpha=0.2)
    ax.set_xlabel("environment steps")
    ax.set_ylabel(column.replace("_", " "))
    if title:
        ax.set_title(title)
    ax.legend(loc="best", fontsize=8)
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(out_path, dpi=120)
    plt.close(fig)
    return out_path
