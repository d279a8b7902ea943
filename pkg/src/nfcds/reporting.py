"""Run reports, CSV emission, and figure rendering.

A report file is the effective configuration echoed as parseable
assignments, followed by ``# key = value`` comment lines carrying the
run's metrics. The config parser skips the comments, so feeding a report
back in as a config reproduces the run.

Figures render through the Agg backend straight to files; no display is
ever required.
"""

from __future__ import annotations

import io
import math
from typing import Iterable, Mapping, Optional, Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .imageio import atomic_write_text, atomic_write_bytes
from .sampler import AblationReport, TRAJECTORY_FIELDS, Trajectory
from .spectral import FrequencyMaskSpec, frequency_grid, soft_threshold_mask


def format_metric(value: object) -> str:
    if isinstance(value, float):
        if math.isnan(value):
            return "nan"
        return repr(value)
    return str(value)


def write_report(path: str, config_lines: Sequence[str], metrics: Mapping[str, object]) -> None:
    """Effective config assignments, then metrics as comment lines."""
    lines = list(config_lines)
    lines.append("")
    for key in metrics:
        lines.append(f"# {key} = {format_metric(metrics[key])}")
    atomic_write_text(path, "\n".join(lines) + "\n")


def write_csv(path: str, header: Sequence[str], rows: Iterable[Sequence[object]]) -> None:
    out = [",".join(header)]
    for row in rows:
        out.append(",".join(format_metric(v) for v in row))
    atomic_write_text(path, "\n".join(out) + "\n")


def write_trajectory_csv(path: str, trajectory: Trajectory) -> None:
    write_csv(path, TRAJECTORY_FIELDS, trajectory.rows())


def write_ablation_csv(path: str, report: AblationReport) -> None:
    write_csv(path, ("config", "metric", "value"), report.summary_rows())


def _save(fig: "plt.Figure", path: str) -> None:
    buffer = io.BytesIO()
    fig.savefig(buffer, format="png", dpi=110)
    plt.close(fig)
    atomic_write_bytes(path, buffer.getvalue())


def render_mask_profile(
    path: str, spec: FrequencyMaskSpec, height: int, width: int, t: int = 0
) -> None:
    """Radial profile of the soft-threshold mask at one timestep."""
    grid = frequency_grid(height, width)
    mask = soft_threshold_mask(grid, spec, t)
    radii = grid.radii.ravel()
    order = np.argsort(radii)
    fig, ax = plt.subplots(figsize=(5.0, 3.2))
    ax.plot(radii[order], mask.ravel()[order], lw=1.0)
    if not spec.bypass:
        cutoff = spec.radius_at(t)
        ax.axvline(cutoff, color="tab:red", ls="--", lw=0.8, label=f"r = {cutoff:g}")
        ax.axhline(0.5, color="gray", ls=":", lw=0.8)
        ax.legend(loc="lower right", fontsize=8)
    ax.set_xlabel("radius")
    ax.set_ylabel("mask value")
    ax.set_title("noise filter profile")
    fig.tight_layout()
    _save(fig, path)


def render_trajectory(path: str, trajectory: Trajectory) -> None:
    """Residual and band errors against the step index."""
    rows = trajectory.rows()
    fig, ax = plt.subplots(figsize=(5.5, 3.4))
    if rows:
        steps = [r[0] for r in rows]
        for column, label in ((2, "residual"), (3, "low band error"), (4, "high band error")):
            series = [r[column] for r in rows]
            if all(math.isnan(v) for v in series):
                continue
            ax.plot(steps, series, marker="o", ms=2.5, lw=1.0, label=label)
        ax.legend(fontsize=8)
    ax.set_xlabel("step")
    ax.set_ylabel("l2 error")
    ax.set_title("sampling trajectory")
    fig.tight_layout()
    _save(fig, path)


def render_ablation_comparison(path: str, report: AblationReport) -> None:
    """Low-band error trajectories of every config in one frame."""
    fig, ax = plt.subplots(figsize=(5.5, 3.4))
    plotted = False
    for entry in report.entries:
        rows = entry.trajectory.rows()
        series = [r[3] for r in rows]
        if not rows or all(math.isnan(v) for v in series):
            continue
        ax.plot([r[0] for r in rows], series, lw=1.0, label=entry.name)
        plotted = True
    if plotted:
        ax.legend(fontsize=8)
    ax.set_xlabel("step")
    ax.set_ylabel("low band error")
    ax.set_title("noise ablation comparison")
    fig.tight_layout()
    _save(fig, path)


def figure_path(report_path: str, suffix: str) -> str:
    """Sibling figure file next to a report: stem + `_<suffix>.png`."""
    stem = report_path
    for ext in (".txt", ".cfg", ".report"):
        if report_path.lower().endswith(ext):
            stem = report_path[: -len(ext)]
            break
    return f"{stem}_{suffix}.png"


__all__ = [
    "figure_path",
    "format_metric",
    "render_ablation_comparison",
    "render_mask_profile",
    "render_trajectory",
    "write_ablation_csv",
    "write_csv",
    "write_report",
    "write_trajectory_csv",
]
