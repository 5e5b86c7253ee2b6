"""Figure rendering for experiment reports.

Every report kind gets one PNG next to its CSV: convergence curves with
error bars, diagnostic bars, sensitivity heatmaps, operator usage. Purely
cosmetic; all numbers live in the CSV/JSON outputs.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import numpy as np
import matplotlib.pyplot as plt

from .experiments import ExperimentReport


def render(report: ExperimentReport, path: str, dpi: int = 150) -> str:
    """Render the figure matching the report kind and save it to ``path``."""
    fig = _RENDERERS.get(report.kind, _render_generic)(report)
    fig.savefig(path, dpi=dpi, bbox_inches="tight")
    plt.close(fig)
    return path


def _group_mean_std(records, by, value):
    keys = sorted({r[by] for r in records})
    means, stds = [], []
    for k in keys:
        vals = [r[value] for r in records if r[by] == k]
        means.append(np.mean(vals))
        stds.append(np.std(vals))
    return keys, np.array(means), np.array(stds)


def _render_deviation_curve(report, xlabel):
    fig, ax = plt.subplots(figsize=(6, 4))
    keys, means, stds = _group_mean_std(report.records, "R", "deviation_pct")
    ax.errorbar(keys, means, yerr=stds, marker="o", capsize=3, lw=1.8)
    ax.set_xlabel(xlabel)
    ax.set_ylabel("Deviation (%)")
    ax.set_title(report.kind)
    ax.grid(alpha=0.3)
    return fig


def _render_in_sample(report):
    return _render_deviation_curve(report, "Number of scenarios")


def _render_out_of_sample(report):
    return _render_deviation_curve(report, "Number of scenarios")


def _render_vss_evpi(report):
    fig, ax = plt.subplots(figsize=(7, 4))
    names = sorted({r["instance"] for r in report.records})
    x = np.arange(len(names))
    width = 0.27
    for off, col in zip((-width, 0, width),
                        ("vss_over_solution_pct", "evpi_over_solution_pct", "vss_share_pct")):
        means = [np.mean([r[col] for r in report.records if r["instance"] == n]) for n in names]
        ax.bar(x + off, means, width, label=col.replace("_", " "))
    ax.set_xticks(x)
    ax.set_xticklabels(names, rotation=30, ha="right", fontsize=7)
    ax.set_ylabel("%")
    ax.set_title("Value of the stochastic solution / perfect information")
    ax.legend(fontsize=7)
    return fig


def _render_value_of_ml(report):
    fig, ax = plt.subplots(figsize=(6, 4))
    seeds, means, stds = _group_mean_std(report.records, "seed", "value_of_ml_pct")
    ax.errorbar(range(1, len(seeds) + 1), means, yerr=stds, marker="s", ls="-", capsize=3)
    ax.axhline(0.0, color="gray", lw=0.8)
    ax.set_xlabel("Run")
    ax.set_ylabel("Value of heterogeneous-taste model (%)")
    ax.grid(alpha=0.3)
    return fig


def _render_sweep(report):
    t_vals = sorted({r["time_mean"] for r in report.records})
    p_vals = sorted({r["price_mean"] for r in report.records})
    cols = ["coverage_no_policy_pct"]
    if any("coverage_optimized_pct" in r for r in report.records):
        cols.append("coverage_optimized_pct")
    fig, axes = plt.subplots(1, len(cols), figsize=(5.5 * len(cols), 4), squeeze=False)
    for ax, col in zip(axes[0], cols):
        grid = np.full((len(p_vals), len(t_vals)), np.nan)
        for r in report.records:
            if col not in r:
                continue
            grid[p_vals.index(r["price_mean"]), t_vals.index(r["time_mean"])] = r[col]
        im = ax.pcolormesh(t_vals, p_vals, grid, shading="nearest", cmap="RdYlBu")
        fig.colorbar(im, ax=ax, label="coverage (%)")
        ax.set_xlabel("time sensitivity mean")
        ax.set_ylabel("price sensitivity mean")
        ax.set_title(col.replace("_", " "))
    return fig


def _render_operator_stats(report):
    fig, ax = plt.subplots(figsize=(8, 4))
    labels = [f'{r["role"]}:{r["operator"]}' for r in report.records]
    x = np.arange(len(labels))
    width = 0.28
    for off, col in zip((-width, 0, width), ("best", "better", "accepted")):
        ax.bar(x + off, [r[col] for r in report.records], width, label=col)
    ax.set_xticks(x)
    ax.set_xticklabels(labels, rotation=45, ha="right", fontsize=7)
    ax.set_ylabel("count")
    ax.set_title("Operator outcomes")
    ax.legend(fontsize=8)
    return fig


def _render_generic(report):
    fig, ax = plt.subplots(figsize=(6, 3))
    ax.axis("off")
    ax.text(0.02, 0.5, f"{report.kind}: {len(report.records)} records", fontsize=11)
    return fig


_RENDERERS = {
    "in-sample": _render_in_sample,
    "out-of-sample": _render_out_of_sample,
    "vss-evpi": _render_vss_evpi,
    "value-of-ml": _render_value_of_ml,
    "sweep": _render_sweep,
    "operator-stats": _render_operator_stats,
}
