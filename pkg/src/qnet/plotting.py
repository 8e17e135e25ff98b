"""Figure rendering for harness outputs.

Reads the CSVs a run leaves behind and saves matplotlib figures next to
them: mean objective vs sweep value with standard-error bars for sweep
experiments, and the per-snapshot objective trajectories for convergence
runs. The CSVs remain the machine-readable contract; figures are the
human-readable report.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .experiments import read_csv_rows

_METHOD_STYLE = {
    "AO_DC": dict(color="tab:blue", marker="o", label="AO (dual connectivity)"),
    "AO_SC": dict(color="tab:orange", marker="s", label="AO (single connectivity)"),
    "EXACT_DC": dict(color="tab:green", marker="^", label="exact (dual connectivity)"),
    "EXACT_SC": dict(color="tab:red", marker="v", label="exact (single connectivity)"),
}

_SWEEP_XLABEL = {
    "sweep_users": "number of users",
    "sweep_qbs": "number of base stations",
    "sweep_rmin": "minimum-rate multiplier",
    "single": "sweep value",
    "convergence": "sweep value",
}


def _setup_axes(ax, xlabel: str, ylabel: str) -> None:
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.grid(True, alpha=0.3)


def plot_aggregate(aggregate_csv: Path, out_png: Path) -> Path | None:
    """Mean objective vs sweep value, one errorbar line per method."""
    rows = read_csv_rows(aggregate_csv)
    rows = [r for r in rows if r["mean"]]
    if not rows:
        return None
    experiment = rows[0]["experiment"]
    fig, ax = plt.subplots(figsize=(7, 5))
    methods = sorted({r["method"] for r in rows}, key=list(_METHOD_STYLE).index)
    for method in methods:
        pts = sorted(
            ((float(r["sweep_value"]), float(r["mean"]), float(r["stderr"] or 0.0))
             for r in rows if r["method"] == method),
            key=lambda p: p[0],
        )
        xs, means, errs = zip(*pts)
        ax.errorbar(xs, means, yerr=errs, capsize=3, **_METHOD_STYLE[method])
    _setup_axes(ax, _SWEEP_XLABEL.get(experiment, "sweep value"), "total entanglement rate (pairs/s)")
    ax.legend()
    ax.set_title(f"{experiment}: mean over snapshots")
    fig.tight_layout()
    fig.savefig(out_png, dpi=150)
    plt.close(fig)
    return out_png


def plot_convergence(trace_csv: Path, out_png: Path, max_seeds: int = 12) -> Path | None:
    """Objective trajectories over outer iterations for the first seeds."""
    rows = read_csv_rows(trace_csv)
    rows = [r for r in rows if r["objective_pairs_per_s"]]
    if not rows:
        return None
    fig, ax = plt.subplots(figsize=(7, 5))
    seeds = sorted({int(r["seed"]) for r in rows})[:max_seeds]
    for seed in seeds:
        pts = sorted(
            ((int(r["iteration"]), float(r["objective_pairs_per_s"]))
             for r in rows if int(r["seed"]) == seed),
            key=lambda p: p[0],
        )
        xs, ys = zip(*pts)
        ax.plot(xs, ys, marker="o", alpha=0.75, label=f"seed {seed}")
    _setup_axes(ax, "outer iteration", "total entanglement rate (pairs/s)")
    if len(seeds) <= 6:
        ax.legend()
    ax.set_title("alternating optimization convergence")
    fig.tight_layout()
    fig.savefig(out_png, dpi=150)
    plt.close(fig)
    return out_png


def render_report(outdir: str | Path) -> list[Path]:
    """Render every figure the CSVs in `outdir` support; returns saved paths."""
    outdir = Path(outdir)
    saved = []
    agg = outdir / "aggregate.csv"
    if agg.exists():
        path = plot_aggregate(agg, outdir / "objective_vs_sweep.png")
        if path:
            saved.append(path)
    trace = outdir / "trace.csv"
    if trace.exists():
        path = plot_convergence(trace, outdir / "convergence_trace.png")
        if path:
            saved.append(path)
    return saved
