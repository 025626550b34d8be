"""Sweep reporting: delimited plot data plus matplotlib figures.

``metrics.csv`` rows are grouped per noise family and written as

* ``plot_data.csv``         one row per successful point
* ``series_<family>.dat``   whitespace-delimited, ready for gnuplot
* ``privacy_utility.png``   attack AUC and IC accuracy against noise variance
* ``auc_vs_accuracy.png``   the trade-off plane (lower-right is better)
"""

from __future__ import annotations

import csv
import math
from pathlib import Path

from matplotlib import ticker
from matplotlib.backends.backend_agg import FigureCanvasAgg
from matplotlib.figure import Figure

from adept.pipeline import read_metrics_csv

STYLE = {
    "font.size": 9,
    "axes.labelsize": 9,
    "axes.titlesize": 10,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "lines.linewidth": 1.4,
    "lines.markersize": 4,
}
MARKERS = {"gaussian": "o", "laplace": "s"}
GOLDEN = (math.sqrt(5) - 1) / 2


def _float(x):
    try:
        return float(x)
    except (TypeError, ValueError):
        return math.nan


def sweep_series(rows) -> dict:
    """``{family: [(variance, epsilon, accuracy, auc), ...]}`` sorted by variance."""
    series = {}
    for r in rows:
        if r.get("status", "ok") != "ok":
            continue
        point = (_float(r["variance"]), _float(r["epsilon"]), _float(r["ic_accuracy"]), _float(r["mia_auc"]))
        series.setdefault(r["noise_family"], []).append(point)
    return {fam: sorted(pts) for fam, pts in sorted(series.items())}


def write_plot_data(series: dict, out_dir) -> list:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = [out / "plot_data.csv"]
    with paths[0].open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["noise_family", "variance", "epsilon", "ic_accuracy", "mia_auc"])
        for fam, pts in series.items():
            for v, e, a, u in pts:
                w.writerow([fam, f"{v:.10g}", f"{e:.10g}", f"{a:.10g}", f"{u:.10g}"])
    for fam, pts in series.items():
        p = out / f"series_{fam}.dat"
        lines = ["# variance epsilon ic_accuracy mia_auc"]
        lines += [f"{v:.10g} {e:.10g} {a:.10g} {u:.10g}" for v, e, a, u in pts]
        p.write_text("\n".join(lines) + "\n")
        paths.append(p)
    return paths


def _figure(width=7.0, ncols=1):
    fig = Figure(figsize=(width, width * GOLDEN / ncols * 1.1))
    FigureCanvasAgg(fig)
    return fig


def render_figures(series: dict, out_dir, dpi: int = 150) -> list:
    import matplotlib

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    with matplotlib.rc_context(STYLE):
        fig = _figure(ncols=2)
        ax_auc, ax_acc = fig.subplots(1, 2)
        for fam, pts in series.items():
            var = [p[0] for p in pts]
            kw = dict(marker=MARKERS.get(fam, "^"), label=fam.capitalize())
            ax_auc.plot(var, [p[3] for p in pts], **kw)
            ax_acc.plot(var, [p[2] for p in pts], **kw)
        ax_auc.axhline(0.5, color="0.6", linestyle=":", linewidth=1)
        for ax, ylabel in ((ax_auc, "MIA AUC"), (ax_acc, "IC accuracy")):
            ax.set_xscale("log")
            ax.xaxis.set_major_formatter(ticker.LogFormatter(labelOnlyBase=False))
            ax.xaxis.set_minor_formatter(ticker.LogFormatter(labelOnlyBase=False))
            ax.set_xlabel("noise variance per coordinate")
            ax.set_ylabel(ylabel)
            ax.grid(True, which="major", alpha=0.3)
        ax_auc.legend(frameon=False)
        fig.tight_layout()
        paths.append(out / "privacy_utility.png")
        fig.savefig(paths[-1], dpi=dpi)

        fig = _figure(width=4.5)
        ax = fig.subplots()
        for fam, pts in series.items():
            ax.plot([p[3] for p in pts], [p[2] for p in pts], marker=MARKERS.get(fam, "^"), linestyle="none", label=fam.capitalize())
        ax.set_xlabel("MIA AUC (lower is more private)")
        ax.set_ylabel("IC accuracy")
        ax.grid(True, alpha=0.3)
        ax.legend(frameon=False)
        fig.tight_layout()
        paths.append(out / "auc_vs_accuracy.png")
        fig.savefig(paths[-1], dpi=dpi)
    return paths


def report(metrics_csv, out_dir=None, figures: bool = True) -> list:
    """Write plot data (and figures) for a sweep's ``metrics.csv``."""
    metrics_csv = Path(metrics_csv)
    out_dir = Path(out_dir) if out_dir else metrics_csv.parent / "report"
    series = sweep_series(read_metrics_csv(metrics_csv))
    paths = write_plot_data(series, out_dir)
    if figures and series:
        paths += render_figures(series, out_dir)
    return paths
