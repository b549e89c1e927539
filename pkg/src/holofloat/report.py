"""CSV/JSON writers and matplotlib figures for experiment output."""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STUDY_COLUMNS = ("delta", "statistic", "std_error", "samples", "K", "seed")


def fmt(v) -> str:
    """Shortest round-trip text for numbers; empty for missing values."""
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return "nan"
        return repr(v)
    return str(v)


def write_csv(path: Path, columns, rows) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([fmt(row.get(c)) for c in columns])
    return path


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    return obj


def write_json(path: Path, obj) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n")
    return path


def _figure(title: str):
    fig, ax = plt.subplots(figsize=(6.4, 4.4), dpi=120)
    ax.set_title(title, fontsize=11)
    ax.grid(True, which="both", alpha=0.3)
    return fig, ax


def _save(fig, path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return path


def plot_convergence(report, path: Path, title: str, reference: float | None = None) -> Path:
    """Statistic against delta with error bars, the fitted curve and the target."""
    d = np.asarray(report.delta_grid)
    v = np.array([s.value for s in report.statistic])
    e = np.array([s.std_error for s in report.statistic])
    fig, ax = _figure(title)
    ax.errorbar(d, v, yerr=2 * e, fmt="o", ms=4, capsize=3, label="statistic (2 s.e.)")
    dd = np.logspace(math.log10(d.min()) - 0.5, math.log10(d.max()), 200)
    fit = report.fitted_limit + report.fit_slope * dd ** report.fit_exponent
    ax.plot(dd, fit, "-", lw=1.2, label=f"fit, s = {report.fit_exponent:.4g}")
    if reference is not None:
        ax.axhline(reference, color="k", ls="--", lw=1, label="reference")
    ax.set_xscale("log")
    ax.set_xlabel("delta")
    ax.set_ylabel("statistic")
    ax.legend(fontsize=9)
    return _save(fig, path)


def plot_series(x, ys: dict, path: Path, title: str, xlabel: str, ylabel: str,
                logx: bool = False) -> Path:
    fig, ax = _figure(title)
    for label, y in ys.items():
        ax.plot(x, y, "o-", ms=3, lw=1, label=label)
    if logx:
        ax.set_xscale("log")
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    if len(ys) > 1:
        ax.legend(fontsize=9)
    return _save(fig, path)
