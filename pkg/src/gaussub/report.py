"""
Report writers: JSON with a schema version, CSV with header rows, and
figures rendered next to them.

Output bytes depend only on the payload, so identical configs and seeds give
identical files.  Floats are written with ``repr`` (shortest round-trip form).
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import os
from pathlib import Path

import numpy as np

SCHEMA_VERSION = "1.0"
OUTPUT_ENV = "GAUSSUB_OUTPUT_DIR"

# column-width figures
golden_mean = (math.sqrt(5) - 1.0) / 2.0
fig_width = 4.5
STYLE = {
    "figure.figsize": [fig_width, fig_width * golden_mean],
    "figure.dpi": 100,
    "savefig.dpi": 150,
    "font.family": "DejaVu Sans",
    "font.size": 8,
    "axes.labelsize": 9,
    "axes.linewidth": 0.6,
    "legend.fontsize": 7,
    "legend.frameon": False,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "lines.linewidth": 1.0,
    "lines.markersize": 3,
    "svg.hashsalt": "gaussub",
    "path.simplify": False,
}
COLORS = ["#08589e", "#d95f02", "#1b9e77", "#7570b3", "#e7298a"]


def _plain(x):
    """JSON-ready copy with numpy scalars/arrays and non-finite floats handled."""
    if isinstance(x, dict):
        return {str(k): _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    if isinstance(x, np.ndarray):
        return [_plain(v) for v in x.tolist()]
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else str(x)
    return x


def canonical_json(obj) -> str:
    return json.dumps(_plain(obj), sort_keys=True, indent=2) + "\n"


def config_hash(config: dict) -> str:
    return hashlib.sha256(json.dumps(_plain(config), sort_keys=True).encode()).hexdigest()[:16]


def output_dir(arg: str | None) -> Path:
    d = Path(arg or os.environ.get(OUTPUT_ENV) or "gaussub_out")
    d.mkdir(parents=True, exist_ok=True)
    return d


def write_json(path: Path, payload: dict, config: dict) -> Path:
    body = {"schema_version": SCHEMA_VERSION, "config_hash": config_hash(config),
            "seed": config.get("seed"), "config": config, **payload}
    Path(path).write_text(canonical_json(body))
    return Path(path)


def _cell(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (np.integer,)):
        return str(int(v))
    return v


def write_csv(path: Path, rows: list, header: list | None = None) -> Path:
    header = header or (list(rows[0]) if rows else [])
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_cell(r[h]) for h in header])
    Path(path).write_text(buf.getvalue())
    return Path(path)


# ----------------------------------------------------------------------------
# figures


def _figure():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    plt.rcParams.update(STYLE)
    fig, ax = plt.subplots()
    return plt, fig, ax


def _save(plt, fig, path: Path) -> Path:
    fig.tight_layout()
    fig.savefig(path, format="png", metadata={"Software": None})
    plt.close(fig)
    return Path(path)


def histogram_figure(path: Path, edges, counts, sigma2: float, title: str = "") -> Path:
    """Histogram of normalized sums against the ``N(0, sigma2)`` density."""
    plt, fig, ax = _figure()
    edges = np.asarray(edges, dtype=float)
    counts = np.asarray(counts, dtype=float)
    width = np.diff(edges)
    dens = counts / max(counts.sum(), 1) / width
    ax.bar(edges[:-1], dens, width=width, align="edge", color=COLORS[0], alpha=0.45, linewidth=0)
    x = np.linspace(edges[0], edges[-1], 400)
    ax.plot(x, np.exp(-x**2 / (2 * sigma2)) / math.sqrt(2 * math.pi * sigma2), color=COLORS[1],
            label=r"$N(0,\sigma^2)$")
    ax.set_xlabel(r"$Z_n$")
    ax.set_ylabel("density")
    ax.legend()
    if title:
        ax.set_title(title, fontsize=8)
    return _save(plt, fig, path)


def curve_figure(path: Path, x, series: dict, xlabel: str, ylabel: str, logx: bool = False,
                 logy: bool = False, hline: float | None = None) -> Path:
    """Line plot of named series sharing an x grid."""
    plt, fig, ax = _figure()
    for i, (name, y) in enumerate(series.items()):
        ax.plot(x, y, marker="o", color=COLORS[i % len(COLORS)], label=name)
    if hline is not None:
        ax.axhline(hline, color="0.5", linewidth=0.6, linestyle="--")
    if logx:
        ax.set_xscale("log")
    if logy:
        ax.set_yscale("log")
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    if len(series) > 1:
        ax.legend()
    return _save(plt, fig, path)


def be_figure(path: Path, rows: list) -> Path:
    """Bounds and empirical distances per mode, log scale."""
    plt, fig, ax = _figure()
    modes = sorted({r["mode"] for r in rows})
    for i, mode in enumerate(modes):
        sel = [r for r in rows if r["mode"] == mode]
        n = [r["n"] for r in sel]
        ax.plot(n, [r["bound"] for r in sel], marker="o", color=COLORS[i], label=f"{mode} bound")
        ax.plot(n, [max(r["empirical"], 1e-8) for r in sel], marker="s", linestyle=":",
                color=COLORS[i], label=f"{mode} empirical")
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("n")
    ax.set_ylabel("distance")
    ax.legend(ncol=2)
    return _save(plt, fig, path)
