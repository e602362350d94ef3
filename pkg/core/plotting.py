"""Static figures for sweep outputs (files only, Agg backend)."""
from __future__ import annotations
import math
from pathlib import Path
from typing import Optional, Sequence, Tuple

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import pandas as pd  # noqa: E402

GOLDEN_RATIO = (math.sqrt(5) - 1.0) / 2.0
PARITY_MARKERS = {"even": "o", "odd": "^"}


def _figure(width: float = 6.0):
    fig, ax = plt.subplots(figsize=(width, width * GOLDEN_RATIO))
    return fig, ax


def _save(fig, path: Path) -> Path:
    path = Path(path)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return path


def plot_entropy_curves(aggregate: pd.DataFrame, path: Path, alpha: float = 1.0, p: Optional[float] = None) -> Path:
    """Mean entropy against cycle, one curve per (N, p), with stderr bands."""
    df = aggregate[aggregate["alpha"] == alpha]
    if p is not None:
        df = df[(df["p"] - p).abs() < 1e-12]
    fig, ax = _figure()
    for (n, rate), grp in df.groupby(["N", "p"], sort=True):
        grp = grp.sort_values("cycle")
        line = ax.plot(grp["cycle"], grp["mean_S"], label=f"N={n}, p={rate:g}")[0]
        ax.fill_between(
            grp["cycle"], grp["mean_S"] - grp["stderr_S"], grp["mean_S"] + grp["stderr_S"],
            color=line.get_color(), alpha=0.2, linewidth=0,
        )
    ax.set_xlabel("cycle t")
    ax.set_ylabel(f"S_{alpha:g} (nats)")
    ax.legend(fontsize="small", ncol=2)
    return _save(fig, path)


def plot_collapse(points: pd.DataFrame, path: Path, p_c: float, nu: float) -> Path:
    fig, ax = _figure()
    for n, grp in points.groupby("N", sort=True):
        marker = PARITY_MARKERS.get(grp["parity"].iloc[0], "o")
        ax.errorbar(grp["x"], grp["y"], yerr=grp["yerr"], fmt=marker, markersize=3, label=f"N={n}")
    ax.set_xlabel(r"$(p-p_c)N^{1/\nu}$")
    ax.set_ylabel(r"$S(N,p)-S(N,p_c)$")
    ax.set_title(f"p_c={p_c:.3f}, nu={nu:.2f}")
    ax.legend(fontsize="small")
    return _save(fig, path)


def plot_mse_scan(scan: Sequence[Tuple[float, float]], path: Path) -> Path:
    fig, ax = _figure()
    ax.plot([p for p, _ in scan], [r for _, r in scan], "o-")
    ax.set_xlabel("p")
    ax.set_ylabel("R(p)")
    ax.set_yscale("log")
    return _save(fig, path)


def plot_bond_stats(bond_stats: pd.DataFrame, path: Path) -> Path:
    """Largest final bond dimension against p, one line per N."""
    fig, ax = _figure()
    for n, grp in bond_stats.groupby("N", sort=True):
        grp = grp.sort_values("p")
        ax.plot(grp["p"], grp["max_final_bond"], "o-", label=f"N={n}")
    ax.set_xlabel("p")
    ax.set_ylabel("max bond dimension")
    ax.set_yscale("log", base=2)
    ax.legend(fontsize="small")
    return _save(fig, path)
