"""Static report figures rendered from the harness CSV files.

Rendering is read-only with respect to its inputs and writes deterministic
filenames chosen by the caller.  Schema problems raise :class:`FigureError`
naming the missing column; an empty CSV body is an error and no file is
written.
"""

from __future__ import annotations

import csv

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


class FigureError(ValueError):
    pass


def read_csv_columns(path: str, required: list) -> dict:
    """Load a CSV into named float arrays, checking the required columns."""
    with open(path, "r", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise FigureError(f"{path}: empty file, no header row")
        rows = [row for row in reader if row]
    for col in required:
        if col not in header:
            raise FigureError(f"{path}: missing required column {col!r}")
    if not rows:
        raise FigureError(f"{path}: no data rows")
    data = np.array([[float(v) for v in row] for row in rows])
    return {name: data[:, i] for i, name in enumerate(header)}


def _columns_matching(cols: dict, prefix: str) -> list:
    names = [name for name in cols if name.startswith(prefix)]
    return sorted(names, key=lambda s: [int(p) if p.isdigit() else p for p in s.split("_")[1:]])


def _save(fig, out_path: str):
    fig.tight_layout()
    fig.savefig(out_path, dpi=110)
    plt.close(fig)


def render_tracking(traj_csv: str, pf_csv: str | None, kf_csv: str | None, out_path: str, n_coords: int = 2):
    """Truth vs filter means for the first few real coordinates."""
    truth = read_csv_columns(traj_csv, ["time", "mode0_re"])
    series = []
    if pf_csv:
        series.append(("PF mean", read_csv_columns(pf_csv, ["time", "mean_0"]), "C1"))
    if kf_csv:
        series.append(("KF mean", read_csv_columns(kf_csv, ["time", "mean_0"]), "C2"))
    coords = [("mode0_re", "mean_0"), ("mode0_im", "mean_1")][:n_coords]
    fig, axes = plt.subplots(len(coords), 1, figsize=(7, 2.6 * len(coords)), sharex=True)
    axes = np.atleast_1d(axes)
    for ax, (truth_col, mean_col) in zip(axes, coords):
        ax.plot(truth["time"], truth[truth_col], "k-", lw=1.2, label="truth")
        for label, cols, color in series:
            if mean_col not in cols:
                raise FigureError(f"{out_path}: filter CSV lacks column {mean_col!r}")
            ax.plot(cols["time"], cols[mean_col], color=color, lw=1.0, label=label)
        ax.set_ylabel(truth_col)
        ax.grid(alpha=0.3)
    axes[0].legend(loc="best", fontsize=8)
    axes[-1].set_xlabel("time")
    _save(fig, out_path)


def render_covariance(pf_csv: str | None, kf_csv: str | None, out_path: str):
    """Posterior covariance trace over time (PF sample trace vs Riccati)."""
    if pf_csv is None and kf_csv is None:
        raise FigureError("covariance figure needs at least one filter CSV")
    fig, ax = plt.subplots(figsize=(7, 3.2))
    if pf_csv:
        cols = read_csv_columns(pf_csv, ["time", "cov_trace"])
        ax.plot(cols["time"], cols["cov_trace"], "C1-", label="PF sample trace")
    if kf_csv:
        cols = read_csv_columns(kf_csv, ["time", "cov_trace"])
        ax.plot(cols["time"], cols["cov_trace"], "C2--", label="Riccati trace")
    ax.set_xlabel("time")
    ax.set_ylabel("tr P(t)")
    ax.grid(alpha=0.3)
    ax.legend(loc="best", fontsize=8)
    _save(fig, out_path)


def render_riccati_trace(riccati_csv: str, chandrasekhar_csv: str, out_path: str):
    """Direct vs factorized covariance trace and their gap."""
    direct = read_csv_columns(riccati_csv, ["time", "P_0_0"])
    fact = read_csv_columns(chandrasekhar_csv, ["time", "P_0_0"])
    p_cols = _columns_matching(direct, "P_")
    dim = int(np.sqrt(len(p_cols)))
    tr_direct = sum(direct[f"P_{i}_{i}"] for i in range(dim))
    tr_fact = sum(fact[f"P_{i}_{i}"] for i in range(dim))
    n = min(len(tr_direct), len(tr_fact))
    gap = np.zeros(n)
    for col in p_cols:
        gap = np.maximum(gap, np.abs(direct[col][:n] - fact[col][:n]))
    fig, (ax1, ax2) = plt.subplots(2, 1, figsize=(7, 5), sharex=True)
    ax1.plot(direct["time"], tr_direct, "C0-", label="Riccati")
    ax1.plot(fact["time"], tr_fact, "C3--", label="Chandrasekhar quadrature")
    ax1.set_ylabel("tr P(t)")
    ax1.legend(loc="best", fontsize=8)
    ax1.grid(alpha=0.3)
    ax2.semilogy(direct["time"][:n], np.maximum(gap, 1e-300), "k-")
    ax2.set_ylabel("max entry gap")
    ax2.set_xlabel("time")
    ax2.grid(alpha=0.3)
    _save(fig, out_path)


def render_ess(pf_csv: str, out_path: str):
    """Effective sample size over time."""
    cols = read_csv_columns(pf_csv, ["time", "ess"])
    fig, ax = plt.subplots(figsize=(7, 3.0))
    ax.plot(cols["time"], cols["ess"], "C0-")
    ax.set_xlabel("time")
    ax.set_ylabel("ESS")
    ax.set_ylim(bottom=0)
    ax.grid(alpha=0.3)
    _save(fig, out_path)


def render_innovation(innov_csv: str, out_path: str, dt: float | None = None):
    """Innovation whiteness: normal QQ plot and cumulative quadratic variation."""
    cols = read_csv_columns(innov_csv, ["time", "nu_1"])
    nu_cols = [c for c in cols if c.startswith("nu_")]
    times = cols["time"]
    if dt is None:
        if len(times) < 2:
            raise FigureError(f"{innov_csv}: need at least two rows to infer dt")
        dt = float(times[1] - times[0])
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(8.5, 3.4))
    for name in nu_cols:
        z = np.sort(cols[name] / np.sqrt(dt))
        from scipy.stats import norm

        q = norm.ppf((np.arange(z.size) + 0.5) / z.size)
        ax1.plot(q, z, ".", ms=2, label=name)
        qv = np.cumsum(cols[name] ** 2)
        ax2.plot(times, qv, lw=1.0, label=name)
    lims = ax1.get_xlim()
    ax1.plot(lims, lims, "k--", lw=0.8)
    ax1.set_xlabel("normal quantile")
    ax1.set_ylabel("scaled innovation quantile")
    ax1.grid(alpha=0.3)
    ax2.plot(times, times, "k--", lw=0.8, label="t")
    ax2.set_xlabel("time")
    ax2.set_ylabel("cumulative QV")
    ax2.grid(alpha=0.3)
    ax2.legend(fontsize=7)
    _save(fig, out_path)
