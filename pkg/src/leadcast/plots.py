"""Figure rendering for the report path.

All rendering is headless (Agg); the CSV files written by `run` remain the
machine-readable contract, figures are a human-facing supplement.
"""

from __future__ import annotations

import csv
from collections import defaultdict

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402


def _read_csv(path: str) -> list:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def render_margins(bounds_csv: str, out_path: str) -> str:
    """One panel per family: bound margin against prefix length, one line
    per benchmark, with the violation threshold at zero."""
    rows = _read_csv(bounds_csv)
    per_family: dict = defaultdict(lambda: defaultdict(list))
    for row in rows:
        per_family[row["family"]][row["benchmark"]].append(
            (int(row["n"]), float(row["margin"]))
        )
    families = sorted(per_family)
    fig, axes = plt.subplots(
        1, max(len(families), 1), figsize=(5.5 * max(len(families), 1), 4.0), squeeze=False
    )
    for ax, family in zip(axes[0], families):
        for name in sorted(per_family[family]):
            pts = sorted(per_family[family][name])
            ax.plot([p[0] for p in pts], [p[1] for p in pts], lw=1.0, label=name)
        ax.axhline(0.0, color="black", lw=0.8, ls="--")
        ax.set_title(f"{family}: bound margin")
        ax.set_xlabel("rounds")
        ax.set_ylabel("rhs - lhs")
        if len(per_family[family]) <= 12:
            ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(out_path, dpi=120)
    plt.close(fig)
    return out_path


def render_potential(diagnostics_csv: str, out_path: str) -> str:
    """Potential against its cumulative per-round budget."""
    rows = _read_csv(diagnostics_csv)
    ns = [int(r["n"]) for r in rows]
    potential = [float(r["potential_sq"]) for r in rows]
    budgets = []
    acc = 0.0
    for r in rows:
        acc += float(r["budget"])
        budgets.append(acc)
    slack = [float(r["cum_slack"]) for r in rows]
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(11, 4))
    ax1.plot(ns, potential, lw=1.2, label="potential")
    ax1.plot(ns, budgets, lw=1.2, ls="--", label="cumulative budget")
    ax1.set_xlabel("rounds")
    ax1.set_ylabel("squared norm")
    ax1.set_title("defensive potential vs budget")
    ax1.legend(fontsize=8)
    ax2.plot(ns, slack, lw=1.2, color="firebrick")
    ax2.set_xlabel("rounds")
    ax2.set_ylabel("cumulative slack")
    ax2.set_title("budget slack")
    fig.tight_layout()
    fig.savefig(out_path, dpi=120)
    plt.close(fig)
    return out_path


def render_proximity_trend(medians: dict, out_path: str) -> str:
    """Median per-round prediction proximity across horizons."""
    ns = sorted(int(k) for k in medians)
    vals = [medians[n] if n in medians else medians[str(n)] for n in ns]
    fig, ax = plt.subplots(figsize=(5.5, 4))
    ax.plot(ns, vals, marker="o")
    ax.set_xscale("log")
    ax.set_xlabel("rounds N")
    ax.set_ylabel("median sum (phi - mu)^2 / N")
    ax.set_title("prediction proximity trend")
    fig.tight_layout()
    fig.savefig(out_path, dpi=120)
    plt.close(fig)
    return out_path
