"""Figure rendering for harness output: log-log rate curves and level-set
count trajectories, written to image files alongside the CSV."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def _series(rows, group_keys):
    """metric+group -> {N: [values]} over non-NA measurement rows."""
    groups = {}
    for row in rows:
        if row["metric"] == "na_count" or row["value"] == "NA":
            continue
        key = (row["metric"],) + tuple(row[k] for k in group_keys)
        groups.setdefault(key, {}).setdefault(int(row["N"]), []).append(float(row["value"]))
    return groups


def render_figure(rows: list[dict], experiment: str, path: str) -> None:
    """Render the standard figure for one experiment's rows to `path`."""
    if experiment in ("cov_rates", "prec_rates"):
        _render_rates(rows, ("nu",), path, ylabel="mean normalized error")
    elif experiment == "eigengap_example":
        _render_rates(rows, ("nu",), path, ylabel="median subspace error", agg=np.median)
    elif experiment == "r_concentration":
        _render_rates(rows, ("sigma_zeta",), path, ylabel="mean cross-covariance error")
    elif experiment in ("sim_ols", "sim_acls"):
        _render_sim(rows, path, with_jstar=(experiment == "sim_acls"))
    else:
        raise ValueError(f"no figure defined for experiment {experiment!r}")


def _render_rates(rows, group_keys, path, ylabel, agg=np.mean):
    groups = _series(rows, group_keys)
    fig, ax = plt.subplots(figsize=(6.4, 4.8))
    for key in sorted(groups):
        ns = sorted(groups[key])
        ys = [agg(groups[key][n]) for n in ns]
        label = key[0] + "".join(f" {k}={v}" for k, v in zip(group_keys, key[1:]))
        ax.loglog(ns, ys, marker="o", markersize=3, linewidth=1, label=label)
    ax.set_xlabel("N")
    ax.set_ylabel(ylabel)
    ax.grid(True, which="both", alpha=0.3)
    if len(groups) <= 12:
        ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def _render_sim(rows, path, with_jstar):
    groups = _series(rows, ("sigma_zeta",))
    ncols = 2 if with_jstar else 1
    fig, axes = plt.subplots(1, ncols, figsize=(6.4 * ncols, 4.8), squeeze=False)
    ax_err = axes[0][0]
    for key in sorted(groups):
        metric = key[0]
        if metric == "j_star":
            continue
        ns = sorted(groups[key])
        ys = [np.mean(groups[key][n]) for n in ns]
        style = "--" if metric == "acls_err" else "-"
        ax_err.loglog(ns, ys, style, marker="o", markersize=3, label=f"{metric} sigma={key[1]}")
    ax_err.set_xlabel("N")
    ax_err.set_ylabel("mean aligned error")
    ax_err.grid(True, which="both", alpha=0.3)
    ax_err.legend(fontsize=7)
    if with_jstar:
        ax_j = axes[0][1]
        for key in sorted(groups):
            if key[0] != "j_star":
                continue
            ns = sorted(groups[key])
            ys = [np.median(groups[key][n]) for n in ns]
            ax_j.semilogx(ns, ys, marker="s", markersize=3, label=f"median J* sigma={key[1]}")
        ax_j.set_xlabel("N")
        ax_j.set_ylabel("median selected level-set count")
        ax_j.grid(True, which="both", alpha=0.3)
        ax_j.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
