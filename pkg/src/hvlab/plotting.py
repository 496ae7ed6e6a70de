"""Report figures.  Rendered off-screen with the Agg backend."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

# no timestamps or version strings, so reruns give identical files
_META = {"Software": None}


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=100, metadata=_META)
    plt.close(fig)


def _positive(vals):
    return [v if v > 0 else np.nan for v in vals]


def plot_fdll(rows, path):
    d = [r["d"] for r in rows]
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(8, 3.2))
    ax1.plot(d, [r["V"] for r in rows], "k-", label="V(d)")
    ax1.plot(d, [r["reconstructed"] for r in rows], "o", mfc="none", label="reconstructed")
    ax1.set_xscale("log")
    ax1.set_xlabel("d")
    ax1.legend()
    ax2.semilogy(d, _positive([r["rel_error"] for r in rows]), "s-")
    ax2.set_xscale("log")
    ax2.set_xlabel("d")
    ax2.set_ylabel("relative error")
    _save(fig, path)


def plot_trajectory(rows, path):
    t = [r["t"] for r in rows]
    fig, ax = plt.subplots(figsize=(5, 3.5))
    for key, lab in (("distance_over_n", "distance / N"), ("commutator_over_n", "commutator / N"), ("remainder_over_n", "remainder / N")):
        ax.semilogy(t, _positive([r[key] for r in rows]), label=lab)
    ax.set_xlabel("t")
    ax.legend()
    _save(fig, path)


def plot_sweep(report, path):
    h = np.asarray(report.hbars, dtype=float)
    fig, ax = plt.subplots(figsize=(5, 3.5))
    for vals, fit, marker, lab in (
        (report.distance, report.distance_fit, "o", "distance / N"),
        (report.remainder, report.remainder_fit, "s", "sup remainder / N"),
    ):
        if not len(h):
            continue
        ax.loglog(h, _positive(vals), marker, label=lab)
        if fit is not None:
            ax.loglog(h, np.exp(fit.intercept) * h**fit.slope, "--", lw=0.8, label=f"slope {fit.slope:.2f}")
    ax.set_xlabel("hbar")
    if len(h):
        ax.legend()
    _save(fig, path)


def plot_lemma3(rows, path):
    fig, ax = plt.subplots(figsize=(5, 3.5))
    centers = sorted({(r["z_x"], r["z_y"], r["z_z"]) for r in rows})
    for z in centers:
        sub = [r for r in rows if (r["z_x"], r["z_y"], r["z_z"]) == z]
        ax.plot([r["r"] for r in sub], [r["ratio"] for r in sub], "o-", label=f"z = ({z[0]:g}, {z[1]:g}, {z[2]:g})")
    ax.set_xscale("log")
    ax.set_xlabel("r")
    ax.set_ylabel("lhs / rhs")
    if centers:
        ax.legend()
    _save(fig, path)


def plot_assumption9(rows, path):
    fig, ax = plt.subplots(figsize=(5, 3.5))
    hbars = sorted({r["hbar"] for r in rows}, reverse=True)
    for h in hbars:
        sub = [r for r in rows if r["hbar"] == h]
        ax.plot([r["t"] for r in sub], [r["ratio"] for r in sub], "o-", label=f"hbar = 1/{1 / h:g}")
    ax.set_xlabel("t")
    ax.set_ylabel("ratio")
    if hbars:
        ax.legend()
    _save(fig, path)


RENDERERS = {
    "fdll": plot_fdll,
    "trajectory": plot_trajectory,
    "sweep": plot_sweep,
    "lemma3": plot_lemma3,
    "assumption9": plot_assumption9,
}


def render(kind, data, path):
    RENDERERS[kind](data, path)
