"""Figure rendering for the CLI report paths.

All figures are rendered with the Agg backend at fixed size and dpi, with
the Software metadata stripped, so that rerunning a command reproduces the
PNG byte-for-byte (within one matplotlib version).
"""
from __future__ import annotations

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402  (backend must be pinned first)

__all__ = [
    "plot_master", "plot_trajectory", "plot_ensemble", "plot_oracle", "plot_sweep",
]

_FIGSIZE = (7.0, 4.2)
_DPI = 120
_GRAY = "0.65"
_MAX_MEMBER_CURVES = 64


def _save(fig, path):
    fig.savefig(path, dpi=_DPI, metadata={"Software": None})
    plt.close(fig)


def _axes(title, ylabel="excitation probability"):
    fig, ax = plt.subplots(figsize=_FIGSIZE)
    ax.set_xlabel("time (1/kappa)")
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    return fig, ax


def plot_master(t, pe, xi_abs2, path):
    fig, ax = _axes("Unconditional excitation probability")
    ax.plot(t, pe, color="green", lw=1.8, label="master equation")
    ax.plot(t, xi_abs2, color="steelblue", lw=1.0, ls="--", label="|xi(t)|^2")
    ax.legend(loc="upper right")
    _save(fig, path)


def plot_trajectory(t, pe, me_pe, jump1_times, jump2_times, path, title):
    fig, ax = _axes(title)
    ax.plot(t, pe, color="crimson", lw=1.0, label="conditional")
    ax.plot(t, me_pe, color="green", lw=1.5, label="master equation")
    for i, (times, mark) in enumerate(((jump1_times, "x"), (jump2_times, "+")), start=1):
        if len(times):
            ax.plot(times, [0.02] * len(times), mark, color="black",
                    label=f"clicks ch{i}")
    ax.legend(loc="upper right")
    _save(fig, path)


def plot_ensemble(t, members_pe, mean_pe, me_pe, path, title):
    fig, ax = _axes(title)
    if members_pe is not None:
        for row in members_pe[:_MAX_MEMBER_CURVES]:
            ax.plot(t, row, color=_GRAY, lw=0.5, zorder=1)
    ax.plot(t, mean_pe, color="red", lw=1.8, label="ensemble mean", zorder=3)
    ax.plot(t, me_pe, color="green", lw=1.8, ls="--", label="master equation", zorder=4)
    ax.set_ylim(-0.02, 1.02)
    ax.legend(loc="upper right")
    _save(fig, path)


def plot_oracle(t, pe_reduced, pe_extended, path):
    fig, ax = _axes("Reduced filter vs extended-system filter")
    ax.plot(t, pe_reduced, color="crimson", lw=1.2, label="reduced (2-dim)")
    ax.plot(t, pe_extended, color="navy", lw=1.0, ls="--", label="extended (4-dim)")
    ax.legend(loc="upper right")
    _save(fig, path)


def plot_sweep(rs, fractions, ci_low, ci_high, threshold, path):
    fig, ax = _axes(f"Fraction of trajectories with max P_e >= {threshold}",
                    ylabel="exceedance fraction")
    ax.set_xlabel("beam splitter ratio r")
    yerr = [[f - lo for f, lo in zip(fractions, ci_low)],
            [hi - f for f, hi in zip(fractions, ci_high)]]
    ax.errorbar(rs, fractions, yerr=yerr, fmt="o-", color="crimson", capsize=3)
    _save(fig, path)
