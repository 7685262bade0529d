"""Figure rendering for the CLI reports.

Figures go to PNG files beside the CSV output.  PNG metadata is stripped
so reruns with the same seed produce byte-identical files.
"""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

RC = {
    "font.size": 9,
    "axes.titlesize": 10,
    "axes.labelsize": 9,
    "legend.fontsize": 8,
    "xtick.direction": "in",
    "ytick.direction": "in",
    "savefig.dpi": 120,
}


def _save(fig, path: Path) -> None:
    fig.savefig(path, format="png", metadata={"Software": None})
    plt.close(fig)


def plot_reconstruction(obj: np.ndarray, image: np.ndarray, path: Path, title: str = "") -> None:
    with plt.rc_context(RC):
        fig, (ax0, ax1) = plt.subplots(1, 2, figsize=(6.4, 3.2), constrained_layout=True)
        ax0.imshow(obj, cmap="gray", interpolation="nearest")
        ax0.set_title("object transmission")
        im = ax1.imshow(image, cmap="gray", interpolation="nearest")
        ax1.set_title(title or "reconstruction")
        fig.colorbar(im, ax=ax1, shrink=0.8)
        for ax in (ax0, ax1):
            ax.set_xticks([])
            ax.set_yticks([])
        _save(fig, path)


def plot_sweep(fractions, e_nu, bounds, path: Path, errors=None) -> None:
    with plt.rc_context(RC):
        fig, ax = plt.subplots(figsize=(4.8, 3.4), constrained_layout=True)
        ax.errorbar(fractions, e_nu, yerr=errors, fmt="o-", ms=3, capsize=2, label=r"measured $E_\nu$")
        ax.plot(fractions, bounds, "s--", ms=3, label=r"bound $E_\nu^L$")
        ax.set_xlabel("intercepted fraction")
        ax.set_ylabel("decoy QBER")
        ax.set_xlim(-0.02, 1.02)
        ax.legend(frameon=False)
        _save(fig, path)


def plot_error_floors(ns, errors, path: Path) -> None:
    with plt.rc_context(RC):
        fig, ax = plt.subplots(figsize=(4.2, 3.0), constrained_layout=True)
        ax.bar(ns, errors, color="0.4")
        ax.set_xlabel("photon number n")
        ax.set_ylabel("minimum SRM error $e_n$")
        ax.set_xticks(list(ns))
        _save(fig, path)
