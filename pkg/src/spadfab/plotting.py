"""Matplotlib figures written next to the CSV reports.

Uses the Agg backend and strips PNG metadata so reruns give identical files.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

RC = {
    "font.size": 9,
    "axes.labelsize": 9,
    "legend.fontsize": 7,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "figure.dpi": 100,
}


def _save(fig, path):
    fig.savefig(path, dpi=120, bbox_inches="tight", metadata={"Software": None})
    plt.close(fig)


def plot_linearity(rows, path) -> None:
    """Mean count vs. flux, XOR combinations left and OR bias settings right."""
    with plt.rc_context(RC):
        fig, (ax_x, ax_o) = plt.subplots(1, 2, figsize=(8, 3.2))
        for ax, combo, title in ((ax_x, "xor", "XOR tree"), (ax_o, "or", "16-SPAD OR tree")):
            labels = sorted({r.setting for r in rows if r.combo == combo},
                            key=lambda s: [r.n_spads for r in rows if r.setting == s][0] if combo == "xor" else s)
            for label in labels:
                sel = [r for r in rows if r.combo == combo and r.setting == label]
                flux = np.array([r.flux_hz for r in sel])
                mean = np.array([r.mean_count for r in sel])
                std = np.array([r.std_count for r in sel])
                ax.errorbar(flux, np.maximum(mean, 1e-1), yerr=std, marker="o", ms=3, capsize=2, label=label)
            ax.set_xscale("log")
            ax.set_yscale("log")
            ax.set_xlabel("photon flux per SPAD [Hz]")
            ax.set_title(title)
            if labels:
                ax.legend()
        ax_x.set_ylabel("rising edges counted")
        _save(fig, path)


def plot_tof(result, tdc, path) -> None:
    with plt.rc_context(RC):
        fig, ax = plt.subplots(figsize=(6, 3.2))
        n = tdc.active_codes
        t_ns = np.arange(n) * tdc.lsb_ps / 1000.0
        for label in result.labels:
            h = result.histograms[label]
            ax.step(t_ns, h.bins[:n], where="post",
                    label=f"{label} (SBR {result.sbr[label]:.3g})")
        lo, hi = result.signal_window
        ax.axvspan(lo * tdc.lsb_ps / 1000.0, hi * tdc.lsb_ps / 1000.0, color="k", alpha=0.1)
        ax.set_yscale("symlog", linthresh=1)
        ax.set_xlabel("time in window [ns]")
        ax.set_ylabel("first-photon counts")
        ax.legend()
        _save(fig, path)


def plot_array(frame, lsb_ps: int, path) -> None:
    """Count map of photon-counting cells and peak-time map of ToF cells."""
    from .arraysim import ARRAY_SIDE

    counts = np.where(frame.counts >= 0, frame.counts, np.nan).astype(float)
    peaks = np.full((ARRAY_SIDE, ARRAY_SIDE), np.nan)
    for (x, y), h in frame.histograms.items():
        if h.total:
            peaks[y, x] = h.peak_code * lsb_ps / 1000.0
    with plt.rc_context(RC):
        fig, (a, b) = plt.subplots(1, 2, figsize=(8, 3.6))
        im = a.imshow(counts, origin="upper", cmap="viridis")
        a.set_title("photon counts")
        fig.colorbar(im, ax=a, shrink=0.8)
        im = b.imshow(peaks, origin="upper", cmap="magma")
        b.set_title("ToF histogram peak [ns]")
        fig.colorbar(im, ax=b, shrink=0.8)
        for ax in (a, b):
            ax.grid(False)
            ax.set_xlabel("x")
        a.set_ylabel("y")
        _save(fig, path)
