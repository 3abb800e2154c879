"""Report figures rendered to image files."""

from __future__ import annotations

import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=120, metadata={"Software": None})
    plt.close(fig)
    return path


def energy_trace_figure(trace, path):
    fig, ax = plt.subplots(figsize=(5, 3.2))
    ax.plot(np.arange(len(trace)), trace, marker="o", ms=3)
    ax.set_xlabel("swap pass")
    ax.set_ylabel("total energy")
    ax.set_yscale("log" if np.all(np.asarray(trace) > 0) else "linear")
    return _save(fig, path)


def error_histogram_figure(distances, path):
    fig, ax = plt.subplots(figsize=(5, 3.2))
    ax.hist(distances, bins=50, color="tab:blue")
    ax.set_xlabel("one-sided error / bbox diagonal")
    ax.set_ylabel("original vertices")
    return _save(fig, path)


def dr_histogram_figure(bins, counts, path):
    fig, ax = plt.subplots(figsize=(5, 3.2))
    ax.bar(0.5 * (bins[1:] + bins[:-1]), counts, width=np.diff(bins), color="tab:orange")
    ax.set_xlabel("relative aspect-ratio error")
    ax.set_ylabel("clusters")
    return _save(fig, path)


def write_figures(out_dir, stem, trace=None, distances=None, dr=None) -> list[str]:
    """Write whichever figures have data; returns the file paths."""
    paths = []
    if trace is not None and len(trace):
        paths.append(energy_trace_figure(trace, os.path.join(out_dir, f"{stem}_energy.png")))
    if distances is not None and len(distances):
        paths.append(error_histogram_figure(distances, os.path.join(out_dir, f"{stem}_error.png")))
    if dr is not None and dr.histogram.sum() > 0:
        paths.append(dr_histogram_figure(dr.bins, dr.histogram,
                                         os.path.join(out_dir, f"{stem}_dr.png")))
    return paths
