"""Matplotlib figure rendering for the CLI report paths.

Figures are written next to the delimited outputs; CSV remains the contract
and every figure is derived from the same data the CSV carries.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def figure_path(csv_path) -> Path:
    return Path(csv_path).with_suffix(".png")


def render_score_spectra(table, path) -> None:
    """Sorted per-layer importance spectra on a log scale."""
    fig, ax = plt.subplots(figsize=(7, 4))
    for l, layer in enumerate(table.layers):
        spectrum = layer.hinf_sq[layer.rank]
        ax.semilogy(np.arange(1, spectrum.size + 1), np.maximum(spectrum, 1e-300),
                    label=f"layer {l}")
    ax.set_xlabel("state rank")
    ax.set_ylabel("squared H-infinity score")
    ax.set_title(f"importance spectra ({table.criterion.value})")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render_freqresp(thetas, sigma_max, path, layer_index: int) -> None:
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.semilogy(thetas, np.maximum(sigma_max, 1e-300))
    ax.set_xlabel("theta [rad]")
    ax.set_ylabel("largest singular value")
    ax.set_title(f"frequency response, layer {layer_index}")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render_ablation(remaining_by_method: dict, distortion_by_method: dict, path) -> None:
    """Remaining-dimension bars per layer and mean distortion per method."""
    methods = list(remaining_by_method)
    fig, (ax0, ax1) = plt.subplots(1, 2, figsize=(10, 4))
    num_layers = len(next(iter(remaining_by_method.values())))
    x = np.arange(num_layers)
    width = 0.8 / max(len(methods), 1)
    for k, method in enumerate(methods):
        ax0.bar(x + k * width, remaining_by_method[method], width, label=method)
    ax0.set_xticks(x + width * (len(methods) - 1) / 2)
    ax0.set_xticklabels([f"L{l}" for l in range(num_layers)])
    ax0.set_ylabel("mean remaining states")
    ax0.set_title("surviving dimensions per layer")
    ax0.legend(fontsize=8)
    ax1.bar(methods, [distortion_by_method[m] for m in methods])
    ax1.set_yscale("log")
    ax1.set_ylabel("mean output distortion")
    ax1.set_title("model-level distortion")
    ax1.tick_params(axis="x", rotation=20)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render_bound_ratios(ratios, path, title: str) -> None:
    ratios = np.asarray(ratios, dtype=float)
    positive = ratios[ratios > 0]
    if positive.size == 0:
        positive = np.array([1e-16])
    lo = np.floor(np.log10(positive.min()))
    hi = max(np.ceil(np.log10(positive.max())), lo + 1)
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.hist(np.maximum(ratios, 10.0**lo), bins=np.logspace(lo, hi, 40))
    ax.set_xscale("log")
    ax.axvline(1.0, color="red", linestyle="--", label="bound")
    ax.set_xlabel("measured / bound")
    ax.set_ylabel("count")
    ax.set_title(title)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
