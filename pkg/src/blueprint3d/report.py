"""Plots and delimited outputs for the batch commands.

Every command that produces numbers also renders them: training writes the
loss curve as CSV plus a figure, evaluation writes metrics with distance
histograms, and preparation writes weight-colored point clouds plus weight
and distance histograms. All figures render off-screen.
"""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.cm as cm
import matplotlib.pyplot as plt
import numpy as np

from .geometry import save_point_cloud_ply
from .sampling import SampleSet, SampleWeights, SurfaceScan

_CURVE_COLS = ("step", "total", "value", "normal", "edge")


def write_loss_report(
    out_dir: str | Path, rows, stem: str = "loss", append: bool = False
) -> tuple[Path, Path]:
    """Loss curve as {stem}.csv and {stem}.png; returns both paths.

    `append` keeps the rows already in {stem}.csv in front of the new ones,
    so a resumed run extends its curve instead of erasing it.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / f"{stem}.csv"
    if append and csv_path.exists():
        with open(csv_path, newline="") as f:
            prior = [
                (int(r[0]), float(r[1]), float(r[2]), float(r[3]), float(r[4]))
                for r in list(csv.reader(f))[1:]
            ]
        rows = prior + list(rows)
    with open(csv_path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(_CURVE_COLS)
        w.writerows(rows)

    data = np.asarray([list(r) for r in rows], dtype=np.float64).reshape(-1, 5)
    fig, ax = plt.subplots(figsize=(7, 4.2))
    if len(data):
        ax.plot(data[:, 0], data[:, 1], color="k", lw=1.6, label="total")
        for i, (name, color) in enumerate(
            zip(("value", "normal", "edge"), ("tab:blue", "tab:orange", "tab:green")), start=2
        ):
            ax.plot(data[:, 0], data[:, i], color=color, lw=1.0, alpha=0.8, label=name)
        if np.all(data[:, 1] > 0):
            ax.set_yscale("log")
    ax.set_xlabel("step")
    ax.set_ylabel("loss")
    ax.legend(frameon=False, fontsize=9)
    ax.set_title("training loss")
    fig.tight_layout()
    png_path = out_dir / f"{stem}.png"
    fig.savefig(png_path, dpi=110)
    plt.close(fig)
    return csv_path, png_path


def write_metrics_report(
    out_dir: str | Path,
    iou: float,
    chamfer: float,
    d_recon_to_truth: np.ndarray,
    d_truth_to_recon: np.ndarray,
    stem: str = "metrics",
) -> tuple[Path, Path]:
    """metrics.csv plus a distance-histogram figure; returns both paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / f"{stem}.csv"
    with open(csv_path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(("metric", "value"))
        w.writerow(("volumetric_iou", f"{iou:.6f}"))
        w.writerow(("chamfer", f"{chamfer:.6g}"))
        w.writerow(("mean_dist_recon_to_truth", f"{float(d_recon_to_truth.mean()):.6g}"))
        w.writerow(("mean_dist_truth_to_recon", f"{float(d_truth_to_recon.mean()):.6g}"))

    fig, axes = plt.subplots(1, 2, figsize=(9, 3.6), sharey=True)
    hi = max(float(d_recon_to_truth.max()), float(d_truth_to_recon.max()), 1e-9)
    bins = np.linspace(0.0, hi, 60)
    for ax, d, title in zip(
        axes, (d_recon_to_truth, d_truth_to_recon), ("recon → truth", "truth → recon")
    ):
        ax.hist(d, bins=bins, color="tab:blue", alpha=0.85)
        ax.axvline(float(d.mean()), color="k", lw=1.0, ls="--")
        ax.set_title(title, fontsize=10)
        ax.set_xlabel("nearest surface distance")
    axes[0].set_ylabel("samples")
    fig.suptitle(f"IoU {iou:.4f}   Chamfer {chamfer:.5g}", fontsize=11)
    fig.tight_layout(rect=(0, 0, 1, 0.93))
    png_path = out_dir / f"{stem}.png"
    fig.savefig(png_path, dpi=110)
    plt.close(fig)
    return csv_path, png_path


def write_prep_report(
    out_dir: str | Path,
    stem: str,
    scan: SurfaceScan,
    weights: SampleWeights,
    samples: SampleSet,
) -> tuple[Path, Path]:
    """Weight-colored scan PLY plus weight/distance histograms.

    The PLY colors each scan point by its normalized draw weight (viridis),
    so thin structures should glow against the body when adaptivity works.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    w = weights.weight
    lo, hi = float(w.min()), float(w.max())
    t = (w - lo) / (hi - lo) if hi > lo else np.full_like(w, 0.5)
    colors = (cm.viridis(t)[:, :3] * 255).astype(np.uint8)
    ply_path = out_dir / f"{stem}_weights.ply"
    ply_path.write_bytes(save_point_cloud_ply(scan.cloud, colors))

    fig, axes = plt.subplots(1, 3, figsize=(11, 3.4))
    axes[0].hist(w * len(w), bins=60, color="tab:purple", alpha=0.85)
    axes[0].set_title("draw weight × n", fontsize=10)
    axes[0].set_yscale("log")
    axes[1].hist(samples.sdf, bins=60, color="tab:blue", alpha=0.85)
    axes[1].axvline(0.0, color="k", lw=1.0, ls="--")
    axes[1].set_title("sample signed distance", fontsize=10)
    axes[2].hist(samples.value, bins=60, range=(0.0, 1.0), color="tab:green", alpha=0.85)
    axes[2].set_title("sample occupancy value", fontsize=10)
    for ax in axes:
        ax.tick_params(labelsize=8)
    fig.suptitle(f"{stem}: {len(samples.positions)} samples from {len(w)} scan points", fontsize=11)
    fig.tight_layout(rect=(0, 0, 1, 0.92))
    png_path = out_dir / f"{stem}_diag.png"
    fig.savefig(png_path, dpi=110)
    plt.close(fig)
    return ply_path, png_path


def nonuniformity(weights: SampleWeights) -> float:
    """Max/mean draw-weight ratio; 1.0 means uniform sampling."""
    w = weights.weight
    return float(w.max() / w.mean()) if len(w) else 1.0
