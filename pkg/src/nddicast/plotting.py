"""PNG rendering of index rasters and comparison figures.

Index values in [-1, 1] map linearly onto a colour map; invalid pixels are
drawn gray 128. All writers strip the software tag from PNG metadata so that
reruns produce identical bytes.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

INDEX_CMAP = "BrBG"
PREDICTION_CMAP = "gray"
INVALID_GRAY = 128

STYLE = {
    "font.size": 8,
    "axes.titlesize": 8,
    "axes.labelsize": 8,
    "xtick.labelsize": 7,
    "ytick.labelsize": 7,
    "legend.fontsize": 7,
    "figure.dpi": 100,
    "savefig.dpi": 100,
}

_PNG_META = {"Software": None}


def colorize(values, valid=None, cmap: str = INDEX_CMAP) -> np.ndarray:
    """Map [-1, 1] to 8-bit RGB; pixels with ``valid == False`` become gray."""
    values = np.asarray(values, dtype=np.float64)
    scaled = np.clip((values + 1.0) / 2.0, 0.0, 1.0)
    rgb = matplotlib.colormaps[cmap](scaled, bytes=True)[..., :3].copy()
    if valid is not None:
        rgb[~np.asarray(valid, dtype=bool)] = INVALID_GRAY
    return rgb


def save_raster_png(path, values, valid=None, cmap: str = INDEX_CMAP) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    plt.imsave(path, colorize(values, valid, cmap), format="png", metadata=_PNG_META)
    return path


def _show(ax, raster, cmap):
    ax.imshow(colorize(raster.values, raster.valid, cmap), interpolation="nearest")
    ax.set_xticks([])
    ax.set_yticks([])


def save_comparison_figure(path, tile, columns=("NDVI", "NDMI", "NDDI_early", "NDDI_late"),
                           cmap: str = INDEX_CMAP) -> Path:
    """Prediction row above ground-truth row, one column per model."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(2, len(columns), figsize=(1.8 * len(columns), 3.9), squeeze=False)
        for j, name in enumerate(columns):
            _show(axes[0, j], tile.predicted[name], cmap)
            _show(axes[1, j], tile.truth[name], cmap)
            axes[0, j].set_title(name.replace("_", " "))
        axes[0, 0].set_ylabel("PR")
        axes[1, 0].set_ylabel("GT")
        fig.suptitle(f"{tile.location_id} tile {tile.tile_index:02d}")
        fig.tight_layout()
        fig.savefig(path, format="png", metadata=_PNG_META)
        plt.close(fig)
    return path


def save_loss_curves(path, histories: dict) -> Path:
    """Per-epoch train (solid) and validation (dashed) loss, log scale."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(4.5, 3.0))
        for i, (name, hist) in enumerate(histories.items()):
            color = f"C{i}"
            epochs = np.arange(1, len(hist.train_loss) + 1)
            ax.semilogy(epochs, hist.train_loss, color=color, label=f"{name} train")
            if hist.val_loss:
                ax.semilogy(epochs[: len(hist.val_loss)], hist.val_loss, color=color, ls="--", label=f"{name} val")
        ax.set_xlabel("epoch")
        ax.set_ylabel("masked MSE")
        ax.legend(frameon=False)
        fig.tight_layout()
        fig.savefig(path, format="png", metadata=_PNG_META)
        plt.close(fig)
    return path
