"""
SVG diagnostics: heatmaps of grid fields and line plots of tables.

matplotlib is optional (the ``plots`` extra); a missing or failing backend
turns into a notice and no file.
"""
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np


def _pyplot():
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    return plt


def heatmap(values: np.ndarray, path: Path, title: str,
            extent: Optional[Tuple[float, float, float, float]] = None) -> Tuple[Optional[str], List[str]]:
    """Write ``values`` (rows = y) as an SVG heatmap. Returns the path or None, and notices."""
    notices: List[str] = []
    try:
        plt = _pyplot()
        fig, ax = plt.subplots(figsize=(5.0, 4.2))
        im = ax.imshow(np.ma.masked_invalid(values), origin="lower", extent=extent, cmap="viridis")
        ax.set_title(title, fontsize=9)
        fig.colorbar(im, ax=ax, fraction=0.046, pad=0.04)
        fig.tight_layout()
        path.parent.mkdir(parents=True, exist_ok=True)
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)
        return str(path), notices
    except Exception as exc:
        notices.append(f"plot {path.name} failed: {exc}")
        return None, notices


def line_plot(series: Dict[str, Tuple[Sequence[float], Sequence[float]]], path: Path, title: str,
              xlabel: str, ylabel: str, log_y: bool = False) -> Tuple[Optional[str], List[str]]:
    """One SVG with a line per named (x, y) series."""
    notices: List[str] = []
    try:
        plt = _pyplot()
        fig, ax = plt.subplots(figsize=(6.0, 4.0))
        for label, (x, y) in series.items():
            ax.plot(x, y, marker=".", label=label)
        if log_y:
            ax.set_yscale("log")
        ax.set_xlabel(xlabel)
        ax.set_ylabel(ylabel)
        ax.set_title(title, fontsize=9)
        ax.grid(True, ls=":", alpha=0.4)
        if len(series) > 1:
            ax.legend(fontsize=7)
        fig.tight_layout()
        path.parent.mkdir(parents=True, exist_ok=True)
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)
        return str(path), notices
    except Exception as exc:
        notices.append(f"plot {path.name} failed: {exc}")
        return None, notices
