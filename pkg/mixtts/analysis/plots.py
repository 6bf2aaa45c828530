"""SVG figures: language-coloured embedding scatter and attention heatmaps."""
import logging
from pathlib import Path
from typing import Optional, Sequence, Union

import matplotlib
from matplotlib.figure import Figure
from matplotlib.patches import Rectangle

import numpy as np

from mixtts.frontend.inventory import Language

logger = logging.getLogger(__name__)

LANGUAGE_STYLE = {
    Language.MAN: ('Mandarin', '#d62728', 'o'),
    Language.ENG: ('English', '#1f77b4', '^'),
    Language.SPECIAL: ('Special', '#7f7f7f', 's'),
}

# fixed ids and no timestamp keep repeated renders byte-identical
_SVG_RC = {'svg.hashsalt': 'mixtts', 'svg.fonttype': 'path'}


def _save(fig: Figure, out_path: Union[str, Path]) -> Path:
    out_path = Path(out_path)
    with matplotlib.rc_context(_SVG_RC):
        fig.savefig(out_path, format='svg', metadata={'Date': None})
    logger.info('wrote %s', out_path)
    return out_path


# PUBLIC_INTERFACE
def plot_embedding(points: np.ndarray, languages: Sequence[Language], out_path: Union[str, Path],
                   labels: Optional[Sequence[str]] = None, title: str = '') -> Path:
    """Scatter 2-D points coloured by language, with a legend.

    An empty point set yields a figure with axes only.

    Raises:
        OSError: when ``out_path`` cannot be written
    """
    points = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    languages = [Language(lang) for lang in languages]
    fig = Figure(figsize=(6, 6))
    ax = fig.add_subplot(1, 1, 1)
    for language, (name, colour, marker) in LANGUAGE_STYLE.items():
        mask = np.array([lang is language for lang in languages], dtype=bool)
        if mask.any():
            ax.scatter(points[mask, 0], points[mask, 1], c=colour, marker=marker, s=24, label=name)
    if labels is not None:
        for (x, y), text in zip(points, labels):
            ax.annotate(text, (x, y), fontsize=6, alpha=0.7)
    if len(points):
        ax.legend(loc='best')
    ax.set_xlabel('t-SNE 1')
    ax.set_ylabel('t-SNE 2')
    if title:
        ax.set_title(title)
    return _save(fig, out_path)


# PUBLIC_INTERFACE
def plot_alignment(weights: np.ndarray, out_path: Union[str, Path], title: str = '') -> Path:
    """Heatmap of attention weights, decoder step on x and encoder step on y.

    Every cell is its own rectangle with id ``cell_<step>_<position>``.
    """
    weights = np.atleast_2d(np.asarray(weights, dtype=np.float64))
    steps, length = weights.shape
    fig = Figure(figsize=(max(4.0, min(12.0, steps / 8.0)), max(3.0, min(8.0, length / 6.0))))
    ax = fig.add_subplot(1, 1, 1)
    cmap = matplotlib.colormaps['viridis']
    peak = weights.max() if weights.size and weights.max() > 0 else 1.0
    for i in range(steps):
        for j in range(length):
            ax.add_patch(Rectangle((i, j), 1.0, 1.0, facecolor=cmap(weights[i, j] / peak),
                                   edgecolor='none', gid=f'cell_{i}_{j}'))
    ax.set_xlim(0, max(steps, 1))
    ax.set_ylim(0, max(length, 1))
    ax.set_xlabel('Decoder step')
    ax.set_ylabel('Encoder step')
    if title:
        ax.set_title(title)
    return _save(fig, out_path)
