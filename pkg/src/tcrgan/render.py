"""Three-panel comparison figures: input IR | predicted PMR | ground-truth PMR.

Layout and colours are fixed: IR uses the reversed ``gray`` colormap over the
sample's own range (cold cloud tops appear bright), both PMR panels use
``turbo`` over a shared ``[0, max(truth.max(), prediction.max())]`` scale.
Panels are separated by an 8-pixel white gutter and written as PNG.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from matplotlib import colormaps
from PIL import Image

IR_CMAP = "gray_r"
PMR_CMAP = "turbo"
GUTTER = 8


@dataclass
class Panel:
    ir: np.ndarray
    prediction: np.ndarray
    truth: np.ndarray
    pmr_vmin: float
    pmr_vmax: float

    def image(self) -> np.ndarray:
        h = self.ir.shape[0]
        gap = np.full((h, GUTTER, 3), 255, dtype=np.uint8)
        return np.concatenate([self.ir, gap, self.prediction, gap, self.truth], axis=1)


def colorize(values: np.ndarray, cmap: str, vmin: float, vmax: float) -> np.ndarray:
    span = vmax - vmin if vmax > vmin else 1.0
    scaled = np.clip((np.asarray(values, dtype=np.float64) - vmin) / span, 0.0, 1.0)
    rgba = colormaps[cmap](scaled, bytes=True)
    return rgba[..., :3]


def make_panel(ir: np.ndarray, prediction: np.ndarray, truth: np.ndarray) -> Panel:
    vmin = 0.0
    vmax = float(max(np.max(truth), np.max(prediction), vmin))
    return Panel(
        ir=colorize(ir, IR_CMAP, float(np.min(ir)), float(np.max(ir))),
        prediction=colorize(prediction, PMR_CMAP, vmin, vmax),
        truth=colorize(truth, PMR_CMAP, vmin, vmax),
        pmr_vmin=vmin,
        pmr_vmax=vmax,
    )


def save_panel(panel: Panel, path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(panel.image()).save(path)
    return path
