"""PSNR, RMSE, Pearson CC and SSIM, plus test-set reporting."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.ndimage import uniform_filter

from .dataset import ImageGrid, NormalizationStats, TCSample, denormalize

METRIC_NAMES = ("psnr", "rmse", "cc", "ssim")


class MetricError(ValueError):
    """A metric is undefined for the given images (e.g. correlation of a constant field)."""


@dataclass(frozen=True)
class MetricsConfig:
    data_max: float = 255.0
    ssim_c1: Optional[float] = None
    ssim_c2: Optional[float] = None
    ssim_mode: str = "global"
    window: int = 11

    def __post_init__(self):
        if not self.data_max > 0:
            raise ValueError(f"data_max must be positive, got {self.data_max}")
        if self.ssim_c1 is None:
            object.__setattr__(self, "ssim_c1", (0.01 * self.data_max) ** 2)
        if self.ssim_c2 is None:
            object.__setattr__(self, "ssim_c2", (0.03 * self.data_max) ** 2)
        if not (self.ssim_c1 > 0 and self.ssim_c2 > 0):
            raise ValueError("ssim constants must be positive")
        if self.ssim_mode not in ("global", "windowed"):
            raise ValueError(f"unknown ssim_mode {self.ssim_mode!r}")
        if self.window < 1 or self.window % 2 == 0:
            raise ValueError(f"window must be a positive odd integer, got {self.window}")


def _pair(x, y) -> tuple[np.ndarray, np.ndarray]:
    x = x.values if isinstance(x, ImageGrid) else x
    y = y.values if isinstance(y, ImageGrid) else y
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise ValueError(f"shape mismatch: {x.shape} vs {y.shape}")
    return x, y


def mse(x, y) -> float:
    x, y = _pair(x, y)
    return float(np.mean((x - y) ** 2))


def psnr(x, y, cfg: MetricsConfig = MetricsConfig()) -> float:
    """10 log10(peak^2 / MSE) in dB; ``math.inf`` for identical images."""
    err = mse(x, y)
    if err == 0:
        return math.inf
    return 10.0 * math.log10(cfg.data_max ** 2 / err)


def rmse(x, y) -> float:
    return math.sqrt(mse(x, y))


def pearson_cc(x, y) -> float:
    x, y = _pair(x, y)
    dx = x - x.mean()
    dy = y - y.mean()
    sx = math.sqrt(np.mean(dx * dx))
    sy = math.sqrt(np.mean(dy * dy))
    if sx == 0 or sy == 0:
        raise MetricError("correlation undefined for a constant image")
    return float(np.clip(np.mean(dx * dy) / (sx * sy), -1.0, 1.0))


def _ssim_formula(mx, my, vx, vy, cxy, c1, c2):
    return ((2 * mx * my + c1) * (2 * cxy + c2)) / ((mx ** 2 + my ** 2 + c1) * (vx + vy + c2))


def ssim(x, y, cfg: MetricsConfig = MetricsConfig()) -> float:
    """Global mode applies the formula once over the whole image; windowed averages it over uniform windows."""
    x, y = _pair(x, y)
    if cfg.ssim_mode == "global":
        mx, my = x.mean(), y.mean()
        dx, dy = x - mx, y - my
        val = _ssim_formula(mx, my, np.mean(dx * dx), np.mean(dy * dy), np.mean(dx * dy), cfg.ssim_c1, cfg.ssim_c2)
        return float(val)

    win = min(cfg.window, *x.shape)
    win -= 1 - win % 2
    filt = lambda a: uniform_filter(a, size=win, mode="reflect")  # noqa: E731
    mx, my = filt(x), filt(y)
    vx = filt(x * x) - mx * mx
    vy = filt(y * y) - my * my
    cxy = filt(x * y) - mx * my
    smap = _ssim_formula(mx, my, vx, vy, cxy, cfg.ssim_c1, cfg.ssim_c2)
    pad = win // 2
    inner = smap[pad:smap.shape[0] - pad, pad:smap.shape[1] - pad] if min(smap.shape) > 2 * pad else smap
    return float(inner.mean())


def all_metrics(x, y, cfg: MetricsConfig) -> dict:
    return {"psnr": psnr(x, y, cfg), "rmse": rmse(x, y), "cc": pearson_cc(x, y), "ssim": ssim(x, y, cfg)}


@dataclass
class MetricsReport:
    rows: list[dict] = field(default_factory=list)

    @property
    def included(self) -> list[dict]:
        return [r for r in self.rows if not r.get("excluded_reason")]

    @property
    def count(self) -> int:
        return len(self.included)

    def aggregate(self) -> dict:
        rows = self.included
        if not rows:
            return {m: math.nan for m in METRIC_NAMES}
        return {m: float(np.mean([r[m] for r in rows])) for m in METRIC_NAMES}

    def write_csv(self, path: Path) -> None:
        cols = ("id",) + METRIC_NAMES + ("excluded_reason",)
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(cols)
            for r in self.rows:
                writer.writerow([r.get(c, "") for c in cols])
            agg = self.aggregate()
            writer.writerow(["MEAN"] + [agg[m] for m in METRIC_NAMES] + [f"n={self.count}"])

    def summary(self) -> str:
        agg = self.aggregate()
        excluded = len(self.rows) - self.count
        parts = [f"{m.upper()} {agg[m]:.3f}" for m in METRIC_NAMES]
        return f"n={self.count} (excluded {excluded})  " + "  ".join(parts)


def to_bit8(values: np.ndarray, stats: NormalizationStats) -> np.ndarray:
    r = stats.pmr
    return np.clip((values - r.min) / (r.max - r.min), 0.0, 1.0) * 255.0


def evaluate(predict_fn: Callable[[TCSample], np.ndarray], test_split: Sequence[TCSample],
             stats: NormalizationStats, cfg: Optional[MetricsConfig] = None, bit8: bool = False) -> MetricsReport:
    """Score ``predict_fn`` on normalized test samples in physical PMR units.

    ``predict_fn`` maps a normalized sample to a physical-unit PMR grid of the
    sample's shape. ``cfg.data_max`` defaults to the PMR training max, or 255
    when ``bit8`` rescales both fields to 0..255.
    """
    if len(test_split) == 0:
        raise ValueError("test split is empty")
    if cfg is None:
        cfg = MetricsConfig(data_max=255.0 if bit8 else stats.pmr.max)
    report = MetricsReport()
    for sample in test_split:
        row = {"id": sample.key}
        try:
            truth = denormalize(sample.pmr, stats).values
            pred = np.asarray(predict_fn(sample), dtype=np.float64)
            if bit8:
                truth, pred = to_bit8(truth, stats), to_bit8(pred, stats)
            row.update(all_metrics(pred, truth, cfg))
        except (MetricError, ValueError) as exc:
            row["excluded_reason"] = str(exc)
        report.rows.append(row)
    return report
