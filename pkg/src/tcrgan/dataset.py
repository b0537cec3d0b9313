"""Paired IR -> PMR sample handling.

Preprocessing runs in a fixed order:
fill_nulls -> upsample_pmr -> compute_stats (train only) -> normalize -> split -> augment.

On disk a dataset is a directory holding ``manifest.json`` and
``samples/<storm_id>/<timestamp>_{ir,pmr}.f32`` (row-major little-endian float32,
no header; the grid size lives in the manifest).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from datetime import datetime, timedelta, timezone
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

CHANNELS = ("ir", "pmr")
SCHEMA_VERSION = 1
TIMESTAMP_FORMAT = "%Y%m%dT%H%MZ"


@dataclass(frozen=True)
class ImageGrid:
    """Single-channel 2-D field tagged with its channel ("ir" or "pmr")."""

    values: np.ndarray
    channel: str

    def __post_init__(self):
        if self.channel not in CHANNELS:
            raise ValueError(f"unknown channel {self.channel!r}")
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 2 or values.shape[0] < 1 or values.shape[1] < 1:
            raise ValueError(f"expected a non-empty 2-D grid, got shape {values.shape}")
        object.__setattr__(self, "values", values)

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    def with_values(self, values: np.ndarray) -> "ImageGrid":
        return ImageGrid(values, self.channel)


@dataclass(frozen=True)
class TCSample:
    ir: ImageGrid
    pmr: ImageGrid
    storm_id: str
    timestamp: datetime

    def __post_init__(self):
        if self.ir.channel != "ir" or self.pmr.channel != "pmr":
            raise ValueError("TCSample expects an ir grid and a pmr grid")
        if self.ir.shape != self.pmr.shape:
            raise ValueError(f"ir shape {self.ir.shape} != pmr shape {self.pmr.shape}")
        if self.timestamp.tzinfo is None:
            object.__setattr__(self, "timestamp", self.timestamp.replace(tzinfo=timezone.utc))

    @property
    def key(self) -> str:
        return f"{self.storm_id}/{format_timestamp(self.timestamp)}"


@dataclass(frozen=True)
class ChannelRange:
    min: float
    max: float

    def __post_init__(self):
        if not self.max > self.min:
            raise ValueError(f"degenerate range: max {self.max} must exceed min {self.min}")


@dataclass(frozen=True)
class NormalizationStats:
    ir: ChannelRange
    pmr: ChannelRange

    def for_channel(self, channel: str) -> ChannelRange:
        return getattr(self, channel)

    def to_dict(self) -> dict:
        return {c: {"min": self.for_channel(c).min, "max": self.for_channel(c).max} for c in CHANNELS}

    @classmethod
    def from_dict(cls, d: dict) -> "NormalizationStats":
        return cls(**{c: ChannelRange(float(d[c]["min"]), float(d[c]["max"])) for c in CHANNELS})


@dataclass(frozen=True)
class SampleRecord:
    path_ir: str
    path_pmr: str
    storm_id: str
    timestamp: str
    split: str = "train"


@dataclass
class DatasetManifest:
    records: list[SampleRecord]
    stats: NormalizationStats
    image_size: int
    schema_version: int = SCHEMA_VERSION

    def to_dict(self) -> dict:
        return {
            "schema_version": self.schema_version,
            "image_size": self.image_size,
            "stats": self.stats.to_dict(),
            "records": [vars(r).copy() for r in self.records],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DatasetManifest":
        if d.get("schema_version") != SCHEMA_VERSION:
            raise ValueError(f"unsupported manifest schema_version {d.get('schema_version')!r}")
        return cls(
            records=[SampleRecord(**r) for r in d["records"]],
            stats=NormalizationStats.from_dict(d["stats"]),
            image_size=int(d["image_size"]),
            schema_version=d["schema_version"],
        )

    def is_chronological(self) -> bool:
        keys = [(r.timestamp, r.storm_id) for r in self.records]
        if keys != sorted(keys):
            return False
        tags = [r.split for r in self.records]
        return "train" not in tags[tags.index("test"):] if "test" in tags else True


@dataclass(frozen=True)
class AugmentationConfig:
    resize_to: int = 286
    crop_to: int = 256
    hflip_prob: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if not self.resize_to >= self.crop_to >= 1:
            raise ValueError(f"need resize_to >= crop_to >= 1, got {self.resize_to}, {self.crop_to}")
        if not 0.0 <= self.hflip_prob <= 1.0:
            raise ValueError(f"hflip_prob must lie in [0, 1], got {self.hflip_prob}")

    @classmethod
    def for_size(cls, input_size: int, **kwargs) -> "AugmentationConfig":
        """Default jitter scaled to ``input_size`` (286/256 of it, rounded)."""
        return cls(resize_to=int(round(input_size * 286 / 256)), crop_to=input_size, **kwargs)


def format_timestamp(ts: datetime) -> str:
    return ts.astimezone(timezone.utc).strftime(TIMESTAMP_FORMAT)


def parse_timestamp(text: str) -> datetime:
    return datetime.strptime(text, TIMESTAMP_FORMAT).replace(tzinfo=timezone.utc)


# ---------------------------------------------------------------------------
# grid operations


def _interp_axis(values: np.ndarray, n_out: int, axis: int) -> np.ndarray:
    n_in = values.shape[axis]
    if n_in == 1:
        return np.repeat(values, n_out, axis=axis)
    pos = np.linspace(0.0, n_in - 1, n_out) if n_out > 1 else np.zeros(1)
    lo = np.clip(np.floor(pos).astype(int), 0, n_in - 2)
    frac = pos - lo
    shape = [1, 1]
    shape[axis] = n_out
    frac = frac.reshape(shape)
    a = np.take(values, lo, axis=axis)
    b = np.take(values, lo + 1, axis=axis)
    return a + (b - a) * frac


def resize_bilinear(values: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    """Corner-aligned bilinear resampling of a 2-D array to ``shape``."""
    values = np.asarray(values, dtype=np.float64)
    out = _interp_axis(values, shape[0], axis=0)
    return _interp_axis(out, shape[1], axis=1)


def upsample_pmr(low_res: ImageGrid, target_shape: tuple[int, int]) -> ImageGrid:
    if target_shape[0] < low_res.shape[0] or target_shape[1] < low_res.shape[1]:
        raise ValueError(f"target {target_shape} is smaller than source {low_res.shape}")
    if np.isnan(low_res.values).any():
        raise ValueError("grid contains nulls; run fill_nulls first")
    return low_res.with_values(resize_bilinear(low_res.values, target_shape))


def fill_nulls(grid: ImageGrid) -> ImageGrid:
    values = grid.values.copy()
    values[~np.isfinite(values)] = 0.0
    return grid.with_values(values)


def compute_stats(train_samples: Sequence[TCSample]) -> NormalizationStats:
    if len(train_samples) == 0:
        raise ValueError("cannot compute stats from an empty training split")
    ranges = {}
    for channel in CHANNELS:
        lo = min(float(getattr(s, channel).values.min()) for s in train_samples)
        hi = max(float(getattr(s, channel).values.max()) for s in train_samples)
        ranges[channel] = ChannelRange(lo, hi)
    return NormalizationStats(**ranges)


def normalize(grid: ImageGrid, stats: NormalizationStats) -> ImageGrid:
    """Min-max map onto [-1, 1]; values outside the training range are clipped."""
    r = stats.for_channel(grid.channel)
    scaled = 2.0 * (grid.values - r.min) / (r.max - r.min) - 1.0
    return grid.with_values(np.clip(scaled, -1.0, 1.0))


def denormalize(grid: ImageGrid, stats: NormalizationStats) -> ImageGrid:
    r = stats.for_channel(grid.channel)
    return grid.with_values((grid.values + 1.0) * 0.5 * (r.max - r.min) + r.min)


def normalize_sample(sample: TCSample, stats: NormalizationStats) -> TCSample:
    return replace(sample, ir=normalize(sample.ir, stats), pmr=normalize(sample.pmr, stats))


def split(manifest: DatasetManifest, train_count: int) -> tuple[list[SampleRecord], list[SampleRecord]]:
    """Chronological split: the first ``train_count`` records train, the rest test."""
    n = len(manifest.records)
    if not 0 < train_count < n:
        raise ValueError(f"train_count must satisfy 0 < train_count < {n}, got {train_count}")
    keys = [(r.timestamp, r.storm_id) for r in manifest.records]
    if keys != sorted(keys):
        raise ValueError("manifest records are not in chronological order")
    train = [replace(r, split="train") for r in manifest.records[:train_count]]
    test = [replace(r, split="test") for r in manifest.records[train_count:]]
    return train, test


# ---------------------------------------------------------------------------
# augmentation


def hflip(values: np.ndarray) -> np.ndarray:
    return values[:, ::-1].copy()


def draw_geometry(cfg: AugmentationConfig, rng: np.random.Generator) -> tuple[int, int, bool]:
    """Sample one (top, left, flip) triple shared by both channels of a sample."""
    span = cfg.resize_to - cfg.crop_to
    top = int(rng.integers(0, span + 1))
    left = int(rng.integers(0, span + 1))
    flip = bool(rng.random() < cfg.hflip_prob)
    return top, left, flip


def apply_geometry(values: np.ndarray, cfg: AugmentationConfig, top: int, left: int, flip: bool) -> np.ndarray:
    out = values
    if out.shape != (cfg.resize_to, cfg.resize_to):
        out = resize_bilinear(out, (cfg.resize_to, cfg.resize_to))
    out = out[top:top + cfg.crop_to, left:left + cfg.crop_to]
    return hflip(out) if flip else out.copy()


def augment(sample: TCSample, cfg: AugmentationConfig, rng: np.random.Generator) -> TCSample:
    top, left, flip = draw_geometry(cfg, rng)
    return replace(
        sample,
        ir=sample.ir.with_values(apply_geometry(sample.ir.values, cfg, top, left, flip)),
        pmr=sample.pmr.with_values(apply_geometry(sample.pmr.values, cfg, top, left, flip)),
    )


def resize_sample(sample: TCSample, size: int) -> TCSample:
    """Deterministic evaluation-time transform: resize only, no crop or flip."""
    if sample.ir.shape == (size, size):
        return sample
    return replace(
        sample,
        ir=sample.ir.with_values(resize_bilinear(sample.ir.values, (size, size))),
        pmr=sample.pmr.with_values(resize_bilinear(sample.pmr.values, (size, size))),
    )


# ---------------------------------------------------------------------------
# synthetic cyclones


def _cyclone_fields(size: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    cx = size / 2 + rng.uniform(-0.08, 0.08) * size
    cy = size / 2 + rng.uniform(-0.08, 0.08) * size
    intensity = rng.uniform(0.6, 1.0)
    core_r = rng.uniform(0.07, 0.12) * size
    eye_r = core_r * rng.uniform(0.15, 0.35)
    rotation = rng.uniform(0.0, 2 * math.pi)
    tightness = rng.uniform(0.3, 0.5)
    arms = int(rng.integers(2, 4))

    dx, dy = xx - cx, yy - cy
    dist = np.hypot(dx, dy)
    r = dist / size + 1e-3
    theta = np.arctan2(dy, dx)
    phase = arms * (theta - rotation - np.log(r) / tightness)
    envelope = np.exp(-(r / 0.32) ** 2)

    core = np.exp(-(dist / core_r) ** 2)
    eye = np.exp(-(dist / eye_r) ** 2)
    wave = 0.5 * (1.0 + np.cos(phase))
    cloud = np.clip(intensity * (core * (1.0 - 0.8 * eye) + 0.75 * wave * envelope), 0.0, 1.0)
    # cold (low) brightness temperatures where cloud tops are high
    ir = 300.0 - 110.0 * cloud

    sharp_band = np.maximum(wave ** 6 - 0.15, 0.0) / 0.85
    rain = 55.0 * intensity * (core * (1.0 - eye)) ** 1.5 + 30.0 * intensity * sharp_band * envelope ** 2
    return ir, rain


def make_synthetic(count: int, image_size: int, seed: int, frames_per_storm: int = 4) -> list[TCSample]:
    """Cyclone-like IR/PMR pairs sharing latent vortex parameters.

    IR is a smooth vortex (Gaussian core with a warm eye plus logarithmic spiral
    bands); PMR is a thresholded, sharpened function of the same bands, so a
    deterministic IR -> PMR mapping exists. Frames are 3 h apart and grouped into
    storms of ``frames_per_storm`` consecutive frames.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    rng = np.random.default_rng(seed)
    start = datetime(2017, 1, 1, tzinfo=timezone.utc)
    samples = []
    for i in range(count):
        ir, rain = _cyclone_fields(image_size, rng)
        samples.append(TCSample(
            ir=ImageGrid(ir, "ir"),
            pmr=ImageGrid(rain, "pmr"),
            storm_id=f"SYN{i // frames_per_storm:04d}",
            timestamp=start + timedelta(hours=3 * i),
        ))
    return samples


# ---------------------------------------------------------------------------
# raw input and dataset directory I/O


@dataclass
class BuildReport:
    manifest: DatasetManifest
    skipped: list[str] = field(default_factory=list)


def write_raw_dump(samples: Iterable[TCSample], raw_dir: Path, pmr_factor: int = 4) -> None:
    """Write samples in the raw input layout consumed by :func:`build_dataset`.

    Layout: ``<raw_dir>/<storm_id>/<timestamp>_{ir,pmr}.npy``. PMR is subsampled
    by ``pmr_factor`` (corner aligned) to mimic the coarse microwave grid.
    """
    raw_dir = Path(raw_dir)
    for s in samples:
        d = raw_dir / s.storm_id
        d.mkdir(parents=True, exist_ok=True)
        stem = format_timestamp(s.timestamp)
        h, w = s.pmr.shape
        low = (max(2, (h - 1) // pmr_factor + 1), max(2, (w - 1) // pmr_factor + 1))
        pmr = resize_bilinear(s.pmr.values, low) if pmr_factor > 1 else s.pmr.values
        np.save(d / f"{stem}_ir.npy", s.ir.values)
        np.save(d / f"{stem}_pmr.npy", pmr)


def read_raw_dir(raw_dir: Path) -> tuple[list[TCSample], list[str]]:
    """Load raw pairs, applying fill_nulls and upsample_pmr. Returns (samples, skipped)."""
    raw_dir = Path(raw_dir)
    if not raw_dir.is_dir():
        raise FileNotFoundError(f"raw directory {raw_dir} does not exist")
    samples, skipped = [], []
    for storm_dir in sorted(p for p in raw_dir.iterdir() if p.is_dir()):
        stems: dict[str, dict[str, Path]] = {}
        for f in sorted(storm_dir.glob("*.npy")):
            stem, _, channel = f.stem.rpartition("_")
            if channel in CHANNELS:
                stems.setdefault(stem, {})[channel] = f
        for stem, files in sorted(stems.items()):
            tag = f"{storm_dir.name}/{stem}"
            if set(files) != set(CHANNELS):
                skipped.append(f"{tag}: missing {', '.join(sorted(set(CHANNELS) - set(files)))}")
                continue
            try:
                timestamp = parse_timestamp(stem)
                ir = fill_nulls(ImageGrid(np.load(files["ir"]), "ir"))
                pmr = fill_nulls(ImageGrid(np.load(files["pmr"]), "pmr"))
                if pmr.shape != ir.shape:
                    pmr = upsample_pmr(pmr, ir.shape)
                samples.append(TCSample(ir, pmr, storm_dir.name, timestamp))
            except ValueError as exc:
                skipped.append(f"{tag}: {exc}")
    return samples, skipped


def chronological(samples: Iterable[TCSample]) -> list[TCSample]:
    samples = sorted(samples, key=lambda s: (s.timestamp, s.storm_id))
    seen = set()
    for s in samples:
        if s.key in seen:
            raise ValueError(f"duplicate timestamp within storm: {s.key}")
        seen.add(s.key)
    return samples


def build_dataset(samples: Sequence[TCSample], out_dir: Path, train_count: int) -> DatasetManifest:
    """Normalize with train-only stats, split chronologically and write the dataset layout."""
    samples = chronological(samples)
    if not 0 < train_count < len(samples):
        raise ValueError(f"train_count must satisfy 0 < train_count < {len(samples)}, got {train_count}")
    sizes = {s.ir.shape for s in samples}
    if len(sizes) != 1 or next(iter(sizes))[0] != next(iter(sizes))[1]:
        raise ValueError(f"all samples must share one square grid size, got {sorted(sizes)}")
    stats = compute_stats(samples[:train_count])

    out_dir = Path(out_dir)
    records = []
    for s in samples:
        s = normalize_sample(s, stats)
        stem = format_timestamp(s.timestamp)
        rel = Path("samples") / s.storm_id
        (out_dir / rel).mkdir(parents=True, exist_ok=True)
        paths = {}
        for channel in CHANNELS:
            p = rel / f"{stem}_{channel}.f32"
            getattr(s, channel).values.astype("<f4").tofile(out_dir / p)
            paths[channel] = p.as_posix()
        records.append(SampleRecord(paths["ir"], paths["pmr"], s.storm_id, stem))

    manifest = DatasetManifest(records=records, stats=stats, image_size=next(iter(sizes))[0])
    train, test = split(manifest, train_count)
    manifest.records = train + test
    write_manifest(manifest, out_dir / "manifest.json")
    return manifest


def write_manifest(manifest: DatasetManifest, path: Path) -> None:
    Path(path).write_text(json.dumps(manifest.to_dict(), indent=2, sort_keys=True) + "\n")


def read_manifest(path: Path) -> DatasetManifest:
    return DatasetManifest.from_dict(json.loads(Path(path).read_text()))


def load_samples(dataset_dir: Path, which: str | None = None) -> tuple[list[TCSample], DatasetManifest]:
    """Read normalized samples from a dataset directory, optionally one split only."""
    dataset_dir = Path(dataset_dir)
    manifest = read_manifest(dataset_dir / "manifest.json")
    n = manifest.image_size
    samples = []
    for r in manifest.records:
        if which is not None and r.split != which:
            continue
        ir = np.fromfile(dataset_dir / r.path_ir, dtype="<f4").reshape(n, n)
        pmr = np.fromfile(dataset_dir / r.path_pmr, dtype="<f4").reshape(n, n)
        samples.append(TCSample(ImageGrid(ir, "ir"), ImageGrid(pmr, "pmr"), r.storm_id, parse_timestamp(r.timestamp)))
    return samples, manifest
