"""Alternating adversarial training, checkpointing and inference."""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import torch

from .dataset import (
    AugmentationConfig,
    ImageGrid,
    NormalizationStats,
    TCSample,
    augment,
    denormalize,
    normalize,
    resize_bilinear,
)
from .discriminator import DiscriminatorConfig, PatchDiscriminator
from .generator import Generator, GeneratorConfig
from .losses import LossConfig, d_loss, g_loss

logger = logging.getLogger(__name__)

CHECKPOINT_SCHEMA_VERSION = 1
HISTORY_FIELDS = ("step", "epoch", "d_loss", "g_adv", "g_l1", "g_total")


class DivergenceError(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 100
    batch_size: int = 1
    lr: float = 0.0002
    beta1: float = 0.5
    beta2: float = 0.999
    seed: int = 0
    checkpoint_every: int = 10
    augment: bool = True
    hflip_prob: float = 0.5
    loss: LossConfig = field(default_factory=LossConfig)
    generator: GeneratorConfig = field(default_factory=GeneratorConfig)
    discriminator: DiscriminatorConfig = field(default_factory=DiscriminatorConfig)

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if not self.lr >= 0:
            raise ValueError(f"lr must be non-negative, got {self.lr}")
        if not 0.0 <= self.beta1 < 1.0 or not 0.0 <= self.beta2 < 1.0:
            raise ValueError(f"betas must lie in [0, 1), got {self.beta1}, {self.beta2}")
        if self.checkpoint_every < 1:
            raise ValueError("checkpoint_every must be >= 1")
        if self.discriminator.input_size != self.generator.input_size:
            raise ValueError("generator and discriminator input_size differ")
        if self.discriminator.in_channels != self.generator.in_channels + self.generator.out_channels:
            raise ValueError("discriminator in_channels must equal condition + candidate channels")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        gen = dict(d.pop("generator", {}))
        if gen.get("respath_units") is not None:
            gen["respath_units"] = tuple(gen["respath_units"])
        return cls(
            loss=LossConfig(**d.pop("loss", {})),
            generator=GeneratorConfig(**gen),
            discriminator=DiscriminatorConfig(**d.pop("discriminator", {})),
            **d,
        )

    def augmentation(self) -> AugmentationConfig:
        size = self.generator.input_size
        if not self.augment:
            return AugmentationConfig(resize_to=size, crop_to=size, hflip_prob=0.0, seed=self.seed)
        return AugmentationConfig.for_size(size, hflip_prob=self.hflip_prob, seed=self.seed)


def config_fingerprint(cfg: TrainConfig, include_generator: bool = True) -> str:
    d = cfg.to_dict()
    if not include_generator:
        d.pop("generator")
    return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()


@dataclass
class TrainHistory:
    records: list[dict] = field(default_factory=list)
    epoch_seconds: list[float] = field(default_factory=list)

    def column(self, name: str) -> list[float]:
        return [r[name] for r in self.records]

    def write_csv(self, path: Path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=HISTORY_FIELDS)
            writer.writeheader()
            writer.writerows(self.records)

    def write_epoch_times(self, path: Path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["epoch", "seconds"])
            writer.writerows(enumerate(self.epoch_seconds, start=1))


def to_tensor(grids: Sequence[np.ndarray]) -> torch.Tensor:
    return torch.from_numpy(np.stack(grids).astype(np.float32)).unsqueeze(1)


class Trainer:
    """Owns G, D and both Adam optimizers for one training run."""

    def __init__(self, config: TrainConfig, stats: Optional[NormalizationStats] = None):
        self.config = config
        self.stats = stats
        torch.manual_seed(config.seed)
        self.generator = Generator(config.generator)
        self.discriminator = PatchDiscriminator(config.discriminator)
        betas = (config.beta1, config.beta2)
        self.opt_g = torch.optim.Adam(self.generator.parameters(), lr=config.lr, betas=betas)
        self.opt_d = torch.optim.Adam(self.discriminator.parameters(), lr=config.lr, betas=betas)
        self.epoch = 0
        self.step = 0

    def train(self):
        self.generator.train()
        self.discriminator.train()

    def train_step(self, ir: torch.Tensor, pmr: torch.Tensor) -> dict:
        """One D update on (real, detached fake) followed by one G update."""
        self.train()
        G, D = self.generator, self.discriminator

        fake = G(ir)
        real_logits, fake_logits = D(ir, pmr), D(ir, fake.detach())
        if not (torch.isfinite(real_logits).all() and torch.isfinite(fake_logits).all()):
            raise DivergenceError(f"non-finite discriminator logits at step {self.step + 1}")
        loss_d = d_loss(real_logits, fake_logits)
        if not torch.isfinite(loss_d):
            raise DivergenceError(f"non-finite discriminator loss at step {self.step + 1}: {loss_d.item()}")
        self.opt_d.zero_grad(set_to_none=True)
        loss_d.backward()
        self.opt_d.step()

        total, adv, l1 = g_loss(D(ir, fake), fake, pmr, self.config.loss)
        if not torch.isfinite(total):
            raise DivergenceError(
                f"non-finite generator loss at step {self.step + 1}: adv={adv.item()} l1={l1.item()}")
        self.opt_g.zero_grad(set_to_none=True)
        total.backward()
        self.opt_g.step()

        self.step += 1
        return {
            "step": self.step,
            "epoch": self.epoch + 1,
            "d_loss": loss_d.item(),
            "g_adv": adv.item(),
            "g_l1": l1.item(),
            "g_total": total.item(),
        }

    def epoch_batches(self, samples: Sequence[TCSample], epoch: int):
        """Seeded per-epoch shuffle and augmentation; depends only on (seed, epoch)."""
        cfg = self.config
        rng = np.random.default_rng([cfg.seed, epoch])
        aug = cfg.augmentation()
        order = rng.permutation(len(samples))
        for start in range(0, len(order), cfg.batch_size):
            batch = [augment(samples[i], aug, rng) for i in order[start:start + cfg.batch_size]]
            yield to_tensor([s.ir.values for s in batch]), to_tensor([s.pmr.values for s in batch])

    def fit(self, samples: Sequence[TCSample], out_dir: Optional[Path] = None,
            history: Optional[TrainHistory] = None, stop_after_epoch: Optional[int] = None) -> TrainHistory:
        """Train from ``self.epoch`` to ``config.epochs``; ``samples`` must already be normalized."""
        if len(samples) == 0:
            raise ValueError("training split is empty")
        history = history if history is not None else TrainHistory()
        cfg = self.config
        last = cfg.epochs if stop_after_epoch is None else min(cfg.epochs, stop_after_epoch)
        while self.epoch < last:
            t0 = time.perf_counter()
            for ir, pmr in self.epoch_batches(samples, self.epoch):
                history.records.append(self.train_step(ir, pmr))
            self.epoch += 1
            history.epoch_seconds.append(time.perf_counter() - t0)
            recent = history.records[-math.ceil(len(samples) / cfg.batch_size):]
            logger.info("epoch %d/%d  d_loss %.4f  g_l1 %.4f", self.epoch, cfg.epochs,
                        np.mean([r["d_loss"] for r in recent]), np.mean([r["g_l1"] for r in recent]))
            if out_dir is not None and (self.epoch % cfg.checkpoint_every == 0 or self.epoch == cfg.epochs):
                self.save(Path(out_dir) / f"checkpoint_epoch{self.epoch:04d}.pt")
        if out_dir is not None:
            history.write_csv(Path(out_dir) / "history.csv")
            history.write_epoch_times(Path(out_dir) / "epoch_times.csv")
        return history

    # -- checkpoints --------------------------------------------------------

    def state_dict(self) -> dict:
        return {
            "schema_version": CHECKPOINT_SCHEMA_VERSION,
            "config": self.config.to_dict(),
            "stats": self.stats.to_dict() if self.stats else None,
            "generator": self.generator.state_dict(),
            "discriminator": self.discriminator.state_dict(),
            "opt_g": self.opt_g.state_dict(),
            "opt_d": self.opt_d.state_dict(),
            "epoch": self.epoch,
            "step": self.step,
            "torch_rng": torch.get_rng_state(),
            "seed": self.config.seed,
        }

    def save(self, path: Path, overwrite: bool = False) -> Path:
        path = Path(path)
        if path.exists() and not overwrite:
            raise FileExistsError(f"refusing to overwrite checkpoint {path}")
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_suffix(path.suffix + ".tmp")
        torch.save(self.state_dict(), tmp)
        tmp.replace(path)
        return path

    @classmethod
    def from_state_dict(cls, state: dict) -> "Trainer":
        if state.get("schema_version") != CHECKPOINT_SCHEMA_VERSION:
            raise ValueError(f"checkpoint schema_version {state.get('schema_version')!r} "
                             f"!= {CHECKPOINT_SCHEMA_VERSION}")
        stats = NormalizationStats.from_dict(state["stats"]) if state.get("stats") else None
        trainer = cls(TrainConfig.from_dict(state["config"]), stats)
        trainer.generator.load_state_dict(state["generator"])
        trainer.discriminator.load_state_dict(state["discriminator"])
        trainer.opt_g.load_state_dict(state["opt_g"])
        trainer.opt_d.load_state_dict(state["opt_d"])
        trainer.epoch = state["epoch"]
        trainer.step = state["step"]
        torch.set_rng_state(state["torch_rng"])
        return trainer

    @classmethod
    def load(cls, path: Path) -> "Trainer":
        return cls.from_state_dict(torch.load(path, map_location="cpu", weights_only=True))


def fit(train_split: Sequence[TCSample], config: TrainConfig, stats: NormalizationStats,
        out_dir: Optional[Path] = None) -> tuple[Trainer, TrainHistory]:
    trainer = Trainer(config, stats)
    history = trainer.fit(train_split, out_dir)
    return trainer, history


# -- inference ---------------------------------------------------------------


def _as_trainer(checkpoint) -> Trainer:
    return checkpoint if isinstance(checkpoint, Trainer) else Trainer.load(checkpoint)


@torch.no_grad()
def predict(checkpoint, ir_inputs: Sequence[np.ndarray], normalized: bool = False) -> list[np.ndarray]:
    """Eval-mode PMR predictions in physical units, one per input and in input order.

    Inputs are physical IR grids (or already-normalized ones with
    ``normalized=True``); each is normalized with the stored stats, resized to
    the generator's input size, translated, denormalized and resized back to
    its own grid shape.
    """
    trainer = _as_trainer(checkpoint)
    if trainer.stats is None:
        raise ValueError("checkpoint carries no normalization stats")
    size = trainer.config.generator.input_size
    G = trainer.generator.eval()
    outputs = []
    for ir in ir_inputs:
        grid = ImageGrid(ir, "ir")
        if not normalized:
            grid = normalize(grid, trainer.stats)
        x = resize_bilinear(grid.values, (size, size)) if grid.shape != (size, size) else grid.values
        y = G(to_tensor([x]))[0, 0].double().numpy()
        if grid.shape != (size, size):
            y = resize_bilinear(y, grid.shape)
        outputs.append(denormalize(ImageGrid(y, "pmr"), trainer.stats).values)
    return outputs


def predict_fn(checkpoint):
    """Adapter for :func:`tcrgan.metrics.evaluate`: normalized sample -> physical PMR."""
    trainer = _as_trainer(checkpoint)

    def fn(sample: TCSample) -> np.ndarray:
        return predict(trainer, [sample.ir.values], normalized=True)[0]

    return fn
