"""Conditional-GAN translation of tropical-cyclone infrared imagery to passive-microwave rainfall."""

from .dataset import (
    AugmentationConfig,
    DatasetManifest,
    ImageGrid,
    NormalizationStats,
    TCSample,
    make_synthetic,
)
from .discriminator import DiscriminatorConfig, PatchDiscriminator
from .generator import Generator, GeneratorConfig
from .losses import LossConfig
from .metrics import MetricsConfig, MetricsReport
from .training import TrainConfig, Trainer, fit, predict

__version__ = "0.1.0"
