"""Conditional PatchGAN discriminator."""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn as nn

from .generator import init_weights

KERNEL = 4
PADDING = 1


@dataclass(frozen=True)
class DiscriminatorConfig:
    layers: int = 3
    base_channels: int = 64
    input_size: int = 256
    in_channels: int = 2

    def __post_init__(self):
        if self.layers < 0 or self.base_channels < 1:
            raise ValueError(f"invalid DiscriminatorConfig {self}")

    def layer_stack(self) -> list[tuple[int, int, int, bool]]:
        """(in, out, stride, batchnorm) per conv: ``layers`` stride-2 convs, one stride-1 conv, the 1-channel head."""
        stack = []
        cin = self.in_channels
        for i in range(self.layers):
            cout = self.base_channels * 2 ** min(i, 3)
            stack.append((cin, cout, 2, i > 0))
            cin = cout
        cout = self.base_channels * 2 ** min(self.layers, 3)
        stack.append((cin, cout, 1, self.layers > 0))
        stack.append((cout, 1, 1, False))
        return stack


def output_size(cfg: DiscriminatorConfig, input_size: int | None = None) -> int:
    n = cfg.input_size if input_size is None else input_size
    for _, _, stride, _ in cfg.layer_stack():
        n = (n + 2 * PADDING - KERNEL) // stride + 1
    return n


def receptive_field(cfg_or_strides) -> int:
    """Input pixels seen by one output element.

    Accepts a config or a plain sequence of strides (all kernels 4x4).
    """
    if isinstance(cfg_or_strides, DiscriminatorConfig):
        strides = [s for _, _, s, _ in cfg_or_strides.layer_stack()]
    else:
        strides = list(cfg_or_strides)
    rf = 1
    for s in reversed(strides):
        rf = rf * s + (KERNEL - s)
    return rf


class PatchDiscriminator(nn.Module):
    """Scores an (IR, PMR) pair with a (B, 1, N, N) map of raw logits."""

    def __init__(self, cfg: DiscriminatorConfig):
        super().__init__()
        self.cfg = cfg
        layers: list[nn.Module] = []
        stack = cfg.layer_stack()
        for i, (cin, cout, stride, bn) in enumerate(stack):
            last = i == len(stack) - 1
            layers.append(nn.Conv2d(cin, cout, KERNEL, stride=stride, padding=PADDING, bias=not bn))
            if bn:
                layers.append(nn.BatchNorm2d(cout))
            if not last:
                layers.append(nn.LeakyReLU(0.2, inplace=True))
        self.net = nn.Sequential(*layers)
        init_weights(self)

    def forward(self, condition, candidate):
        if condition.shape[0] != candidate.shape[0] or condition.shape[-2:] != candidate.shape[-2:]:
            raise ValueError(f"condition {tuple(condition.shape)} and candidate {tuple(candidate.shape)} differ")
        return self.net(torch.cat([condition, candidate], dim=1))
