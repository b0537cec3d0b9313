"""Conditional adversarial loss plus weighted L1 reconstruction."""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn.functional as F


@dataclass(frozen=True)
class LossConfig:
    lambda_l1: float = 100.0
    adversarial_form: str = "bce_logits"

    def __post_init__(self):
        if self.lambda_l1 < 0:
            raise ValueError(f"lambda_l1 must be >= 0, got {self.lambda_l1}")
        if self.adversarial_form != "bce_logits":
            raise ValueError(f"unsupported adversarial_form {self.adversarial_form!r}")


def _check_finite(*tensors):
    for t in tensors:
        if not torch.isfinite(t).all():
            raise ValueError("non-finite logits")


def d_loss(real_logits: torch.Tensor, fake_logits: torch.Tensor) -> torch.Tensor:
    """Mean of BCE(real, 1) and BCE(fake, 0) over all patch elements."""
    if real_logits.shape != fake_logits.shape:
        raise ValueError(f"logit maps differ in shape: {tuple(real_logits.shape)} vs {tuple(fake_logits.shape)}")
    _check_finite(real_logits, fake_logits)
    real = F.binary_cross_entropy_with_logits(real_logits, torch.ones_like(real_logits))
    fake = F.binary_cross_entropy_with_logits(fake_logits, torch.zeros_like(fake_logits))
    return 0.5 * (real + fake)


def g_loss(fake_logits, fake, target, cfg: LossConfig = LossConfig()):
    """Return (total, adv_part, l1_part); the adversarial part is the non-saturating form."""
    if fake.shape != target.shape:
        raise ValueError(f"fake {tuple(fake.shape)} and target {tuple(target.shape)} differ")
    adv = F.binary_cross_entropy_with_logits(fake_logits, torch.ones_like(fake_logits))
    l1 = (fake - target).abs().mean()
    return adv + cfg.lambda_l1 * l1, adv, l1
