"""U-Net generator with optional Res Blocks and Res Paths.

Variants:
    pix2pix      plain conditional U-Net (double 3x3 conv bodies, identity skips)
    res-pix2pix  Res Block bodies, identity skips
    tcr-gan      Res Block bodies and Res Path skips

Tensors are NCHW.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import torch
import torch.nn as nn

VARIANTS = ("pix2pix", "res-pix2pix", "tcr-gan")


@dataclass(frozen=True)
class ResBlockSpec:
    filters: tuple[int, int, int]

    def __post_init__(self):
        f1, f2, f3 = self.filters
        if min(self.filters) < 1 or not f1 <= f2 <= f3:
            raise ValueError(f"filters must be positive and non-decreasing, got {self.filters}")

    @property
    def out_channels(self) -> int:
        return sum(self.filters)

    @classmethod
    def for_width(cls, width: int) -> "ResBlockSpec":
        """Split ``width`` as (w/4, w/4, w/2), the remainder going to the last conv."""
        q = width // 4
        if q < 1:
            raise ValueError(f"Res Block width must be >= 4, got {width}")
        return cls((q, q, width - 2 * q))


@dataclass(frozen=True)
class ResPathSpec:
    units: int
    channels: int

    def __post_init__(self):
        if self.units < 1 or self.channels < 1:
            raise ValueError(f"invalid ResPathSpec {self}")


@dataclass(frozen=True)
class GeneratorConfig:
    variant: str = "tcr-gan"
    levels: int = 4
    base_channels: int = 64
    dropout_rate: float = 0.5
    input_size: int = 256
    in_channels: int = 1
    out_channels: int = 1
    # Res Block width as a multiple of the plain U-Net width at the same level
    res_width_mult: float = 2.0
    dropout_blocks: int = 3
    respath_units: Optional[tuple[int, ...]] = None

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if self.levels < 1:
            raise ValueError("levels must be >= 1")
        if self.input_size % (2 ** self.levels):
            raise ValueError(f"input_size {self.input_size} not divisible by 2^{self.levels}")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError(f"dropout_rate must lie in [0, 1), got {self.dropout_rate}")
        if self.respath_units is not None:
            units = tuple(int(u) for u in self.respath_units)
            if len(units) != self.levels or min(units) < 1:
                raise ValueError(f"respath_units needs {self.levels} entries >= 1, got {units}")
            if any(a < b for a, b in zip(units, units[1:])):
                raise ValueError(f"respath_units must not increase with depth, got {units}")
            object.__setattr__(self, "respath_units", units)

    @property
    def use_res_blocks(self) -> bool:
        return self.variant in ("res-pix2pix", "tcr-gan")

    @property
    def use_res_paths(self) -> bool:
        return self.variant == "tcr-gan"

    def width(self, level: int) -> int:
        """Plain U-Net width at encoder ``level`` (level == levels is the bottleneck)."""
        return self.base_channels * 2 ** min(level, 3)

    def block_width(self, level: int) -> int:
        w = self.width(level)
        return int(round(w * self.res_width_mult)) if self.use_res_blocks else w

    def path_units(self, level: int) -> int:
        if self.respath_units is not None:
            return self.respath_units[level]
        return self.levels - level


def init_weights(module: nn.Module, std: float = 0.02) -> None:
    for m in module.modules():
        if isinstance(m, (nn.Conv2d, nn.ConvTranspose2d)):
            nn.init.normal_(m.weight, 0.0, std)
            if m.bias is not None:
                nn.init.zeros_(m.bias)
        elif isinstance(m, nn.BatchNorm2d):
            nn.init.normal_(m.weight, 1.0, std)
            nn.init.zeros_(m.bias)


def conv_bn_relu(cin: int, cout: int, kernel: int = 3, stride: int = 1) -> nn.Sequential:
    return nn.Sequential(
        nn.Conv2d(cin, cout, kernel, stride=stride, padding=kernel // 2, bias=False),
        nn.BatchNorm2d(cout),
        nn.ReLU(inplace=True),
    )


class DoubleConv(nn.Module):
    """Two 3x3 conv-BN-ReLU layers, the plain U-Net body."""

    def __init__(self, cin: int, cout: int):
        super().__init__()
        self.out_channels = cout
        self.body = nn.Sequential(conv_bn_relu(cin, cout), conv_bn_relu(cout, cout))

    def forward(self, x):
        return self.body(x)


class ResBlock(nn.Module):
    """Chained 3x3 convs with growing filter counts, concatenated, plus a 1x1 shortcut.

    Each chained conv is followed by BN + ReLU; the shortcut is conv1x1 + BN; the
    sum is batch-normalized and ReLU-activated.
    """

    def __init__(self, cin: int, spec: ResBlockSpec):
        super().__init__()
        self.in_channels = cin
        self.out_channels = spec.out_channels
        f1, f2, f3 = spec.filters
        self.conv1 = conv_bn_relu(cin, f1)
        self.conv2 = conv_bn_relu(f1, f2)
        self.conv3 = conv_bn_relu(f2, f3)
        self.shortcut = nn.Sequential(
            nn.Conv2d(cin, spec.out_channels, 1, bias=False),
            nn.BatchNorm2d(spec.out_channels),
        )
        self.bn = nn.BatchNorm2d(spec.out_channels)
        self.act = nn.ReLU(inplace=True)

    def forward(self, x):
        if x.shape[1] != self.in_channels:
            raise ValueError(f"ResBlock expects {self.in_channels} channels, got {x.shape[1]}")
        a = self.conv1(x)
        b = self.conv2(a)
        c = self.conv3(b)
        out = torch.cat([a, b, c], dim=1) + self.shortcut(x)
        return self.act(self.bn(out))


class ResPathUnit(nn.Module):
    def __init__(self, channels: int):
        super().__init__()
        self.conv3 = nn.Conv2d(channels, channels, 3, padding=1, bias=False)
        self.conv1 = nn.Conv2d(channels, channels, 1, bias=False)
        self.bn = nn.BatchNorm2d(channels)
        self.act = nn.ReLU(inplace=True)

    def forward(self, x):
        return self.act(self.bn(self.conv3(x) + self.conv1(x)))


class ResPath(nn.Module):
    """Chain of residual units on a skip connection; identity when ``spec`` is None."""

    def __init__(self, spec: Optional[ResPathSpec]):
        super().__init__()
        self.channels = spec.channels if spec else None
        self.units = nn.Sequential(*[ResPathUnit(spec.channels) for _ in range(spec.units)]) if spec else nn.Identity()

    def forward(self, x):
        if self.channels is not None and x.shape[1] != self.channels:
            raise ValueError(f"ResPath expects {self.channels} channels, got {x.shape[1]}")
        return self.units(x)


def make_body(cin: int, width: int, use_res: bool) -> nn.Module:
    return ResBlock(cin, ResBlockSpec.for_width(width)) if use_res else DoubleConv(cin, width)


class UpBlock(nn.Module):
    def __init__(self, cin: int, cout: int, dropout: float):
        super().__init__()
        self.up = nn.ConvTranspose2d(cin, cout, 4, stride=2, padding=1, bias=False)
        self.bn = nn.BatchNorm2d(cout)
        self.act = nn.ReLU(inplace=True)
        self.dropout = nn.Dropout(dropout) if dropout > 0 else nn.Identity()

    def forward(self, x):
        return self.dropout(self.act(self.bn(self.up(x))))


class Generator(nn.Module):
    """Encoder-decoder mapping (B, in_channels, S, S) in [-1, 1] to (B, out_channels, S, S) in (-1, 1).

    Encoder level k runs at S / 2**k. Levels >= 1 start with a stride-2 3x3
    conv; the bottleneck sits at S / 2**levels. Each decoder step upsamples
    with a stride-2 transposed conv, concatenates the (Res-Path filtered) skip
    and applies a body block. Dropout on the first ``dropout_blocks`` decoder
    steps is the only noise source.
    """

    def __init__(self, cfg: GeneratorConfig):
        super().__init__()
        self.cfg = cfg
        res = cfg.use_res_blocks

        self.down = nn.ModuleList()
        self.enc = nn.ModuleList()
        self.paths = nn.ModuleList()
        cin = cfg.in_channels
        skip_channels = []
        for level in range(cfg.levels + 1):
            w = cfg.width(level)
            if level == 0:
                self.down.append(nn.Identity())
                body_in = cin
            else:
                self.down.append(conv_bn_relu(cin, w, stride=2))
                body_in = w
            body = make_body(body_in, cfg.block_width(level), res)
            self.enc.append(body)
            cin = body.out_channels
            if level < cfg.levels:
                skip_channels.append(cin)
                spec = ResPathSpec(cfg.path_units(level), cin) if cfg.use_res_paths else None
                self.paths.append(ResPath(spec))

        self.up = nn.ModuleList()
        self.dec = nn.ModuleList()
        for i, level in enumerate(reversed(range(cfg.levels))):
            w = cfg.width(level)
            rate = cfg.dropout_rate if i < cfg.dropout_blocks else 0.0
            self.up.append(UpBlock(cin, w, rate))
            body = make_body(w + skip_channels[level], cfg.block_width(level), res)
            self.dec.append(body)
            cin = body.out_channels

        self.head = nn.Conv2d(cin, cfg.out_channels, 1)
        self.out_act = nn.Tanh()
        init_weights(self)

    def forward(self, x):
        size = self.cfg.input_size
        if x.ndim != 4 or x.shape[1] != self.cfg.in_channels or x.shape[-2:] != (size, size):
            raise ValueError(f"expected input (B, {self.cfg.in_channels}, {size}, {size}), got {tuple(x.shape)}")
        if not torch.isfinite(x).all():
            raise ValueError("generator input contains non-finite values")
        skips = []
        for level, (down, body) in enumerate(zip(self.down, self.enc)):
            x = body(down(x))
            if level < self.cfg.levels:
                skips.append(self.paths[level](x))
        for up, body, skip in zip(self.up, self.dec, reversed(skips)):
            x = body(torch.cat([up(x), skip], dim=1))
        return self.out_act(self.head(x))


def count_parameters(cfg_or_model) -> int:
    model = Generator(cfg_or_model) if isinstance(cfg_or_model, GeneratorConfig) else cfg_or_model
    return sum(p.numel() for p in model.parameters() if p.requires_grad)


def layer_inventory(model: "Generator") -> list[tuple]:
    """(kind, in, out, kernel, stride) for every conv layer, in execution order of one forward pass."""
    rows = []

    def hook(m, inputs, output):
        kind = "convT" if isinstance(m, nn.ConvTranspose2d) else "conv"
        rows.append((kind, m.in_channels, m.out_channels, m.kernel_size[0], m.stride[0]))

    handles = [m.register_forward_hook(hook) for m in model.modules()
               if isinstance(m, (nn.Conv2d, nn.ConvTranspose2d))]
    cfg = model.cfg
    was_training = model.training
    try:
        model.eval()
        with torch.no_grad():
            model(torch.zeros(1, cfg.in_channels, cfg.input_size, cfg.input_size))
    finally:
        for h in handles:
            h.remove()
        model.train(was_training)
    return rows
