"""Predictor networks.

Three fully convolutional networks share one pipeline: an attention
U-Net predicts the double-sided normal maps from the input image, a
second attention U-Net predicts the double-sided shade-free images from
the input concatenated with the predicted normals, and a multi-headed
attention U-Net predicts the double-sided depth maps from the feature
maps tapped just before the first two networks' 1x1 output heads.

The depth network runs one encoder per modality (photometric /
geometric) into a shared decoder; at every decoder level a multi-headed
attention gate weights each modality's skip against the shared gating
signal before fusing them. Setting `attention=False` swaps every gate
for a parameterless pass-through, which reduces the networks to plain
skip-connection U-Nets; `direct_depth` replaces the whole pipeline with
a single U-Net mapping the image straight to the depth pair.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import torch
import torch.nn as nn

from .errors import ShapeError, ShapeMismatch


@dataclass
class AUNetSpec:
    in_channels: int = 3
    out_channels: int = 6
    depth: int = 4  # number of down/up levels
    base_width: int = 32  # channels at full resolution; doubles per level
    activation: str = "tanh"  # output head squashing: tanh | sigmoid | none
    attention: bool = True

    def __post_init__(self):
        if self.depth < 1:
            raise ValueError("depth must be >= 1")
        if self.activation not in ("tanh", "sigmoid", "none"):
            raise ValueError(f"unknown activation: {self.activation}")

    def width(self, level: int) -> int:
        return self.base_width * (2**level)


@dataclass
class PipelineConfig:
    resolution: tuple = (512, 256)
    depth: int = 4
    base_width: int = 32
    mode: str = "full"  # full | no_attention | direct_depth

    def __post_init__(self):
        if self.mode not in ("full", "no_attention", "direct_depth"):
            raise ValueError(f"unknown pipeline mode: {self.mode}")

    def to_json(self) -> dict:
        return {
            "resolution": list(self.resolution),
            "depth": self.depth,
            "base_width": self.base_width,
            "mode": self.mode,
        }

    @classmethod
    def from_json(cls, d: dict) -> "PipelineConfig":
        return cls(tuple(d["resolution"]), d["depth"], d["base_width"], d["mode"])


@dataclass
class MapPair:
    """Front/back map pair stored as one (..., 2C, H, W) tensor."""

    data: torch.Tensor

    @property
    def front(self) -> torch.Tensor:
        c = self.data.shape[-3] // 2
        return self.data[..., :c, :, :]

    @property
    def back(self) -> torch.Tensor:
        c = self.data.shape[-3] // 2
        return self.data[..., c:, :, :]


@dataclass
class PipelineOutput:
    """Everything the pipeline predicts for one (batch of) image(s)."""

    normals: Optional[torch.Tensor]  # (B,6,H,W) in [-1,1]
    colors: Optional[torch.Tensor]  # (B,6,H,W) in (0,1)
    depths: torch.Tensor  # (B,2,H,W) in (0,1)
    taps: dict = field(default_factory=dict)  # {"phi_color","phi_normal"}


class conv_block(nn.Module):
    """(Conv 3x3 => BN => ReLU) * 2"""

    def __init__(self, ch_in, ch_out):
        super().__init__()
        self.conv = nn.Sequential(
            nn.Conv2d(ch_in, ch_out, kernel_size=3, padding=1, bias=True),
            nn.BatchNorm2d(ch_out),
            nn.ReLU(inplace=True),
            nn.Conv2d(ch_out, ch_out, kernel_size=3, padding=1, bias=True),
            nn.BatchNorm2d(ch_out),
            nn.ReLU(inplace=True),
        )

    def forward(self, x):
        return self.conv(x)


class up_conv(nn.Module):
    """Upsample x2 then Conv => BN => ReLU."""

    def __init__(self, ch_in, ch_out):
        super().__init__()
        self.up = nn.Sequential(
            nn.Upsample(scale_factor=2, mode="nearest"),
            nn.Conv2d(ch_in, ch_out, kernel_size=3, padding=1, bias=True),
            nn.BatchNorm2d(ch_out),
            nn.ReLU(inplace=True),
        )

    def forward(self, x):
        return self.up(x)


class AttentionGate(nn.Module):
    """Additive attention over a skip connection.

    alpha = sigmoid(psi(relu(W_x x + W_g g))) in [0,1] per pixel; output
    is skip * alpha. The gate signal is bilinearly upsampled when it is
    spatially coarser than the skip.
    """

    def __init__(self, ch_skip, ch_gate, ch_inter):
        super().__init__()
        self.W_x = nn.Sequential(
            nn.Conv2d(ch_skip, ch_inter, kernel_size=1, bias=True),
            nn.BatchNorm2d(ch_inter),
        )
        self.W_g = nn.Sequential(
            nn.Conv2d(ch_gate, ch_inter, kernel_size=1, bias=True),
            nn.BatchNorm2d(ch_inter),
        )
        self.psi = nn.Sequential(
            nn.Conv2d(ch_inter, 1, kernel_size=1, bias=True),
            nn.BatchNorm2d(1),
            nn.Sigmoid(),
        )
        self.relu = nn.ReLU(inplace=True)

    def attention(self, x, g):
        if g.shape[-2:] != x.shape[-2:]:
            g = nn.functional.interpolate(g, size=x.shape[-2:], mode="bilinear", align_corners=False)
        return self.psi(self.relu(self.W_x(x) + self.W_g(g)))

    def forward(self, x, g):
        if x.shape[0] != g.shape[0]:
            raise ShapeMismatch("skip/gate batch sizes differ")
        return x * self.attention(x, g)


class IdentityGate(nn.Module):
    """Parameterless stand-in: alpha identically 1 (plain skip connection)."""

    def forward(self, x, g):
        return x

    def attention(self, x, g):
        return torch.ones_like(x[:, :1])


def _make_gate(ch_skip, ch_gate, attention: bool) -> nn.Module:
    if not attention:
        return IdentityGate()
    return AttentionGate(ch_skip, ch_gate, max(ch_skip // 2, 1))


class MultiModalAttentionGate(nn.Module):
    """Two per-modality attention gates sharing one gating signal.

    Each skip is weighted by its own mask, the gated skips are
    concatenated and a 1x1 projection brings them to the decoder width.
    """

    def __init__(self, ch_skip, ch_gate, ch_out, attention: bool = True):
        super().__init__()
        self.gate_a = _make_gate(ch_skip, ch_gate, attention)
        self.gate_b = _make_gate(ch_skip, ch_gate, attention)
        self.project = nn.Conv2d(2 * ch_skip, ch_out, kernel_size=1, bias=True)

    def forward(self, skip_a, skip_b, g):
        if skip_a.shape != skip_b.shape:
            raise ShapeMismatch("modality skips must share a shape")
        fused = torch.cat([self.gate_a(skip_a, g), self.gate_b(skip_b, g)], dim=1)
        return self.project(fused)


def _check_divisible(x, depth):
    h, w = x.shape[-2:]
    if h % (2**depth) or w % (2**depth):
        raise ShapeError(f"input {h}x{w} not divisible by 2^{depth}")


def _head_activation(name):
    if name == "tanh":
        return nn.Tanh()
    if name == "sigmoid":
        return nn.Sigmoid()
    return nn.Identity()


class AUNet(nn.Module):
    """Attention U-Net returning (output, feature tap before the head)."""

    def __init__(self, spec: AUNetSpec):
        super().__init__()
        self.spec = spec
        d = spec.depth
        self.inc = conv_block(spec.in_channels, spec.width(0))
        self.downs = nn.ModuleList(
            [conv_block(spec.width(l), spec.width(l + 1)) for l in range(d)]
        )
        self.pool = nn.MaxPool2d(2)
        self.ups = nn.ModuleList([up_conv(spec.width(l + 1), spec.width(l)) for l in range(d)])
        self.gates = nn.ModuleList(
            [_make_gate(spec.width(l), spec.width(l), spec.attention) for l in range(d)]
        )
        self.dec = nn.ModuleList([conv_block(2 * spec.width(l), spec.width(l)) for l in range(d)])
        self.head = nn.Conv2d(spec.width(0), spec.out_channels, kernel_size=1)
        self.act = _head_activation(spec.activation)

    def forward(self, x):
        _check_divisible(x, self.spec.depth)
        skips = [self.inc(x)]
        for down in self.downs:
            skips.append(down(self.pool(skips[-1])))
        feat = skips.pop()
        for level in reversed(range(self.spec.depth)):
            feat = self.ups[level](feat)
            gated = self.gates[level](skips[level], feat)
            feat = self.dec[level](torch.cat([gated, feat], dim=1))
        return self.act(self.head(feat)), feat


class MAUNet(nn.Module):
    """Multi-headed attention U-Net: one encoder per modality feeding a
    single decoder through multi-headed attention gates."""

    def __init__(self, in_a: int, in_b: int, spec: AUNetSpec):
        super().__init__()
        self.spec = spec
        d = spec.depth

        def encoder(ch_in):
            return nn.ModuleList(
                [conv_block(ch_in, spec.width(0))]
                + [conv_block(spec.width(l), spec.width(l + 1)) for l in range(d)]
            )

        self.enc_a = encoder(in_a)
        self.enc_b = encoder(in_b)
        self.pool = nn.MaxPool2d(2)
        self.bottleneck = nn.Conv2d(2 * spec.width(d), spec.width(d), kernel_size=1)
        self.ups = nn.ModuleList([up_conv(spec.width(l + 1), spec.width(l)) for l in range(d)])
        self.fuse = nn.ModuleList(
            [
                MultiModalAttentionGate(spec.width(l), spec.width(l), spec.width(l), spec.attention)
                for l in range(d)
            ]
        )
        self.dec = nn.ModuleList([conv_block(2 * spec.width(l), spec.width(l)) for l in range(d)])
        self.head = nn.Conv2d(spec.width(0), spec.out_channels, kernel_size=1)
        self.act = _head_activation(spec.activation)

    def _encode(self, enc, x):
        skips = [enc[0](x)]
        for block in enc[1:]:
            skips.append(block(self.pool(skips[-1])))
        return skips

    def forward(self, phi_a, phi_b):
        if phi_a.shape[-2:] != phi_b.shape[-2:]:
            raise ShapeMismatch("modality inputs must share spatial size")
        _check_divisible(phi_a, self.spec.depth)
        sa = self._encode(self.enc_a, phi_a)
        sb = self._encode(self.enc_b, phi_b)
        feat = self.bottleneck(torch.cat([sa.pop(), sb.pop()], dim=1))
        for level in reversed(range(self.spec.depth)):
            feat = self.ups[level](feat)
            fused = self.fuse[level](sa[level], sb[level], feat)
            feat = self.dec[level](torch.cat([fused, feat], dim=1))
        return self.act(self.head(feat))


class Pipeline(nn.Module):
    """Normal -> shade-free color -> depth, wired through feature taps."""

    def __init__(self, config: PipelineConfig):
        super().__init__()
        self.config = config
        attention = config.mode != "no_attention"
        w, d = config.base_width, config.depth
        if config.mode == "direct_depth":
            self.depth_net = AUNet(
                AUNetSpec(3, 2, d, w, activation="sigmoid", attention=attention)
            )
            self.normal_net = None
            self.color_net = None
        else:
            self.normal_net = AUNet(AUNetSpec(3, 6, d, w, activation="tanh", attention=attention))
            self.color_net = AUNet(AUNetSpec(9, 6, d, w, activation="sigmoid", attention=attention))
            self.depth_net = MAUNet(w, w, AUNetSpec(w, 2, d, w, activation="sigmoid", attention=attention))

    def forward(self, image: torch.Tensor) -> PipelineOutput:
        if self.config.mode == "direct_depth":
            depths, _ = self.depth_net(image)
            return PipelineOutput(normals=None, colors=None, depths=depths, taps={})
        normals, phi_normal = self.normal_net(image)
        colors, phi_color = self.color_net(torch.cat([image, normals], dim=1))
        depths = self.depth_net(phi_color, phi_normal)
        return PipelineOutput(
            normals=normals,
            colors=colors,
            depths=depths,
            taps={"phi_color": phi_color, "phi_normal": phi_normal},
        )

    def parameter_count(self) -> int:
        return sum(p.numel() for p in self.parameters())


def build_pipeline(config: PipelineConfig) -> Pipeline:
    return Pipeline(config)
