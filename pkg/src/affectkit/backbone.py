"""Compact attention backbone: MobileFaceNet-style trunk, dual-direction
attention, and global depthwise pooling to a fixed-width embedding.

Initialization is the framework default (fan-in scaled); pretrained
weights, when available, load through the checkpoint container.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import NamedTuple

import torch
import torch.nn as nn


@dataclass(frozen=True)
class BackboneConfig:
    input_size: int = 112
    in_channels: int = 3
    stem_channels: int = 16
    stage_channels: tuple = (24, 32, 64)
    blocks_per_stage: tuple = (2, 2, 2)
    expansion: int = 2
    trunk_channels: int = 128
    embedding_dim: int = 512
    attention_heads: int = 2
    attention_reduction: int = 4

    @property
    def feature_size(self) -> int:
        # stem halves once, each stage halves once more
        down = 2 ** (1 + len(self.stage_channels))
        if self.input_size % down:
            raise ValueError(f"input size {self.input_size} not divisible by {down}")
        return self.input_size // down


PRESETS = {
    # ~0.2M parameters, tractable on a CPU
    "desk": BackboneConfig(),
    # full-width MobileFaceNet layout
    "full": BackboneConfig(
        stem_channels=64,
        stage_channels=(64, 128, 128),
        blocks_per_stage=(5, 7, 3),
        expansion=4,
        trunk_channels=512,
    ),
    # small spatial/channel budget for fast tests
    "tiny": BackboneConfig(
        input_size=32,
        stem_channels=8,
        stage_channels=(12, 16),
        blocks_per_stage=(1, 1),
        trunk_channels=32,
    ),
}


def resolve_backbone_config(spec) -> BackboneConfig:
    """Accepts a preset name, a BackboneConfig, or a dict with an optional
    'preset' base plus field overrides."""
    if isinstance(spec, BackboneConfig):
        return spec
    if isinstance(spec, str):
        try:
            return PRESETS[spec]
        except KeyError:
            raise ValueError(f"unknown backbone preset {spec!r}") from None
    spec = dict(spec)
    base = PRESETS[spec.pop("preset", "desk")]
    for key in ("stage_channels", "blocks_per_stage"):
        if key in spec:
            spec[key] = tuple(spec[key])
    return replace(base, **spec)


class ConvBnPrelu(nn.Module):
    def __init__(self, in_ch, out_ch, kernel=3, stride=1, padding=1, groups=1):
        super().__init__()
        self.conv = nn.Conv2d(in_ch, out_ch, kernel, stride, padding,
                              groups=groups, bias=False)
        self.bn = nn.BatchNorm2d(out_ch)
        self.act = nn.PReLU(out_ch)

    def forward(self, x):
        return self.act(self.bn(self.conv(x)))


class DepthwiseSeparable(nn.Module):
    def __init__(self, channels):
        super().__init__()
        self.depthwise = ConvBnPrelu(channels, channels, groups=channels)
        self.pointwise = ConvBnPrelu(channels, channels, kernel=1, padding=0)

    def forward(self, x):
        return self.pointwise(self.depthwise(x))


class InvertedResidual(nn.Module):
    """MobileNetV2-style bottleneck; residual only at stride 1 with matching width."""

    def __init__(self, in_ch, out_ch, stride, expansion):
        super().__init__()
        hidden = in_ch * expansion
        self.use_residual = stride == 1 and in_ch == out_ch
        self.expand = ConvBnPrelu(in_ch, hidden, kernel=1, padding=0)
        self.depthwise = ConvBnPrelu(hidden, hidden, stride=stride, groups=hidden)
        self.project = nn.Sequential(
            nn.Conv2d(hidden, out_ch, 1, 1, 0, bias=False),
            nn.BatchNorm2d(out_ch),
        )

    def forward(self, x):
        y = self.project(self.depthwise(self.expand(x)))
        return x + y if self.use_residual else y


class MobileFaceNetTrunk(nn.Module):
    """Strided convolutional trunk mapping (B,3,S,S) to (B,C,S/2^k,S/2^k)."""

    def __init__(self, config: BackboneConfig):
        super().__init__()
        self.config = config
        self.stem = ConvBnPrelu(config.in_channels, config.stem_channels, stride=2)
        self.stem_dw = DepthwiseSeparable(config.stem_channels)
        blocks = []
        in_ch = config.stem_channels
        for out_ch, n_blocks in zip(config.stage_channels, config.blocks_per_stage):
            for i in range(n_blocks):
                stride = 2 if i == 0 else 1
                blocks.append(InvertedResidual(in_ch, out_ch, stride, config.expansion))
                in_ch = out_ch
        self.stages = nn.Sequential(*blocks)
        self.expand = ConvBnPrelu(in_ch, config.trunk_channels, kernel=1, padding=0)

    def forward(self, images: torch.Tensor) -> torch.Tensor:
        size = self.config.input_size
        if images.ndim != 4 or images.shape[1] != self.config.in_channels \
                or images.shape[2] != size or images.shape[3] != size:
            raise ValueError(
                f"expected images (B,{self.config.in_channels},{size},{size}), "
                f"got {tuple(images.shape)}"
            )
        return self.expand(self.stages(self.stem_dw(self.stem(images))))


class AttentionMaps(NamedTuple):
    horizontal: tuple  # per head: (B, C, H, 1)
    vertical: tuple    # per head: (B, C, 1, W)


class _DirectionHead(nn.Module):
    """One attention head: pool along each spatial axis, bottleneck, gate."""

    def __init__(self, channels, reduction):
        super().__init__()
        mid = max(4, channels // reduction)
        self.squeeze = nn.Conv2d(channels, mid, 1)
        self.act = nn.ReLU()
        self.excite_h = nn.Conv2d(mid, channels, 1)
        self.excite_w = nn.Conv2d(mid, channels, 1)

    def forward(self, x):
        h, w = x.shape[2], x.shape[3]
        pooled_h = x.mean(dim=3, keepdim=True)                    # (B,C,H,1)
        pooled_w = x.mean(dim=2, keepdim=True).permute(0, 1, 3, 2)  # (B,C,W,1)
        y = self.act(self.squeeze(torch.cat([pooled_h, pooled_w], dim=2)))
        y_h, y_w = torch.split(y, [h, w], dim=2)
        gate_h = torch.sigmoid(self.excite_h(y_h))                  # (B,C,H,1)
        gate_w = torch.sigmoid(self.excite_w(y_w)).permute(0, 1, 3, 2)  # (B,C,1,W)
        return gate_h, gate_w


class DualDirectionAttention(nn.Module):
    """Two direction-attention heads combined by element-wise maximum."""

    def __init__(self, channels, heads: int = 2, reduction: int = 4):
        super().__init__()
        self.heads = nn.ModuleList(_DirectionHead(channels, reduction) for _ in range(heads))

    def forward(self, features: torch.Tensor):
        horizontal, vertical = [], []
        combined = None
        for head in self.heads:
            gate_h, gate_w = head(features)
            horizontal.append(gate_h)
            vertical.append(gate_w)
            full = gate_h * gate_w  # broadcast to (B,C,H,W), stays in [0,1]
            combined = full if combined is None else torch.maximum(combined, full)
        attended = features * combined
        return attended, AttentionMaps(tuple(horizontal), tuple(vertical))


class GlobalDepthwisePool(nn.Module):
    """Depthwise convolution spanning the whole spatial extent, then a linear
    projection to the embedding width."""

    def __init__(self, channels, kernel_size, embedding_dim):
        super().__init__()
        self.kernel_size = kernel_size
        self.conv = nn.Conv2d(channels, channels, kernel_size, groups=channels, bias=False)
        self.proj = nn.Linear(channels, embedding_dim)

    def forward(self, attended: torch.Tensor) -> torch.Tensor:
        if attended.shape[2] != self.kernel_size or attended.shape[3] != self.kernel_size:
            raise ValueError(
                f"expected spatial size {self.kernel_size}, got "
                f"{tuple(attended.shape[2:])}"
            )
        pooled = self.conv(attended)  # (B,C,1,1)
        return self.proj(pooled.flatten(1))


class AttentionBackbone(nn.Module):
    """trunk -> dual-direction attention -> global depthwise pooling."""

    def __init__(self, config: BackboneConfig):
        super().__init__()
        self.config = config
        self.trunk = MobileFaceNetTrunk(config)
        self.attention = DualDirectionAttention(
            config.trunk_channels, config.attention_heads, config.attention_reduction
        )
        self.pool = GlobalDepthwisePool(
            config.trunk_channels, config.feature_size, config.embedding_dim
        )

    def extract_features(self, images: torch.Tensor) -> torch.Tensor:
        return self.trunk(images)

    def forward_with_maps(self, images: torch.Tensor):
        attended, maps = self.attention(self.trunk(images))
        return self.pool(attended), maps

    def forward(self, images: torch.Tensor) -> torch.Tensor:
        attended, _ = self.attention(self.trunk(images))
        return self.pool(attended)


def make_backbone(spec="desk", **overrides) -> AttentionBackbone:
    config = resolve_backbone_config(spec)
    if overrides:
        config = replace(config, **overrides)
    return AttentionBackbone(config)
