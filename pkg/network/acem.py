"""
DeVigNet Adaptive Channel Expansion Module
Activation-free refinement of the high-frequency pyramid levels
"""

import torch
import torch.nn as nn

from config import AcemConfig
from utils.errors import StructuralError


class LayerNorm2d(nn.Module):
    """Per-pixel normalization across channels with learnable affine"""

    def __init__(self, channels: int, eps: float = 1e-6):
        super().__init__()
        self.eps = eps
        self.weight = nn.Parameter(torch.ones(1, channels, 1, 1))
        self.bias = nn.Parameter(torch.zeros(1, channels, 1, 1))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        mu = x.mean(dim=1, keepdim=True)
        var = (x - mu).pow(2).mean(dim=1, keepdim=True)
        return (x - mu) / torch.sqrt(var + self.eps) * self.weight + self.bias


def simple_gate(x: torch.Tensor) -> torch.Tensor:
    """Split channels into halves X, Y and return X * Y"""
    if x.shape[1] % 2:
        raise StructuralError(f"simple_gate needs an even channel count, got {x.shape[1]}")
    first, second = x.chunk(2, dim=1)
    return first * second


class SimpleGate(nn.Module):
    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return simple_gate(x)


class SimplifiedChannelAttention(nn.Module):
    """X * W pool(X): global average pool, one channel map, channel-wise scale"""

    def __init__(self, channels: int):
        super().__init__()
        self.pool = nn.AdaptiveAvgPool2d(1)
        self.fc = nn.Conv2d(channels, channels, kernel_size=1, bias=True)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return x * self.fc(self.pool(x))


class AcemBlock(nn.Module):
    """LN -> expand -> depthwise 3x3 -> gate -> SCA -> project, residual"""

    def __init__(self, cfg: AcemConfig):
        super().__init__()
        channels = cfg.channels
        expanded = cfg.expanded_channels
        self.norm = LayerNorm2d(channels)
        self.expand = nn.Conv2d(channels, expanded, kernel_size=1)
        self.depthwise = nn.Conv2d(expanded, expanded, kernel_size=3, padding=1, groups=expanded)
        self.gate = SimpleGate()
        self.sca = SimplifiedChannelAttention(expanded // 2)
        self.project = nn.Conv2d(expanded // 2, channels, kernel_size=1)

    def zero_init_residual(self):
        nn.init.zeros_(self.project.weight)
        nn.init.zeros_(self.project.bias)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        h = self.norm(x)
        h = self.expand(h)
        h = self.depthwise(h)
        h = self.gate(h)
        h = self.sca(h)
        return x + self.project(h)


class HighFrequencyRefiner(nn.Module):
    """One pyramid level: refine `high` conditioned on the coarser context"""

    def __init__(self, cfg: AcemConfig):
        super().__init__()
        self.cfg = cfg
        self.enabled = cfg.enabled
        if not self.enabled:
            return
        self.intro = nn.Conv2d(6, cfg.channels, kernel_size=1)
        self.blocks = nn.Sequential(*[AcemBlock(cfg) for _ in range(cfg.blocks_per_level)])
        self.head = nn.Conv2d(cfg.channels, 3, kernel_size=1)

    def zero_init_head(self):
        if self.enabled:
            nn.init.zeros_(self.head.weight)
            nn.init.zeros_(self.head.bias)

    def forward(self, high: torch.Tensor, context: torch.Tensor) -> torch.Tensor:
        if not self.enabled:
            return high
        if high.shape != context.shape:
            raise StructuralError(
                f"high-frequency level {tuple(high.shape)} and context {tuple(context.shape)} differ"
            )
        h = self.intro(torch.cat([high, context], dim=1))
        h = self.blocks(h)
        return high + self.head(h)
