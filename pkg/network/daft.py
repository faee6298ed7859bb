"""
DeVigNet Dual Aggregated Fusion Transformer
Global processing of the low-frequency pyramid residual: patch tokens pass
through four cascaded fusion transformers whose outputs are merged by
aggregation nodes and fused by layer attention
"""

import math
from dataclasses import dataclass
from typing import List, Tuple

import torch
import torch.nn as nn
import torch.nn.functional as F
from einops import rearrange

from config import DaftConfig
from network.acem import LayerNorm2d
from network.hcam import HierarchicalChannelAttention, LayerStack
from utils.errors import StructuralError

POS_INIT_SCALE = 0.1


def _sincos_1d(dim: int, length: int) -> torch.Tensor:
    """(length, dim) sine/cosine table, zero-padded when dim is odd"""
    even = dim - dim % 2
    position = torch.arange(length, dtype=torch.float32).unsqueeze(1)
    div_term = torch.exp(torch.arange(0, even, 2, dtype=torch.float32) * (-math.log(10000.0) / max(even, 1)))
    angles = position * div_term
    table = torch.cat([angles.sin(), angles.cos()], dim=1)
    if even < dim:
        table = torch.cat([table, torch.zeros(length, 1)], dim=1)
    return table


def sincos_position_grid(channels: int, size: int) -> torch.Tensor:
    """(1, C, size, size): first half of the channels encode rows, second half columns"""
    dim_h = channels // 2
    rows = _sincos_1d(dim_h, size)[:, None, :].expand(size, size, dim_h)
    cols = _sincos_1d(channels - dim_h, size)[None, :, :].expand(size, size, channels - dim_h)
    return rearrange(torch.cat([rows, cols], dim=-1), "h w c -> 1 c h w").contiguous()


@dataclass
class TokenGrid:
    tokens: torch.Tensor  # (B, Hp*Wp, C)
    grid: Tuple[int, int]

    def __post_init__(self):
        if self.tokens.dim() != 3 or self.tokens.shape[1] != self.grid[0] * self.grid[1]:
            raise StructuralError(
                f"token tensor {tuple(self.tokens.shape)} does not match grid {self.grid}"
            )

    def to_feature_map(self) -> torch.Tensor:
        return rearrange(self.tokens, "b (h w) c -> b c h w", h=self.grid[0], w=self.grid[1])

    @classmethod
    def from_feature_map(cls, fmap: torch.Tensor) -> "TokenGrid":
        height, width = fmap.shape[-2:]
        return cls(tokens=rearrange(fmap, "b c h w -> b (h w) c"), grid=(height, width))

    def with_tokens(self, tokens: torch.Tensor) -> "TokenGrid":
        return TokenGrid(tokens=tokens, grid=self.grid)


class PatchEmbed(nn.Module):
    """Non-overlapping PxP projection plus a resizable learned position grid"""

    def __init__(self, cfg: DaftConfig, in_channels: int = 3):
        super().__init__()
        self.patch_size = cfg.patch_size
        self.proj = nn.Conv2d(in_channels, cfg.channels, kernel_size=cfg.patch_size, stride=cfg.patch_size)
        self.pos_grid = nn.Parameter(POS_INIT_SCALE * sincos_position_grid(cfg.channels, cfg.pos_grid_size))

    def forward(self, x: torch.Tensor) -> TokenGrid:
        height, width = x.shape[-2:]
        if height % self.patch_size or width % self.patch_size:
            raise StructuralError(
                f"low-frequency input {height}x{width} is not divisible by patch size {self.patch_size}"
            )
        fmap = self.proj(x)
        pos = F.interpolate(self.pos_grid, size=fmap.shape[-2:], mode="bilinear", align_corners=False)
        return TokenGrid.from_feature_map(fmap + pos.to(fmap.dtype))


class MultiHeadSelfAttention(nn.Module):
    def __init__(self, dim: int, heads: int):
        super().__init__()
        self.heads = heads
        self.scale = (dim // heads) ** -0.5
        self.norm = nn.LayerNorm(dim)
        self.to_qkv = nn.Linear(dim, dim * 3, bias=False)
        self.to_out = nn.Linear(dim, dim)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        x = self.norm(x)
        q, k, v = map(
            lambda t: rearrange(t, "b n (h d) -> b h n d", h=self.heads),
            self.to_qkv(x).chunk(3, dim=-1),
        )
        attn = (torch.matmul(q, k.transpose(-1, -2)) * self.scale).softmax(dim=-1)
        out = rearrange(torch.matmul(attn, v), "b h n d -> b n (h d)")
        return self.to_out(out)


class FeedForward(nn.Module):
    def __init__(self, dim: int, hidden_dim: int):
        super().__init__()
        self.norm = nn.LayerNorm(dim)
        self.fc1 = nn.Linear(dim, hidden_dim)
        self.act = nn.GELU()
        self.fc2 = nn.Linear(hidden_dim, dim)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.fc2(self.act(self.fc1(self.norm(x))))


class TransformerBlock(nn.Module):
    """Pre-norm MSA and MLP, both residual"""

    def __init__(self, cfg: DaftConfig):
        super().__init__()
        self.attn = MultiHeadSelfAttention(cfg.channels, cfg.heads)
        self.mlp = FeedForward(cfg.channels, int(round(cfg.channels * cfg.mlp_ratio)))
        self.apply(self._init_module)

    @staticmethod
    def _init_module(module: nn.Module) -> None:
        if isinstance(module, nn.Linear):
            nn.init.trunc_normal_(module.weight, mean=0.0, std=0.02)
            if module.bias is not None:
                nn.init.zeros_(module.bias)

    def zero_init_residual(self):
        for proj in (self.attn.to_out, self.mlp.fc2):
            nn.init.zeros_(proj.weight)
            nn.init.zeros_(proj.bias)

    def forward(self, t: TokenGrid) -> TokenGrid:
        x = t.tokens
        x = x + self.attn(x)
        x = x + self.mlp(x)
        return t.with_tokens(x)


class FusionTransformer(nn.Module):
    """m2(m1(t)) + m1(t), each module a stack of n_blocks transformer blocks"""

    def __init__(self, cfg: DaftConfig, n_blocks: int):
        super().__init__()
        if n_blocks not in (1, 2, 3, 4):
            raise StructuralError(f"a fusion transformer holds 1-4 blocks per module, got {n_blocks}")
        self.n_blocks = n_blocks
        self.first = nn.ModuleList([TransformerBlock(cfg) for _ in range(n_blocks)])
        self.second = nn.ModuleList([TransformerBlock(cfg) for _ in range(n_blocks)])

    @staticmethod
    def _run(blocks: nn.ModuleList, t: TokenGrid) -> TokenGrid:
        for block in blocks:
            t = block(t)
        return t

    def forward(self, t: TokenGrid) -> TokenGrid:
        m1 = self._run(self.first, t)
        m2 = self._run(self.second, m1)
        return m1.with_tokens(m2.tokens + m1.tokens)


class AggregationNode(nn.Module):
    """Channel concatenation followed by a pointwise projection back to C"""

    def __init__(self, channels: int):
        super().__init__()
        self.fuse = nn.Conv2d(2 * channels, channels, kernel_size=1)

    def forward(self, a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
        if a.shape != b.shape:
            raise StructuralError(f"aggregation operands differ: {tuple(a.shape)} vs {tuple(b.shape)}")
        return self.fuse(torch.cat([a, b], dim=1))


class DualAggregatedFusionTransformer(nn.Module):
    """Low-frequency correction low * (1 + gain) + offset, gain and offset predicted per pixel"""

    def __init__(self, cfg: DaftConfig, alpha_init: float = 1.0):
        super().__init__()
        self.cfg = cfg
        self.enabled = cfg.enabled
        if not self.enabled:
            return
        self.patch_embed = PatchEmbed(cfg)
        self.stages = nn.ModuleList([FusionTransformer(cfg, n) for n in cfg.block_counts])
        self.aggregators = nn.ModuleList([AggregationNode(cfg.channels) for _ in range(len(cfg.block_counts) - 1)])
        self.hcam = HierarchicalChannelAttention(cfg.channels, alpha_init=alpha_init)
        self.head_norm = LayerNorm2d(cfg.channels)
        # per token: gain and offset for each of the 3 x P x P pixels it covers
        self.head = nn.Conv2d(cfg.channels, 2 * 3 * cfg.patch_size ** 2, kernel_size=1)

    def zero_init_head(self):
        if self.enabled:
            nn.init.zeros_(self.head.weight)
            nn.init.zeros_(self.head.bias)

    def aggregate(self, t: TokenGrid) -> List[torch.Tensor]:
        """Run the cascade and return the aggregation-node outputs, shallow to deep"""
        outputs = []
        for stage in self.stages:
            t = stage(t)
            outputs.append(t.to_feature_map())

        aggregated = []
        running = outputs[0]
        for node, feature in zip(self.aggregators, outputs[1:]):
            running = node(running, feature)
            aggregated.append(running)
        return aggregated

    def forward(self, lowfreq: torch.Tensor) -> torch.Tensor:
        if not self.enabled:
            return lowfreq
        tokens = self.patch_embed(lowfreq)
        aggregated = self.aggregate(tokens)
        fused = self.hcam(LayerStack(aggregated), aggregated[-1])
        gain, offset = rearrange(
            self.head(self.head_norm(fused)),
            "b (m c p1 p2) h w -> m b c (h p1) (w p2)",
            m=2, c=3, p1=self.cfg.patch_size, p2=self.cfg.patch_size,
        )
        return lowfreq + lowfreq * gain + offset
