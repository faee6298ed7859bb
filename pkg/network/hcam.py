"""
DeVigNet Hierarchical Channel Attention Module
Layer attention across the N=3 aggregated features of the low-frequency branch
"""

import math
from dataclasses import dataclass
from typing import List

import torch
import torch.nn as nn
from einops import rearrange

from utils.errors import StructuralError

STACK_DEPTH = 3


@dataclass
class LayerStack:
    features: List[torch.Tensor]

    def __post_init__(self):
        if len(self.features) != STACK_DEPTH:
            raise StructuralError(f"layer attention expects {STACK_DEPTH} features, got {len(self.features)}")
        shape = self.features[0].shape
        for idx, feature in enumerate(self.features):
            if feature.dim() != 4 or feature.shape != shape:
                raise StructuralError(f"feature {idx} has shape {tuple(feature.shape)}, expected {tuple(shape)}")

    def stacked(self) -> torch.Tensor:
        """(B, N, C, H, W)"""
        return torch.stack(self.features, dim=1)


class HierarchicalChannelAttention(nn.Module):
    """R_out = W_1x1 LA(Q, K, V) + R_in"""

    def __init__(self, channels: int, alpha_init: float = 1.0):
        super().__init__()
        self.channels = channels
        self.query = nn.Conv2d(channels, channels, kernel_size=1)
        # a key bias shifts every score in a row equally, so softmax ignores it
        self.key = nn.Conv2d(channels, channels, kernel_size=1, bias=False)
        self.value = nn.Conv2d(channels, channels, kernel_size=1)
        self.alpha = nn.Parameter(torch.tensor(float(alpha_init)))
        self.project = nn.Conv2d(STACK_DEPTH * channels, channels, kernel_size=1)

    def zero_init_projection(self):
        nn.init.zeros_(self.project.weight)
        nn.init.zeros_(self.project.bias)

    def _per_layer(self, conv: nn.Conv2d, stack: torch.Tensor) -> torch.Tensor:
        batch = stack.shape[0]
        flat = rearrange(stack, "b n c h w -> (b n) c h w")
        return rearrange(conv(flat), "(b n) c h w -> b n c h w", b=batch)

    def attention_scores(self, stack: LayerStack) -> torch.Tensor:
        """(B, N, N) row-stochastic matrix softmax(Q^ K^T / (alpha * sqrt(C*H*W)))

        alpha is the temperature on logits normalized by the flattened layer
        length, so its meaning does not change with the token grid.
        """
        x = stack.stacked()
        q = rearrange(self._per_layer(self.query, x), "b n c h w -> b n (c h w)")
        k = rearrange(self._per_layer(self.key, x), "b n c h w -> b n (c h w)")
        temperature = self.alpha.clamp_min(1e-4) * math.sqrt(q.shape[-1])
        scores = torch.matmul(q, k.transpose(-1, -2)) / temperature
        return scores.softmax(dim=-1)

    def layer_attention(self, stack: LayerStack) -> torch.Tensor:
        """Attended stack, (B, N, C, H, W)"""
        x = stack.stacked()
        _, _, channels, height, width = x.shape
        if channels != self.channels:
            raise StructuralError(f"stack has {channels} channels, module built for {self.channels}")
        scores = self.attention_scores(stack)
        v = rearrange(self._per_layer(self.value, x), "b n c h w -> b n (c h w)")
        out = torch.matmul(scores, v)
        return rearrange(out, "b n (c h w) -> b n c h w", c=channels, h=height, w=width)

    def forward(self, stack: LayerStack, r_in: torch.Tensor) -> torch.Tensor:
        if r_in.shape != stack.features[0].shape:
            raise StructuralError(
                f"R_in has shape {tuple(r_in.shape)}, stack layers have {tuple(stack.features[0].shape)}"
            )
        merged = rearrange(self.layer_attention(stack), "b n c h w -> b (n c) h w")
        return self.project(merged) + r_in
