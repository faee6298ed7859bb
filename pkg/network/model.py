"""
DeVigNet Model
Full assembly: pad -> pyramid decomposition -> DAFT/HCAM on the low
frequency -> ACEM refinement of every high-frequency level, coarsest first ->
reconstruction -> crop -> clamp
"""

from typing import Tuple

import torch
import torch.nn as nn
import torch.nn.functional as F

from config import ModelConfig
from network.acem import HighFrequencyRefiner
from network.daft import DualAggregatedFusionTransformer
from network.pyramid import PyramidDecomposition, decompose, reconstruct, upsample
from utils.errors import SizingError, StructuralError
from utils.logging_utils import setup_logger

logger = setup_logger(__name__)


class DeVigNet(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.cfg = cfg
        self.daft = DualAggregatedFusionTransformer(cfg.daft, alpha_init=cfg.hcam_alpha_init)
        # refiners[k] handles pyramid level k (0 = finest)
        self.refiners = nn.ModuleList([HighFrequencyRefiner(cfg.acem) for _ in range(cfg.pyramid_depth)])
        if cfg.zero_init_heads:
            self.zero_init_heads()

    def zero_init_heads(self):
        """Zero every residual head; the network then maps each input to itself"""
        self.daft.zero_init_head()
        if self.daft.enabled:
            self.daft.hcam.zero_init_projection()
        for refiner in self.refiners:
            refiner.zero_init_head()

    @property
    def size_multiple(self) -> int:
        return self.cfg.size_multiple

    def check_size(self, height: int, width: int):
        minimum = self.size_multiple
        if height < minimum or width < minimum:
            raise SizingError(
                height, width, minimum, minimum,
                reason=f"pyramid depth {self.cfg.pyramid_depth}, patch size {self.cfg.daft.patch_size}",
            )

    def pad(self, x: torch.Tensor) -> Tuple[torch.Tensor, Tuple[int, int]]:
        """Reflect-pad bottom/right to the next multiple of 2^depth * P"""
        height, width = x.shape[-2:]
        self.check_size(height, width)
        multiple = self.size_multiple
        pad_h = (-height) % multiple
        pad_w = (-width) % multiple
        if pad_h or pad_w:
            x = F.pad(x, (0, pad_w, 0, pad_h), mode="reflect")
        return x, (height, width)

    def refine_pyramid(self, pyr: PyramidDecomposition) -> PyramidDecomposition:
        enhanced_low = self.daft(pyr.low)
        refined = list(pyr.highs)
        running = enhanced_low
        for level in reversed(range(pyr.depth)):
            context = upsample(running)
            refined[level] = self.refiners[level](pyr.highs[level], context)
            running = refined[level] + context
        return PyramidDecomposition(highs=refined, low=enhanced_low)

    def forward(self, x: torch.Tensor, clamp_output: bool = True) -> torch.Tensor:
        if x.dim() != 4 or x.shape[1] != 3:
            raise StructuralError(f"expected a (B, 3, H, W) batch, got {tuple(x.shape)}")
        padded, (height, width) = self.pad(x)
        pyr = decompose(padded, self.cfg.pyramid_depth)
        out = reconstruct(self.refine_pyramid(pyr))
        out = out[..., :height, :width]
        if clamp_output:
            out = out.clamp(0.0, 1.0)
        return out


def build_model(cfg: ModelConfig) -> DeVigNet:
    """Seeded construction: the same config always yields the same weights"""
    torch.manual_seed(cfg.seed)
    model = DeVigNet(cfg)
    n_params = sum(p.numel() for p in model.parameters())
    logger.info(
        f"Built DeVigNet depth={cfg.pyramid_depth} daft={cfg.daft.enabled} "
        f"acem={cfg.acem.enabled} params={n_params}"
    )
    return model
