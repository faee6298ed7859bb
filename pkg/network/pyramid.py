"""
DeVigNet Laplacian Pyramid
Exact band-pass decomposition of an image into high-frequency levels and a
low-frequency residual, plus the inverse reconstruction
"""

from dataclasses import dataclass
from typing import List

import torch
import torch.nn.functional as F

from utils.errors import StructuralError

BINOMIAL_TAPS = (1.0, 4.0, 6.0, 4.0, 1.0)
_PAD = 2


def binomial_kernel(channels: int, dtype: torch.dtype, device: torch.device, gain: float = 1.0) -> torch.Tensor:
    """Depthwise 5x5 kernel: outer product of [1,4,6,4,1]/16, times gain"""
    taps = torch.tensor(BINOMIAL_TAPS, dtype=dtype, device=device) / 16.0
    kernel = torch.outer(taps, taps) * gain
    return kernel.expand(channels, 1, 5, 5).contiguous()


def _blur(x: torch.Tensor, gain: float) -> torch.Tensor:
    channels = x.shape[1]
    padded = F.pad(x, (_PAD, _PAD, _PAD, _PAD), mode="reflect")
    return F.conv2d(padded, binomial_kernel(channels, x.dtype, x.device, gain), groups=channels)


def gaussian_downsample(x: torch.Tensor) -> torch.Tensor:
    """Binomial blur with reflect padding, then keep every second sample"""
    height, width = x.shape[-2:]
    if height % 2 or width % 2:
        raise StructuralError(f"gaussian_downsample needs even height and width, got {height}x{width}")
    if height <= _PAD or width <= _PAD:
        raise StructuralError(f"gaussian_downsample needs sides > {_PAD} for reflect padding, got {height}x{width}")
    return _blur(x, gain=1.0)[..., ::2, ::2]


def upsample(x: torch.Tensor) -> torch.Tensor:
    """Zero insertion followed by the binomial kernel scaled x2 per axis"""
    batch, channels, height, width = x.shape
    if 2 * height <= _PAD or 2 * width <= _PAD:
        raise StructuralError(f"upsample needs sides >= 2, got {height}x{width}")
    spread = x.new_zeros(batch, channels, 2 * height, 2 * width)
    spread[..., ::2, ::2] = x
    return _blur(spread, gain=4.0)


@dataclass
class PyramidDecomposition:
    highs: List[torch.Tensor]
    low: torch.Tensor

    def __post_init__(self):
        if len(self.highs) < 1:
            raise StructuralError("a pyramid needs at least one high-frequency level")

    @property
    def depth(self) -> int:
        return len(self.highs)


def decompose(img: torch.Tensor, depth: int) -> PyramidDecomposition:
    """Laplacian pyramid: highs[k] = x_k - up(down(x_k)), low = x_depth"""
    if depth < 1:
        raise StructuralError(f"pyramid depth must be >= 1, got {depth}")
    multiple = 2 ** depth
    height, width = img.shape[-2:]
    if height % multiple or width % multiple:
        raise StructuralError(
            f"height and width must be multiples of {multiple} for depth {depth}, got {height}x{width}"
        )

    highs = []
    current = img
    for _ in range(depth):
        down = gaussian_downsample(current)
        highs.append(current - upsample(down))
        current = down
    return PyramidDecomposition(highs=highs, low=current)


def reconstruct(pyr: PyramidDecomposition) -> torch.Tensor:
    """Inverse of decompose: x_k = highs[k] + up(x_{k+1}), starting from low"""
    current = pyr.low
    for level in reversed(range(pyr.depth)):
        high = pyr.highs[level]
        expected = (current.shape[-2] * 2, current.shape[-1] * 2)
        if tuple(high.shape[-2:]) != expected or high.shape[:2] != current.shape[:2]:
            raise StructuralError(
                f"level {level} has shape {tuple(high.shape)}, expected spatial size {expected} "
                f"over a coarser level of shape {tuple(current.shape)}"
            )
        current = high + upsample(current)
    return current
