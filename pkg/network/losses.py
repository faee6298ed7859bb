"""
DeVigNet Losses and Metrics
Training criterion (MSE + lambda * (1 - SSIM)) and the PSNR/SSIM/MAE
evaluation metrics. Image metrics take HxWx3 arrays in [0,1]; the tensor
variants take (B, C, H, W) batches and stay differentiable.
"""

import math
from typing import Callable, Dict, Union

import numpy as np
import torch
import torch.nn.functional as F

from config import DEFAULT_LOSS_LAMBDA
from utils.errors import StructuralError

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03
DATA_RANGE = 1.0

ArrayLike = Union[np.ndarray, torch.Tensor]

_perceptual_metrics: Dict[str, Callable[[np.ndarray, np.ndarray], float]] = {}


def register_perceptual_metric(name: str, fn: Callable[[np.ndarray, np.ndarray], float]):
    """Plug in an extra metric (e.g. LPIPS) reported next to PSNR/SSIM/MAE"""
    _perceptual_metrics[name] = fn


def unregister_perceptual_metric(name: str):
    _perceptual_metrics.pop(name, None)


def perceptual_metrics() -> Dict[str, Callable[[np.ndarray, np.ndarray], float]]:
    return dict(_perceptual_metrics)


def gaussian_window(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA,
                    dtype: torch.dtype = torch.float64, device=None) -> torch.Tensor:
    coords = torch.arange(size, dtype=dtype, device=device) - (size - 1) / 2.0
    g = torch.exp(-(coords ** 2) / (2.0 * sigma ** 2))
    g = g / g.sum()
    return torch.outer(g, g)


def _check_same_shape(a, b):
    if tuple(a.shape) != tuple(b.shape):
        raise StructuralError(f"shape mismatch: {tuple(a.shape)} vs {tuple(b.shape)}")


def ssim_window_size(height: int, width: int) -> int:
    """11, or the largest odd size that fits when a side is shorter"""
    side = min(height, width, SSIM_WINDOW)
    return side if side % 2 else side - 1


def ssim_map(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    """Per-channel SSIM map over valid windows only, (B, C, H-10, W-10) for 11x11 windows"""
    _check_same_shape(a, b)
    channels = a.shape[1]
    size = ssim_window_size(*a.shape[-2:])
    if size < 1:
        raise StructuralError(f"SSIM needs non-empty images, got {tuple(a.shape[-2:])}")
    window = gaussian_window(size, dtype=a.dtype, device=a.device).expand(channels, 1, size, size)

    def filt(x):
        return F.conv2d(x, window, groups=channels)

    c1 = (SSIM_K1 * DATA_RANGE) ** 2
    c2 = (SSIM_K2 * DATA_RANGE) ** 2
    mu_a = filt(a)
    mu_b = filt(b)
    var_a = filt(a * a) - mu_a ** 2
    var_b = filt(b * b) - mu_b ** 2
    cov = filt(a * b) - mu_a * mu_b
    numerator = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    denominator = (mu_a ** 2 + mu_b ** 2 + c1) * (var_a + var_b + c2)
    return numerator / denominator


def ssim_tensor(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    return ssim_map(a, b).mean()


def mse_tensor(pred: torch.Tensor, gt: torch.Tensor) -> torch.Tensor:
    _check_same_shape(pred, gt)
    return F.mse_loss(pred, gt)


def loss_total(pred: torch.Tensor, gt: torch.Tensor, loss_lambda: float = DEFAULT_LOSS_LAMBDA) -> torch.Tensor:
    """L_MSE + lambda * (1 - SSIM)"""
    _check_same_shape(pred, gt)
    return mse_tensor(pred, gt) + loss_lambda * (1.0 - ssim_tensor(pred, gt))


# Image metrics (HxWx3 in [0,1])

def _as_batch(img: ArrayLike) -> torch.Tensor:
    if isinstance(img, torch.Tensor):
        t = img.detach().to(torch.float64)
        return t if t.dim() == 4 else t.permute(2, 0, 1).unsqueeze(0)
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim != 3:
        raise StructuralError(f"expected an HxWxC image, got shape {arr.shape}")
    return torch.from_numpy(np.ascontiguousarray(arr.transpose(2, 0, 1))).unsqueeze(0)


def ssim(a: ArrayLike, b: ArrayLike) -> float:
    _check_same_shape(a, b)
    return float(ssim_tensor(_as_batch(a), _as_batch(b)))


def psnr(a: ArrayLike, b: ArrayLike) -> float:
    """10 log10(1 / MSE) with peak 1.0; identical inputs give +inf"""
    _check_same_shape(a, b)
    mse = float(torch.mean((_as_batch(a) - _as_batch(b)) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(DATA_RANGE ** 2 / mse)


def mae(a: ArrayLike, b: ArrayLike) -> float:
    """Mean absolute error on the 0-255 scale"""
    _check_same_shape(a, b)
    return float(torch.mean(torch.abs(_as_batch(a) - _as_batch(b)))) * 255.0
