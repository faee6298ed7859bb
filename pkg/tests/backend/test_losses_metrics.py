"""
DeVigNet Backend Tests - Losses and Metrics
SSIM/PSNR/MAE against direct-formula oracles and the training criterion
"""

import math

import numpy as np
import pytest
import torch

from network.losses import (
    SSIM_K1, gaussian_window, loss_total, mae, mse_tensor, psnr, ssim, ssim_tensor, ssim_window_size,
)
from utils.errors import StructuralError


def brute_force_ssim(a: np.ndarray, b: np.ndarray, size: int = 11) -> float:
    """Per-window weighted statistics, valid windows only, mean over channels"""
    w = gaussian_window(size, dtype=torch.float64).numpy()
    c1, c2 = 0.01 ** 2, 0.03 ** 2
    height, width, channels = a.shape
    values = []
    for c in range(channels):
        for y in range(height - size + 1):
            for x in range(width - size + 1):
                pa = a[y:y + size, x:x + size, c]
                pb = b[y:y + size, x:x + size, c]
                mu_a, mu_b = (w * pa).sum(), (w * pb).sum()
                var_a = (w * pa * pa).sum() - mu_a ** 2
                var_b = (w * pb * pb).sum() - mu_b ** 2
                cov = (w * pa * pb).sum() - mu_a * mu_b
                values.append(
                    ((2 * mu_a * mu_b + c1) * (2 * cov + c2))
                    / ((mu_a ** 2 + mu_b ** 2 + c1) * (var_a + var_b + c2))
                )
    return float(np.mean(values))


class TestMetrics:
    """Test suite for PSNR, SSIM and MAE"""

    @pytest.fixture(autouse=True)
    def setup_method(self):
        """Set up test environment before each test"""
        self.rng = np.random.default_rng(51)
        self.zeros = np.zeros((16, 16, 3))
        self.halves = np.full((16, 16, 3), 0.5)
        self.ones = np.ones((16, 16, 3))

    def test_ssim_identical(self):
        """Test identical images have SSIM 1"""
        img = self.rng.random((20, 20, 3))
        assert abs(ssim(img, img) - 1.0) < 1e-12

    def test_ssim_constant_images(self):
        """Test constant 0 vs constant 1 gives C1 / (1 + C1)"""
        c1 = SSIM_K1 ** 2
        assert abs(ssim(self.zeros, self.ones) - c1 / (1 + c1)) < 1e-12

    def test_ssim_matches_brute_force(self):
        """Test SSIM against the per-window oracle on 20 random pairs"""
        for _ in range(20):
            a = self.rng.random((14, 15, 3))
            b = np.clip(a + 0.2 * self.rng.standard_normal(a.shape), 0, 1)
            assert abs(ssim(a, b) - brute_force_ssim(a, b)) < 1e-6

    def test_ssim_small_images(self):
        """Test 8-10 px images use the largest odd window that fits"""
        assert [ssim_window_size(h, w) for h, w in [(8, 8), (9, 30), (10, 12), (11, 11), (64, 40)]] == [7, 9, 9, 11, 11]
        for shape, size in [((8, 8, 3), 7), ((9, 10, 3), 9), ((10, 10, 3), 9)]:
            a, b = self.rng.random(shape), self.rng.random(shape)
            assert abs(ssim(a, a) - 1.0) < 1e-12
            assert abs(ssim(a, b) - brute_force_ssim(a, b, size)) < 1e-6

    def test_ssim_symmetric_and_bounded(self):
        """Test SSIM is symmetric and never exceeds 1"""
        for _ in range(5):
            a, b = self.rng.random((16, 16, 3)), self.rng.random((16, 16, 3))
            assert abs(ssim(a, b) - ssim(b, a)) < 1e-12
            assert ssim(a, b) < 1.0

    def test_psnr_values(self):
        """Test the inf sentinel and the 0 vs 0.5 value"""
        assert psnr(self.halves, self.halves) == math.inf
        assert abs(psnr(self.zeros, self.halves) - 6.0206) < 1e-4

    def test_psnr_matches_formula(self):
        """Test PSNR against 10 log10(1 / MSE) on 20 random pairs"""
        for _ in range(20):
            a, b = self.rng.random((9, 11, 3)), self.rng.random((9, 11, 3))
            expected = 10 * math.log10(1.0 / np.mean((a - b) ** 2))
            assert abs(psnr(a, b) - expected) < 1e-9
            assert abs(psnr(a, b) - psnr(b, a)) < 1e-12

    def test_mae_values(self):
        """Test MAE on the 0-255 scale"""
        assert mae(self.halves, self.halves) == 0.0
        assert abs(mae(self.zeros, self.halves) - 127.5) < 1e-9
        for _ in range(20):
            a, b = self.rng.random((9, 11, 3)), self.rng.random((9, 11, 3))
            assert abs(mae(a, b) - np.mean(np.abs(a - b)) * 255) < 1e-9
            assert abs(mae(a, b) - mae(b, a)) < 1e-12

    def test_shape_mismatch(self):
        """Test every metric rejects mismatched shapes"""
        for metric in (ssim, psnr, mae):
            with pytest.raises(StructuralError):
                metric(self.zeros, np.zeros((16, 15, 3)))


class TestTrainingLoss:
    """Test suite for MSE + 0.4 (1 - SSIM)"""

    @pytest.fixture(autouse=True)
    def setup_method(self):
        """Set up test environment before each test"""
        self.generator = torch.Generator().manual_seed(52)

    def test_zero_for_equal_inputs(self):
        """Test the loss vanishes when prediction equals target"""
        x = torch.rand(1, 3, 16, 16, generator=self.generator, dtype=torch.float64)
        assert abs(loss_total(x, x.clone()).item()) < 1e-12

    def test_constant_pair(self):
        """Test constant 0 vs 0.5 gives 0.25 + 0.4 (1 - SSIM)"""
        zeros = torch.zeros(1, 3, 16, 16, dtype=torch.float64)
        halves = torch.full((1, 3, 16, 16), 0.5, dtype=torch.float64)
        c1 = SSIM_K1 ** 2
        expected_ssim = c1 / (0.25 + c1)
        assert abs(loss_total(zeros, halves).item() - (0.25 + 0.4 * (1 - expected_ssim))) < 1e-10

    def test_composition(self):
        """Test the loss equals mse + 0.4 (1 - ssim) from the separate operations"""
        for _ in range(10):
            pred = torch.rand(2, 3, 16, 16, generator=self.generator, dtype=torch.float64)
            gt = torch.rand(2, 3, 16, 16, generator=self.generator, dtype=torch.float64)
            expected = mse_tensor(pred, gt) + 0.4 * (1 - ssim_tensor(pred, gt))
            assert abs(loss_total(pred, gt).item() - expected.item()) < 1e-8
            assert loss_total(pred, gt).item() > 0

    def test_gradient_matches_finite_differences(self):
        """Test the loss gradient with respect to the prediction"""
        pred = torch.rand(1, 3, 12, 12, generator=self.generator, dtype=torch.float64, requires_grad=True)
        gt = torch.rand(1, 3, 12, 12, generator=self.generator, dtype=torch.float64)
        assert torch.autograd.gradcheck(lambda p: loss_total(p, gt), (pred,), eps=1e-6, atol=1e-6, rtol=1e-3)

    def test_shape_mismatch(self):
        """Test mismatched shapes are rejected"""
        with pytest.raises(StructuralError):
            loss_total(torch.zeros(1, 3, 16, 16), torch.zeros(1, 3, 16, 17))
