"""
DeVigNet Backend Tests - Laplacian Pyramid
Kernel oracles, exact reconstruction and divisibility contracts
"""

import pytest
import torch

from network.pyramid import (
    PyramidDecomposition, binomial_kernel, decompose, gaussian_downsample, reconstruct, upsample,
)
from utils.errors import StructuralError


class TestPyramidKernels:
    """Test suite for the binomial down/upsampling kernels"""

    @pytest.fixture(autouse=True)
    def setup_method(self):
        """Set up test environment before each test"""
        torch.manual_seed(0)

    def test_kernel_sums_to_gain(self):
        """Test the 5x5 kernel is normalized and scales with gain"""
        k = binomial_kernel(1, torch.float64, torch.device("cpu"))
        assert k.shape == (1, 1, 5, 5)
        assert abs(k.sum().item() - 1.0) < 1e-12
        assert abs(binomial_kernel(1, torch.float64, torch.device("cpu"), gain=4.0).sum().item() - 4.0) < 1e-12
        assert abs(k[0, 0, 2, 2].item() - 36.0 / 256.0) < 1e-12

    def test_downsample_constant(self):
        """Test a constant image stays constant and halves in size"""
        x = torch.full((1, 3, 8, 8), 0.3, dtype=torch.float64)
        down = gaussian_downsample(x)
        assert down.shape == (1, 3, 4, 4)
        assert torch.allclose(down, torch.full_like(down, 0.3), atol=1e-12)

    def test_downsample_checkerboard(self):
        """Test the binomial kernel averages a +/-1 checkerboard to zero in the interior"""
        ys, xs = torch.meshgrid(torch.arange(16), torch.arange(16), indexing="ij")
        board = ((ys + xs) % 2 * 2 - 1).to(torch.float64).view(1, 1, 16, 16)
        down = gaussian_downsample(board)
        # [1,4,6,4,1] alternating sum is zero, so interior samples vanish
        assert torch.allclose(down[..., 1:-1, 1:-1], torch.zeros(1, 1, 6, 6, dtype=torch.float64), atol=1e-12)

    def test_downsample_binary_checkerboard(self):
        """Test an 8x8 {0,1} checkerboard becomes an all-0.5 4x4 map, borders included"""
        ys, xs = torch.meshgrid(torch.arange(8), torch.arange(8), indexing="ij")
        board = ((ys + xs) % 2).to(torch.float64).view(1, 1, 8, 8)
        down = gaussian_downsample(board)
        assert down.shape == (1, 1, 4, 4)
        assert torch.allclose(down, torch.full_like(down, 0.5), atol=1e-12)

    def test_downsample_impulse(self):
        """Test a centered impulse in 16x16 keeps the even taps of the binomial outer product"""
        x = torch.zeros(1, 1, 16, 16, dtype=torch.float64)
        x[..., 8, 8] = 1.0
        down = gaussian_downsample(x)
        taps = torch.tensor([1.0, 6.0, 1.0], dtype=torch.float64) / 16.0
        expected = torch.zeros(8, 8, dtype=torch.float64)
        expected[3:6, 3:6] = torch.outer(taps, taps)
        assert torch.allclose(down[0, 0], expected, atol=1e-12)

    def test_upsample_impulse(self):
        """Test upsampling a centered impulse reproduces 4x the binomial kernel"""
        x = torch.zeros(1, 1, 8, 8, dtype=torch.float64)
        x[..., 4, 4] = 1.0
        up = upsample(x)
        assert up.shape == (1, 1, 16, 16)
        expected = binomial_kernel(1, torch.float64, torch.device("cpu"), gain=4.0)[0, 0]
        assert torch.allclose(up[0, 0, 6:11, 6:11], expected, atol=1e-12)
        assert abs(up.sum().item() - 4.0) < 1e-12

    def test_upsample_constant(self):
        """Test upsampling keeps constants constant"""
        x = torch.full((2, 3, 4, 6), 0.7, dtype=torch.float64)
        up = upsample(x)
        assert up.shape == (2, 3, 8, 12)
        assert torch.allclose(up, torch.full_like(up, 0.7), atol=1e-12)

    def test_odd_size_rejected(self):
        """Test downsampling an odd-sized tensor is a structural error"""
        with pytest.raises(StructuralError):
            gaussian_downsample(torch.zeros(1, 3, 9, 8))


class TestPyramidDecomposition:
    """Test suite for decompose / reconstruct"""

    @pytest.fixture(autouse=True)
    def setup_method(self):
        """Set up test environment before each test"""
        self.generator = torch.Generator().manual_seed(1234)

    def test_exact_reconstruction_random_images(self):
        """Test 100 random images reconstruct within 1e-5 at depths 1-4"""
        for i in range(100):
            depth = 1 + i % 4
            size = 2 ** depth * 4
            img = torch.rand(1, 3, size, size + 2 ** depth * 2, generator=self.generator)
            pyr = decompose(img, depth)
            assert pyr.depth == depth
            assert (reconstruct(pyr) - img).abs().max().item() < 1e-5

    def test_level_shapes(self):
        """Test each high level halves the previous one"""
        img = torch.rand(1, 3, 64, 32, generator=self.generator)
        pyr = decompose(img, 3)
        assert [tuple(h.shape[-2:]) for h in pyr.highs] == [(64, 32), (32, 16), (16, 8)]
        assert tuple(pyr.low.shape[-2:]) == (8, 4)

    def test_constant_image_has_zero_highs(self):
        """Test constant images give exactly-zero high-frequency levels"""
        img = torch.full((1, 3, 32, 32), 0.42)
        pyr = decompose(img, 3)
        for high in pyr.highs:
            assert high.abs().max().item() < 1e-6
        assert torch.allclose(pyr.low, torch.full_like(pyr.low, 0.42), atol=1e-6)

    def test_linearity(self):
        """Test decompose(a x + b y) equals a decompose(x) + b decompose(y)"""
        x = torch.rand(1, 3, 32, 32, generator=self.generator, dtype=torch.float64)
        y = torch.rand(1, 3, 32, 32, generator=self.generator, dtype=torch.float64)
        combined = decompose(0.3 * x + 1.7 * y, 2)
        px, py = decompose(x, 2), decompose(y, 2)
        for k in range(2):
            assert torch.allclose(combined.highs[k], 0.3 * px.highs[k] + 1.7 * py.highs[k], atol=1e-12)
        assert torch.allclose(combined.low, 0.3 * px.low + 1.7 * py.low, atol=1e-12)

    def test_indivisible_size_names_multiple(self):
        """Test a size that is not a multiple of 2^depth is rejected with the multiple"""
        with pytest.raises(StructuralError, match="multiples of 8"):
            decompose(torch.zeros(1, 3, 36, 32), 3)

    def test_depth_must_be_positive(self):
        """Test depth 0 is rejected"""
        with pytest.raises(StructuralError):
            decompose(torch.zeros(1, 3, 16, 16), 0)

    def test_reconstruct_rejects_mismatched_levels(self):
        """Test reconstruction checks level shapes"""
        pyr = PyramidDecomposition(highs=[torch.zeros(1, 3, 16, 16)], low=torch.zeros(1, 3, 4, 4))
        with pytest.raises(StructuralError):
            reconstruct(pyr)
