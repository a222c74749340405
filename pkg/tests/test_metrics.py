import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from artifact_forge.errors import DimensionMismatch
from artifact_forge.metrics import l1, mse, psnr, ssim
from oracles import naive_ssim


def _checker(n=16, cell=1):
    y, x = np.mgrid[:n, :n]
    return (((x // cell) + (y // cell)) % 2).astype(np.float64)


def test_identity_values():
    x = np.random.default_rng(0).random((20, 20, 3))
    assert abs(ssim(x, x) - 1.0) < 1e-12
    assert l1(x, x) == 0.0
    assert psnr(x, x) == np.inf


def test_uniform_difference_gives_20db():
    a = np.full((8, 8, 3), 0.3)
    assert abs(mse(a, a + 0.1) - 0.01) < 1e-15
    assert abs(psnr(a, a + 0.1) - 20.0) < 1e-9
    assert abs(l1(a, a + 0.1) - 0.1) < 1e-15


def test_checkerboard_inverse_is_anticorrelated():
    c = _checker(16, 2)
    assert ssim(c, 1 - c) < 0


def test_matches_naive_ssim():
    rng = np.random.default_rng(1)
    a = rng.random((14, 15, 3))
    b = np.clip(a + 0.1 * rng.standard_normal(a.shape), 0, 1)
    assert abs(ssim(a, b) - naive_ssim(a, b)) < 1e-12
    g = rng.random((13, 13))
    assert abs(ssim(g, g ** 2) - naive_ssim(g, g ** 2)) < 1e-12


def test_small_images_shrink_the_window():
    rng = np.random.default_rng(2)
    a, b = rng.random((6, 8, 3)), rng.random((6, 8, 3))
    assert abs(ssim(a, b) - naive_ssim(a, b, size=5)) < 1e-12


def test_batched_and_broadcast():
    rng = np.random.default_rng(3)
    batch = rng.random((4, 12, 12, 3))
    target = rng.random((12, 12, 3))
    got = ssim(batch, target)
    assert got.shape == (4,)
    np.testing.assert_allclose(got, [ssim(b, target) for b in batch], atol=1e-14)
    np.testing.assert_allclose(l1(batch, target), [l1(b, target) for b in batch])
    np.testing.assert_allclose(psnr(batch, target), [psnr(b, target) for b in batch])


def test_dimension_mismatch():
    with pytest.raises(DimensionMismatch):
        l1(np.zeros((4, 4, 3)), np.zeros((4, 5, 3)))
    with pytest.raises(DimensionMismatch):
        ssim(np.zeros((12, 12)), np.zeros((12, 13)))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000))
def test_ssim_symmetric_and_bounded(seed):
    rng = np.random.default_rng(seed)
    a, b = rng.random((12, 12, 3)), rng.random((12, 12, 3))
    s = ssim(a, b)
    assert abs(s - ssim(b, a)) < 1e-9
    assert -1.0 <= s <= 1.0


def test_psnr_decreases_with_noise_amplitude():
    rng = np.random.default_rng(4)
    a = rng.random((16, 16, 3)) * 0.5 + 0.25
    noise = rng.uniform(-1, 1, a.shape)
    values = [psnr(a, a + amp * noise) for amp in (0.01, 0.02, 0.05, 0.1, 0.2)]
    assert all(x > y for x, y in zip(values, values[1:]))
