"""Photometric metrics for images in [0, 1]: L1, MSE, PSNR and SSIM.

All functions accept ``(H, W)`` or ``(H, W, C)`` images and also arbitrary
leading batch axes, in which case they return one value per batch element.
"""

from __future__ import annotations

import numpy as np

from .errors import DimensionMismatch

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


def _pair(a, b):
    # equal shapes, or one operand is a batch of images shaped like the other
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    k = min(a.ndim, b.ndim)
    if a.shape[a.ndim - k:] != b.shape[b.ndim - k:]:
        raise DimensionMismatch(f"image shapes differ: {a.shape} vs {b.shape}")
    return a, b


def _scalar(x):
    return float(x) if np.ndim(x) == 0 else x


def l1(a, b, image_ndim: int = 3):
    a, b = _pair(a, b)
    axes = tuple(range(-min(image_ndim, a.ndim), 0))
    return _scalar(np.mean(np.abs(a - b), axis=axes))


def mse(a, b, image_ndim: int = 3):
    a, b = _pair(a, b)
    axes = tuple(range(-min(image_ndim, a.ndim), 0))
    return _scalar(np.mean((a - b) ** 2, axis=axes))


def psnr(a, b, data_range: float = 1.0, image_ndim: int = 3):
    """Peak signal-to-noise ratio in dB; identical images give ``inf``."""
    err = np.asarray(mse(a, b, image_ndim))
    with np.errstate(divide="ignore"):
        out = np.where(err > 0, 10.0 * np.log10(data_range**2 / np.where(err > 0, err, 1.0)), np.inf)
    return _scalar(out)


def gaussian_window(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    x = np.arange(size) - (size - 1) / 2
    g = np.exp(-(x**2) / (2 * sigma**2))
    return g / g.sum()


def _filter_valid(x, g):
    # separable 'valid' correlation over the H and W axes of (..., H, W, C):
    # one flat product for H, then a batched one for W
    h, w, c = x.shape[-3:]
    gh, gw = _band(g, h), _band(g, w)
    y = (gh @ x.reshape((-1, h, w * c))).reshape((-1, gh.shape[0], w, c))
    y = np.matmul(gw, y)
    return y.reshape(x.shape[:-3] + y.shape[1:])


def _band(g, size):
    # (size - n + 1, size) matrix whose rows are the shifted window
    n = g.size
    m = np.zeros((size - n + 1, size))
    for i in range(size - n + 1):
        m[i, i:i + n] = g
    return m


def ssim(a, b, data_range: float = 1.0, color: bool | None = None):
    """Mean structural similarity (Gaussian 11x11 window, sigma 1.5, 'valid' region).

    Colour images are handled per channel and averaged.  Images smaller than
    the window use the largest odd window that fits.
    """
    a, b = _pair(a, b)
    if color is None:
        color = a.ndim >= 3 and a.shape[-1] in (1, 3, 4)
    if not color:
        a, b = a[..., None], b[..., None]
    h, w = a.shape[-3], a.shape[-2]
    size = min(SSIM_WINDOW, h, w)
    if size % 2 == 0:
        size -= 1
    g = gaussian_window(size, SSIM_SIGMA)
    c1 = (SSIM_K1 * data_range) ** 2
    c2 = (SSIM_K2 * data_range) ** 2
    # statistics of an unbatched operand are filtered once and broadcast
    mu_a, aa = _filter_valid(np.stack([a, a * a]), g)
    mu_b, bb = _filter_valid(np.stack([b, b * b]), g)
    ab = _filter_valid(a * b, g)
    var_a = aa - mu_a**2
    var_b = bb - mu_b**2
    cov = ab - mu_a * mu_b
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a**2 + mu_b**2 + c1) * (var_a + var_b + c2)
    return _scalar(np.mean(num / den, axis=(-3, -2, -1)))
