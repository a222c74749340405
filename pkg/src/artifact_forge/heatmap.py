"""Pseudo ground-truth artifact heatmaps from (degraded, clean) video pairs.

The perceptual metric is pluggable: anything with ``name`` and
``compute(a, b) -> (H, W)`` map works, e.g. an LPIPS adapter.  The default is
:class:`ProxyDiscrepancy`, a network-free stand-in built from multi-scale
intensity differences and gradient-magnitude differences.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Protocol, runtime_checkable

import numpy as np
from scipy import ndimage

from .errors import DimensionMismatch, LengthMismatch
from .images import write_png

LUMA = np.array([0.299, 0.587, 0.114])


@runtime_checkable
class PerceptualMetric(Protocol):
    name: str

    def compute(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        ...


def _block_mean(img, s):
    h, w = img.shape[:2]
    hh, ww = -(-h // s) * s, -(-w // s) * s
    pad = [(0, hh - h), (0, ww - w)] + [(0, 0)] * (img.ndim - 2)
    p = np.pad(img, pad, mode="edge")
    return p.reshape(hh // s, s, ww // s, s, *img.shape[2:]).mean(axis=(1, 3))


def _upsample(img, s, shape):
    return np.repeat(np.repeat(img, s, axis=0), s, axis=1)[: shape[0], : shape[1]]


class ProxyDiscrepancy:
    """Blend of multi-scale absolute colour difference and gradient-magnitude difference.

    Output lies in [0, 1] and is exactly zero everywhere iff the images are
    identical.
    """

    name = "proxy"

    def __init__(self, scales=(1, 2, 4), intensity_weight=0.6, gradient_weight=0.4, smooth_sigma=1.0):
        self.scales = tuple(scales)
        self.intensity_weight = intensity_weight
        self.gradient_weight = gradient_weight
        self.smooth_sigma = smooth_sigma

    def compute(self, a, b):
        a = np.asarray(a, dtype=np.float64)
        b = np.asarray(b, dtype=np.float64)
        if a.shape != b.shape:
            raise DimensionMismatch(f"image shapes differ: {a.shape} vs {b.shape}")
        if a.ndim == 2:
            a, b = a[..., None], b[..., None]
        shape = a.shape[:2]
        diff = np.abs(a - b).mean(axis=-1)
        intensity = np.mean([_upsample(_block_mean(diff, s), s, shape) for s in self.scales], axis=0)
        ya = a @ LUMA if a.shape[-1] == 3 else a[..., 0]
        yb = b @ LUMA if b.shape[-1] == 3 else b[..., 0]
        grad = np.abs(np.hypot(*np.gradient(ya)) - np.hypot(*np.gradient(yb)))
        raw = self.intensity_weight * intensity + self.gradient_weight * np.minimum(grad, 1.0)
        if self.smooth_sigma:
            raw = ndimage.gaussian_filter(raw, self.smooth_sigma, mode="nearest")
        return np.clip(raw, 0.0, 1.0)


def proxy_discrepancy(a, b) -> np.ndarray:
    return ProxyDiscrepancy().compute(a, b)


def annotate(degraded, clean, metric: PerceptualMetric | None = None) -> np.ndarray:
    """Per-frame metric maps, min-max normalised over the clip, boundary frames zeroed.

    Returns a ``(T, H, W)`` volume in [0, 1].
    """
    metric = metric or ProxyDiscrepancy()
    degraded = np.asarray(degraded, dtype=np.float64)
    clean = np.asarray(clean, dtype=np.float64)
    if len(degraded) != len(clean):
        raise LengthMismatch(f"{len(degraded)} degraded frames vs {len(clean)} clean frames")
    if degraded.shape != clean.shape:
        raise DimensionMismatch(f"frame shapes differ: {degraded.shape[1:]} vs {clean.shape[1:]}")
    maps = np.stack([np.asarray(metric.compute(d, c), dtype=np.float64) for d, c in zip(degraded, clean)])
    lo, hi = maps.min(), maps.max()
    vol = (maps - lo) / (hi - lo) if hi > lo else np.zeros_like(maps)
    vol = np.clip(vol, 0.0, 1.0)
    if len(vol):
        vol[0] = 0.0
        vol[-1] = 0.0
    return vol


def write_heatmaps(directory, volume, metric_name: str = "proxy", extra: dict | None = None) -> Path:
    """One 8-bit grayscale PNG per frame plus ``manifest.json``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    names = []
    for i, frame in enumerate(volume):
        name = f"heatmap_{i:05d}.png"
        write_png(directory / name, frame)
        names.append(name)
    manifest = {
        "metric": metric_name,
        "n_frames": len(names),
        "height": int(volume.shape[1]) if len(names) else 0,
        "width": int(volume.shape[2]) if len(names) else 0,
        "normalization": "per-clip min-max",
        "boundary_frames_zeroed": True,
        "frames": names,
        "frame_means": [round(float(f.mean()), 8) for f in volume],
    }
    if extra:
        manifest.update(extra)
    path = directory / "manifest.json"
    path.write_text(json.dumps(manifest, indent=1, sort_keys=True))
    return path
