"""Explicit parameter perturbations that turn a clean cloud into an artifact-ridden one.

Five executable perturbations are provided (scale compression, random
dropout, SH colour noise, opacity compression and resolution aliasing).  Each
is a pure function; :func:`compose` applies them independently at random and
reports which taxonomy labels the result should carry.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .gaussians import GaussianCloud, PinholeCamera, logit, sigmoid
from .render import RenderSettings, render

OPACITY_CLAMP = 1e-6


class ArtifactLabel(str, Enum):
    """The nine phenomenological artifact categories."""

    FLOATERS = "Floaters"
    DILATION = "Dilation"
    NEEDLES = "Needles"
    CRACKS = "Cracks"
    ALIASING = "Aliasing"
    BLURRING = "Blurring"
    POPPING = "Popping"
    GHOSTING = "Ghosting"
    COLOR_OUTLIERS = "Color Outliers"


class Perturbation(str, Enum):
    SCALE_COMPRESSION = "ScaleCompression"
    RANDOM_DROPOUT = "RandomDropout"
    COLOR_NOISE = "ColorNoise"
    OPACITY_COMPRESSION = "OpacityCompression"
    ALIASING = "Aliasing"


# opacity compression deliberately maps to no label: it fades, it does not ghost
PERTURBATION_LABELS = {
    Perturbation.SCALE_COMPRESSION: (ArtifactLabel.CRACKS, ArtifactLabel.NEEDLES),
    Perturbation.RANDOM_DROPOUT: (ArtifactLabel.DILATION, ArtifactLabel.BLURRING),
    Perturbation.COLOR_NOISE: (ArtifactLabel.COLOR_OUTLIERS,),
    Perturbation.OPACITY_COMPRESSION: (),
    Perturbation.ALIASING: (ArtifactLabel.ALIASING,),
}

DEFAULT_ORDER = (
    Perturbation.RANDOM_DROPOUT,
    Perturbation.SCALE_COMPRESSION,
    Perturbation.COLOR_NOISE,
    Perturbation.OPACITY_COMPRESSION,
)

CHECKPOINT_ITERATIONS = (1500, 2000, 3000, 4000, 5000, 7000, 12000)


@dataclass(frozen=True)
class DegradeConfig:
    per_kind_probability: float = 0.06
    scale_delta: float = 0.5
    dropout_keep: float = 0.8
    sh_dc_sigma: float = 0.1
    sh_rest_sigma: float = 0.05
    opacity_factor: float = 0.8
    alias_factor: int = 2
    seed: int = 0
    order: tuple = DEFAULT_ORDER
    checkpoint_iterations: tuple = CHECKPOINT_ITERATIONS
    # per-kind overrides of per_kind_probability, keyed by Perturbation value
    probabilities: dict = field(default_factory=dict)

    def __post_init__(self):
        probs = [self.per_kind_probability, *self.probabilities.values()]
        if any(not 0.0 <= p <= 1.0 for p in probs):
            raise ValueError("probabilities must lie in [0, 1]")
        if not 0.0 < self.dropout_keep <= 1.0:
            raise ValueError("dropout_keep must lie in (0, 1]")
        if self.sh_dc_sigma < 0 or self.sh_rest_sigma < 0:
            raise ValueError("SH noise sigmas must be non-negative")
        if not 0.0 < self.opacity_factor <= 1.0:
            raise ValueError("opacity_factor must lie in (0, 1]")
        if int(self.alias_factor) != self.alias_factor or self.alias_factor < 1:
            raise ValueError("alias_factor must be an integer >= 1")
        order = tuple(Perturbation(k) for k in self.order)
        if sorted(order) != sorted(DEFAULT_ORDER):
            raise ValueError("order must be a permutation of the four cloud perturbations")
        object.__setattr__(self, "order", order)

    def probability(self, kind: Perturbation) -> float:
        return float(self.probabilities.get(kind.value, self.per_kind_probability))


def compress_scales(cloud: GaussianCloud, delta: float = 0.5) -> GaussianCloud:
    """Shrink every splat by subtracting ``delta`` from its log-scales."""
    return cloud.replace(log_scales=cloud.log_scales - np.float32(delta))


def dropout(cloud: GaussianCloud, keep_fraction: float = 0.8, seed=0) -> GaussianCloud:
    """Keep ``floor(keep_fraction * N)`` splats chosen uniformly, preserving order."""
    if not 0.0 < keep_fraction <= 1.0:
        raise ValueError("keep_fraction must lie in (0, 1]")
    n = cloud.n
    # tolerance absorbs representation error such as 0.7 * 10 = 7.000000000000001
    n_keep = min(n, math.floor(keep_fraction * n + 1e-9))
    if n_keep == n:
        return cloud
    rng = np.random.default_rng(seed)
    keep = np.sort(rng.choice(n, size=n_keep, replace=False))
    return cloud.subset(keep)


def sh_noise(cloud: GaussianCloud, dc_sigma: float = 0.1, rest_sigma: float = 0.05, seed=0) -> GaussianCloud:
    """Add i.i.d. Gaussian noise to SH coefficients (DC and higher orders separately)."""
    if dc_sigma < 0 or rest_sigma < 0:
        raise ValueError("sigmas must be non-negative")
    rng = np.random.default_rng(seed)
    sh = cloud.sh_coeffs.copy()
    dc_noise = rng.standard_normal(sh[:, :, 0].shape)
    rest_noise = rng.standard_normal(sh[:, :, 1:].shape)
    if dc_sigma:
        sh[:, :, 0] = sh[:, :, 0] + (dc_sigma * dc_noise).astype(np.float32)
    if rest_sigma:
        sh[:, :, 1:] = sh[:, :, 1:] + (rest_sigma * rest_noise).astype(np.float32)
    return cloud.replace(sh_coeffs=sh)


def compress_opacity(cloud: GaussianCloud, factor: float = 0.8) -> GaussianCloud:
    """Scale activated opacity by ``factor`` and store the result back as a logit."""
    if not 0.0 < factor <= 1.0:
        raise ValueError("factor must lie in (0, 1]")
    opac = np.clip(sigmoid(cloud.opacity_logits) * factor, OPACITY_CLAMP, 1.0 - OPACITY_CLAMP)
    return cloud.replace(opacity_logits=logit(opac).astype(np.float32))


def upsample_nearest(img, factor: int, shape=None):
    up = np.repeat(np.repeat(img, factor, axis=0), factor, axis=1)
    if shape is not None:
        h, w = shape
        pad_h, pad_w = max(0, h - up.shape[0]), max(0, w - up.shape[1])
        if pad_h or pad_w:
            up = np.pad(up, ((0, pad_h), (0, pad_w), (0, 0)), mode="edge")
        up = up[:h, :w]
    return up


def alias_render(cloud: GaussianCloud, cam: PinholeCamera, factor: int = 2,
                 settings: RenderSettings | None = None) -> np.ndarray:
    """Render at ``1/factor`` resolution, then blow back up with nearest neighbour."""
    if factor < 1:
        raise ValueError("factor must be >= 1")
    if factor == 1:
        return render(cloud, cam, settings)
    small = render(cloud, cam.scaled(factor), settings)
    return upsample_nearest(small, factor, (cam.height, cam.width))


@dataclass
class Degradation:
    cloud: GaussianCloud
    applied: list
    labels: list
    checkpoint_iteration: int
    video: np.ndarray | None = None

    def report(self) -> dict:
        return {
            "applied_kinds": [k.value for k in self.applied],
            "labels": [lab.value for lab in self.labels],
            "checkpoint_iteration": self.checkpoint_iteration,
            "n_gaussians": self.cloud.n,
        }


def sample_kinds(config: DegradeConfig, rng: np.random.Generator) -> list:
    """Draw the independent per-kind coin flips, in canonical enum order."""
    draws = rng.random(len(Perturbation))
    return [k for k, u in zip(Perturbation, draws) if u < config.probability(k)]


def labels_for(kinds) -> list:
    seen = []
    for kind in kinds:
        for lab in PERTURBATION_LABELS[Perturbation(kind)]:
            if lab not in seen:
                seen.append(lab)
    return seen


def compose(cloud: GaussianCloud, cameras=None, config: DegradeConfig | None = None,
            settings: RenderSettings | None = None) -> Degradation:
    """Apply each perturbation independently with its configured probability.

    ``cameras`` may be a single camera or a sequence; when given, the degraded
    video is rendered too (with aliasing if it was drawn).  Aliasing never
    changes the cloud itself.
    """
    config = config or DegradeConfig()
    rng = np.random.default_rng(config.seed)
    applied = sample_kinds(config, rng)
    iteration = int(rng.choice(config.checkpoint_iterations))
    sub_seeds = rng.integers(0, 2**63, size=len(Perturbation))
    seed_of = dict(zip(Perturbation, (int(s) for s in sub_seeds)))

    out = cloud
    for kind in config.order:
        if kind not in applied:
            continue
        if kind is Perturbation.RANDOM_DROPOUT:
            out = dropout(out, config.dropout_keep, seed_of[kind])
        elif kind is Perturbation.SCALE_COMPRESSION:
            out = compress_scales(out, config.scale_delta)
        elif kind is Perturbation.COLOR_NOISE:
            out = sh_noise(out, config.sh_dc_sigma, config.sh_rest_sigma, seed_of[kind])
        elif kind is Perturbation.OPACITY_COMPRESSION:
            out = compress_opacity(out, config.opacity_factor)

    video = None
    if cameras is not None:
        cams = [cameras] if isinstance(cameras, PinholeCamera) else list(cameras)
        factor = int(config.alias_factor) if Perturbation.ALIASING in applied else 1
        video = np.stack([alias_render(out, cam, factor, settings) for cam in cams]) if cams else None
    return Degradation(out, applied, labels_for(applied), iteration, video)
