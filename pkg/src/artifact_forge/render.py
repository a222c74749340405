"""CPU forward splatting of a :class:`GaussianCloud` (EWA projection + front-to-back compositing).

No anti-aliasing low-pass filter is applied unless ``RenderSettings.lowpass``
is set, so shrunken splats alias exactly the way an unfiltered rasterizer
does.  Splats are sorted by camera-space depth with ties broken by index.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .gaussians import GaussianCloud, PinholeCamera, quat_to_matrix, sigmoid

SH_C0 = 0.28209479177387814
SH_C1 = 0.4886025119029199
SH_C2 = (1.0925484305920792, -1.0925484305920792, 0.31539156525252005, -1.0925484305920792, 0.5462742152960396)
SH_C3 = (-0.5900435899266435, 2.890611442640554, -0.4570457994644658, 0.3731763325901154,
         -0.4570457994644658, 1.445305721320277, -0.5900435899266435)


@dataclass(frozen=True)
class RenderSettings:
    background: tuple = (0.0, 0.0, 0.0)
    alpha_cutoff: float = 1.0 / 255.0
    radius_sigma: float = 3.0
    max_alpha: float = 0.99
    # optional diagonal floor (px^2) on the 2D covariance, off by default
    lowpass: float = 0.0

    def __post_init__(self):
        if not 0.0 < self.alpha_cutoff < 1.0:
            raise ValueError("alpha_cutoff must lie in (0, 1)")
        if self.radius_sigma <= 0:
            raise ValueError("radius_sigma must be positive")
        bg = np.asarray(self.background, dtype=np.float64)
        if bg.shape != (3,) or np.any(bg < 0) or np.any(bg > 1):
            raise ValueError("background must be an RGB triple in [0, 1]")


class Projection(NamedTuple):
    mean2d: np.ndarray
    cov2d: np.ndarray
    depth: np.ndarray
    visible: np.ndarray


class RenderResult(NamedTuple):
    image: np.ndarray
    weight_sum: np.ndarray
    transmittance: np.ndarray


def eval_sh(sh, dirs):
    """RGB from SH coefficients ``(..., 3, B)`` along unit directions ``(..., 3)``."""
    b = sh.shape[-1]
    x, y, z = (dirs[..., i:i + 1] for i in range(3))
    out = SH_C0 * sh[..., 0]
    if b > 1:
        out = out - SH_C1 * y * sh[..., 1] + SH_C1 * z * sh[..., 2] - SH_C1 * x * sh[..., 3]
    if b > 4:
        xx, yy, zz = x * x, y * y, z * z
        out = (out + SH_C2[0] * x * y * sh[..., 4] + SH_C2[1] * y * z * sh[..., 5]
               + SH_C2[2] * (2 * zz - xx - yy) * sh[..., 6] + SH_C2[3] * x * z * sh[..., 7]
               + SH_C2[4] * (xx - yy) * sh[..., 8])
    if b > 9:
        out = (out + SH_C3[0] * y * (3 * xx - yy) * sh[..., 9] + SH_C3[1] * x * y * z * sh[..., 10]
               + SH_C3[2] * y * (4 * zz - xx - yy) * sh[..., 11]
               + SH_C3[3] * z * (2 * zz - 3 * xx - 3 * yy) * sh[..., 12]
               + SH_C3[4] * x * (4 * zz - xx - yy) * sh[..., 13] + SH_C3[5] * z * (xx - yy) * sh[..., 14]
               + SH_C3[6] * x * (xx - 3 * yy) * sh[..., 15])
    return out + 0.5


def project_params(positions, log_scales, rotations, cam: PinholeCamera, lowpass: float = 0.0) -> Projection:
    """EWA projection of arrays with arbitrary leading batch dimensions ``(..., N, k)``."""
    p = np.asarray(positions, dtype=np.float64)
    pc = (p - cam.center) @ cam.rotation.T
    z = pc[..., 2]
    visible = z > 0
    zs = np.where(visible, z, 1.0)
    x, y = pc[..., 0], pc[..., 1]
    mean2d = np.stack([cam.fx * x / zs + cam.cx, cam.fy * y / zs + cam.cy], axis=-1)

    scales = np.exp(np.asarray(log_scales, dtype=np.float64))
    m = quat_to_matrix(rotations) * scales[..., None, :]
    cov_world = m @ np.swapaxes(m, -1, -2)
    cov_cam = cam.rotation @ cov_world @ cam.rotation.T
    zero = np.zeros_like(zs)
    jac = np.stack([
        np.stack([cam.fx / zs, zero, -cam.fx * x / zs**2], -1),
        np.stack([zero, cam.fy / zs, -cam.fy * y / zs**2], -1),
    ], -2)
    cov2d = jac @ cov_cam @ np.swapaxes(jac, -1, -2)
    cov2d = 0.5 * (cov2d + np.swapaxes(cov2d, -1, -2))
    if lowpass:
        cov2d = cov2d + lowpass * np.eye(2)
    return Projection(mean2d, cov2d, z, visible)


def project(index: int, cloud: GaussianCloud, cam: PinholeCamera, lowpass: float = 0.0):
    """Project one Gaussian; returns ``None`` when it is behind the camera."""
    pr = project_params(cloud.positions[index:index + 1], cloud.log_scales[index:index + 1],
                        cloud.rotations[index:index + 1], cam, lowpass)
    if not pr.visible[0]:
        return None
    return {"mean2d": pr.mean2d[0], "cov2d": pr.cov2d[0], "depth": float(pr.depth[0])}


def _splat_terms(positions, log_scales, rotations, opacity_logits, sh, cam, settings):
    """Per-splat screen-space quantities shared by both rasterization paths."""
    pr = project_params(positions, log_scales, rotations, cam, settings.lowpass)
    a, b, c = pr.cov2d[..., 0, 0], pr.cov2d[..., 0, 1], pr.cov2d[..., 1, 1]
    det = a * c - b * b
    ok = pr.visible & (det > 0) & (a > 0)
    dets = np.where(ok, det, 1.0)
    conic = np.stack([c / dets, -b / dets, a / dets], axis=-1)
    half_tr = 0.5 * (a + c)
    lam_max = half_tr + np.sqrt(np.maximum(half_tr**2 - det, 0.0))
    radius = settings.radius_sigma * np.sqrt(np.maximum(lam_max, 0.0))
    p = np.asarray(positions, dtype=np.float64)
    dirs = p - cam.center
    dirs = dirs / np.maximum(np.linalg.norm(dirs, axis=-1, keepdims=True), 1e-12)
    colors = np.clip(eval_sh(np.asarray(sh, dtype=np.float64), dirs), 0.0, 1.0)
    opac = sigmoid(opacity_logits)
    return pr, conic, radius, ok, colors, opac


def render(cloud: GaussianCloud, cam: PinholeCamera, settings: RenderSettings | None = None,
           return_stats: bool = False):
    """Render ``cloud`` from ``cam`` into an ``(H, W, 3)`` float image in [0, 1]."""
    settings = settings or RenderSettings()
    h, w = cam.height, cam.width
    bg = np.asarray(settings.background, dtype=np.float64)
    color = np.zeros((h, w, 3))
    trans = np.ones((h, w))
    wsum = np.zeros((h, w))
    if cloud.n:
        pr, conic, radius, ok, colors, opac = _splat_terms(
            cloud.positions, cloud.log_scales, cloud.rotations, cloud.opacity_logits,
            cloud.sh_coeffs, cam, settings)
        order = np.argsort(pr.depth, kind="stable")
        for i in order:
            if not ok[i]:
                continue
            mx, my = pr.mean2d[i]
            r = radius[i]
            x0, x1 = max(int(np.ceil(mx - r)), 0), min(int(np.floor(mx + r)), w - 1)
            y0, y1 = max(int(np.ceil(my - r)), 0), min(int(np.floor(my + r)), h - 1)
            if x0 > x1 or y0 > y1:
                continue
            dx = np.arange(x0, x1 + 1) - mx
            dy = (np.arange(y0, y1 + 1) - my)[:, None]
            ca, cb, cc = conic[i]
            power = -0.5 * (ca * dx * dx + cc * dy * dy) - cb * dx * dy
            alpha = np.minimum(settings.max_alpha, opac[i] * np.exp(np.minimum(power, 0.0)))
            alpha = np.where(alpha >= settings.alpha_cutoff, alpha, 0.0)
            t = trans[y0:y1 + 1, x0:x1 + 1]
            wgt = t * alpha
            color[y0:y1 + 1, x0:x1 + 1] += wgt[..., None] * colors[i]
            wsum[y0:y1 + 1, x0:x1 + 1] += wgt
            trans[y0:y1 + 1, x0:x1 + 1] = t * (1.0 - alpha)
    image = np.clip(color + trans[..., None] * bg, 0.0, 1.0)
    if return_stats:
        return RenderResult(image, wsum, trans)
    return image


def render_batch(positions, log_scales, rotations, opacity_logits, sh, cam: PinholeCamera,
                 settings: RenderSettings | None = None):
    """Dense rasterization of a batch of parameter sets.

    Inputs carry a leading batch axis, e.g. positions ``(B, N, 3)``; returns
    ``(B, H, W, 3)``.  Produces the same images as :func:`render` (up to
    summation order) and is meant for small scenes where evaluating every
    splat at every pixel is cheap.
    """
    settings = settings or RenderSettings()
    pr, conic, radius, ok, colors, opac = _splat_terms(
        positions, log_scales, rotations, opacity_logits, sh, cam, settings)
    nb = pr.depth.shape[0]
    bg = np.asarray(settings.background, dtype=np.float64)
    if pr.depth.shape[1] == 0:
        return np.broadcast_to(bg, (nb, cam.height, cam.width, 3)).copy()
    order = np.argsort(pr.depth, axis=1, kind="stable")

    def take(a):
        idx = order.reshape(order.shape + (1,) * (a.ndim - 2))
        return np.take_along_axis(a, idx, axis=1)

    mean2d, conic, radius, ok, colors, opac = map(take, (pr.mean2d, conic, radius, ok, colors, opac))
    alpha = _alpha_maps(mean2d, conic, radius, ok, opac, cam, settings)
    trans = np.cumprod(1.0 - alpha, axis=1)
    weights = -np.diff(trans, axis=1, prepend=1.0)
    nb_, n, h, w = weights.shape
    image = (np.swapaxes(weights.reshape(nb_, n, h * w), 1, 2) @ colors).reshape(nb_, h, w, 3)
    image += trans[:, -1, ..., None] * bg
    return np.clip(image, 0.0, 1.0)


def _alpha_maps(mean2d, conic, radius, ok, opac, cam, settings):
    """Dense per-splat alpha over the whole image, shape ``(..., H, W)``."""
    # the 3-sigma box is folded in as -inf so exp() zeroes everything outside it
    dx = np.arange(cam.width) - mean2d[..., 0:1]
    dy = np.arange(cam.height) - mean2d[..., 1:2]
    px = np.where(np.abs(dx) <= radius[..., None], -0.5 * conic[..., 0, None] * dx * dx, -np.inf)
    py = np.where(np.abs(dy) <= radius[..., None], -0.5 * conic[..., 2, None] * dy * dy, -np.inf)
    power = (-conic[..., 1, None, None] * dy[..., :, None]) * dx[..., None, :]
    power += px[..., None, :]
    power += py[..., :, None]
    np.minimum(power, 0.0, out=power)
    alpha = np.exp(power, out=power)
    alpha *= np.where(ok, opac, 0.0)[..., None, None]
    np.minimum(alpha, settings.max_alpha, out=alpha)
    alpha *= alpha >= settings.alpha_cutoff
    return alpha


def render_replaced(positions, log_scales, rotations, opacity_logits, sh, which, replacements,
                    cam: PinholeCamera, settings: RenderSettings | None = None):
    """Render many variants of one cloud, each differing in a single splat.

    ``which`` is a ``(P,)`` array of splat indices and ``replacements`` a
    tuple ``(positions, log_scales, rotations, opacity_logits, sh)`` of
    ``(P, ...)`` arrays holding the substituted splat.  Returns ``(P, H, W, 3)``
    images equal (up to rounding) to rendering each variant in full, at a
    cost that does not grow with the number of splats per variant.
    """
    settings = settings or RenderSettings()
    which = np.asarray(which)
    bg = np.asarray(settings.background, dtype=np.float64)
    h, w = cam.height, cam.width
    pr, conic, radius, ok, colors, opac = _splat_terms(
        positions, log_scales, rotations, opacity_logits, sh, cam, settings)
    alpha = _alpha_maps(pr.mean2d, conic, radius, ok, opac, cam, settings)
    depth = pr.depth
    rp, rconic, rradius, rok, rcolors, ropac = _splat_terms(*replacements, cam, settings)
    ralpha = _alpha_maps(rp.mean2d, rconic, rradius, rok, ropac, cam, settings)
    out = np.empty((len(which), h, w, 3))
    n = len(depth)
    for j in np.unique(which):
        sel = np.flatnonzero(which == j)
        others = np.delete(np.arange(n), j)
        others = others[np.argsort(depth[others], kind="stable")]
        a = alpha[others]
        c = colors[others]
        m = len(others)
        # front[k]: colour composited from the first k others; pre[k]: their transmittance
        pre = np.concatenate([np.ones((1, h, w)), np.cumprod(1.0 - a, axis=0)])
        front = np.zeros((m + 1, h, w, 3))
        front[1:] = np.cumsum((pre[:-1] * a)[..., None] * c[:, None, None, :], axis=0)
        # back[k]: others k.. composited over the background
        back = np.empty((m + 1, h, w, 3))
        back[m] = bg
        for k in range(m - 1, -1, -1):
            back[k] = a[k][..., None] * c[k] + (1.0 - a[k])[..., None] * back[k + 1]
        d = rp.depth[sel]
        od = depth[others]
        pos = ((od[None, :] < d[:, None]) | ((od[None, :] == d[:, None]) & (others[None, :] < j))).sum(axis=1)
        al = ralpha[sel][..., None]
        out[sel] = front[pos] + pre[pos][..., None] * (al * rcolors[sel][:, None, None, :] + (1.0 - al) * back[pos])
    return np.clip(out, 0.0, 1.0)


def render_video(cloud: GaussianCloud, cameras, settings: RenderSettings | None = None) -> np.ndarray:
    return np.stack([render(cloud, cam, settings) for cam in cameras])
