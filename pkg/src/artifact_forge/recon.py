"""Closed-loop generative reconstruction at desk scale.

Novel views are sampled along a reference-guided spherical trajectory between
two training views, rendered, passed through a restorer and fed back as
extra supervision.  The cloud is fitted from central finite differences
(Adam by default, or monotone gradient descent), which is only practical for
a handful of splats and tiny images; that is the point, no differentiable
rasterizer is needed.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.spatial.transform import Rotation, Slerp

from .errors import BudgetExceeded, DegenerateGeometry, DimensionMismatch
from .gaussians import GaussianCloud, PinholeCamera
from .metrics import l1, ssim
from .render import RenderSettings, render, render_batch, render_replaced
from .trajectory import CameraTrajectory

log = logging.getLogger(__name__)


# ------------------------------------------------------------ trajectory

@dataclass(frozen=True)
class TrajectorySpec:
    start: PinholeCamera
    end: PinholeCamera
    n_intermediate: int = 4
    sphere_center: np.ndarray | None = None

    def __post_init__(self):
        if self.n_intermediate < 0:
            raise ValueError("n_intermediate must be >= 0")


def look_at_center(a: PinholeCamera, b: PinholeCamera) -> np.ndarray:
    """Midpoint of the closest points between the two optical axes.

    Falls back to points one baseline ahead of each camera when the axes are
    (nearly) parallel or meet behind a camera.
    """
    d1, d2 = a.forward, b.forward
    w = a.center - b.center
    bb = d1 @ d2
    denom = 1.0 - bb * bb
    baseline = np.linalg.norm(w)
    if denom > 1e-9:
        s1 = (bb * (d2 @ w) - (d1 @ w)) / denom
        s2 = ((d2 @ w) - bb * (d1 @ w)) / denom
        if s1 > 0 and s2 > 0:
            return 0.5 * ((a.center + s1 * d1) + (b.center + s2 * d2))
    return 0.5 * ((a.center + baseline * d1) + (b.center + baseline * d2))


def _great_circle(u1, u2, s):
    cos = np.clip(u1 @ u2, -1.0, 1.0)
    theta = np.arccos(cos)
    if theta < 1e-9:
        v = (1 - s) * u1 + s * u2
        return v / np.linalg.norm(v)
    if np.pi - theta < 1e-9:
        # antipodal: rotate about any axis perpendicular to u1
        axis = np.cross(u1, (1.0, 0.0, 0.0))
        if np.linalg.norm(axis) < 1e-6:
            axis = np.cross(u1, (0.0, 1.0, 0.0))
        axis /= np.linalg.norm(axis)
        return Rotation.from_rotvec(axis * s * theta).apply(u1)
    return (np.sin((1 - s) * theta) * u1 + np.sin(s * theta) * u2) / np.sin(theta)


def spherical_trajectory(spec: TrajectorySpec) -> CameraTrajectory:
    """Start view -> sphere, great-circle arc, sphere -> end view.

    ``n_intermediate`` frames are spaced uniformly by arc length along the
    three segments; orientations are slerped uniformly.  The first and last
    frames are the input views verbatim.
    """
    a, b = spec.start, spec.end
    if np.linalg.norm(a.center - b.center) < 1e-9:
        raise DegenerateGeometry("start and end cameras coincide")
    ctr = look_at_center(a, b) if spec.sphere_center is None else np.asarray(spec.sphere_center, dtype=np.float64)
    r1, r2 = np.linalg.norm(a.center - ctr), np.linalg.norm(b.center - ctr)
    if r1 < 1e-9 or r2 < 1e-9:
        raise DegenerateGeometry("a camera sits on the sphere centre")
    radius = 0.5 * (r1 + r2)
    u1, u2 = (a.center - ctr) / r1, (b.center - ctr) / r2
    p1, p2 = ctr + radius * u1, ctr + radius * u2
    theta = np.arccos(np.clip(u1 @ u2, -1.0, 1.0))
    lengths = np.array([np.linalg.norm(p1 - a.center), radius * theta, np.linalg.norm(b.center - p2)])
    total = lengths.sum()
    if total < 1e-12:
        raise DegenerateGeometry("zero-length trajectory")

    n = spec.n_intermediate
    rots = Rotation.from_matrix(np.stack([a.rotation, b.rotation]))
    slerp = Slerp([0.0, 1.0], rots)
    rotations, centers = [a.rotation], [a.center]
    for k in range(1, n + 1):
        frac = k / (n + 1)
        s = frac * total
        if s <= lengths[0] and lengths[0] > 0:
            pos = a.center + (p1 - a.center) * (s / lengths[0])
        elif s <= lengths[0] + lengths[1] or lengths[2] == 0:
            g = (s - lengths[0]) / lengths[1] if lengths[1] > 0 else 1.0
            pos = ctr + radius * _great_circle(u1, u2, min(max(g, 0.0), 1.0))
        else:
            g = (s - lengths[0] - lengths[1]) / lengths[2]
            pos = p2 + (b.center - p2) * g
        rotations.append(slerp([frac]).as_matrix()[0])
        centers.append(pos)
    rotations.append(b.rotation)
    centers.append(b.center)
    traj = CameraTrajectory.from_cameras([a, b])
    return CameraTrajectory(np.stack(rotations), np.stack(centers), traj.intrinsics)


def novel_cameras(spec: TrajectorySpec) -> list:
    """The intermediate cameras of :func:`spherical_trajectory` (endpoints dropped)."""
    return spherical_trajectory(spec).cameras()[1:-1]


# ------------------------------------------------------------ losses

@dataclass(frozen=True)
class LossConfig:
    lambda_gen: float = 1.0
    lambda_l1: float = 0.8
    lambda_ssim: float = 0.2

    def __post_init__(self):
        if min(self.lambda_gen, self.lambda_l1, self.lambda_ssim) < 0:
            raise ValueError("loss weights must be non-negative")


def photometric_loss(pred, target, cfg: LossConfig = LossConfig()):
    """``lambda_l1 * L1 + lambda_ssim * (1 - SSIM)``; batched over leading axes."""
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape[-3:] != target.shape[-3:]:
        raise DimensionMismatch(f"image shapes differ: {pred.shape} vs {target.shape}")
    return cfg.lambda_l1 * l1(pred, target) + cfg.lambda_ssim * (1.0 - ssim(pred, target))


def _mean_loss(preds, targets, cfg):
    if len(preds) != len(targets):
        raise DimensionMismatch(f"{len(preds)} renders vs {len(targets)} targets")
    if not len(preds):
        return 0.0
    return float(np.mean([photometric_loss(p, t, cfg) for p, t in zip(preds, targets)]))


def combined_loss(renders_sparse, gt_sparse, renders_novel=(), restored_novel=(),
                  cfg: LossConfig = LossConfig(), return_parts: bool = False):
    """``L_recon + lambda_gen * L_gen``, each a mean photometric loss over its pairs."""
    recon = _mean_loss(renders_sparse, gt_sparse, cfg)
    gen = _mean_loss(renders_novel, restored_novel, cfg)
    total = recon + cfg.lambda_gen * gen
    if return_parts:
        return total, recon, gen
    return total


# ------------------------------------------------------------ parameters

_FIELDS = ("positions", "log_scales", "rotations", "opacity_logits", "sh_coeffs")


def pack(cloud: GaussianCloud) -> np.ndarray:
    return np.concatenate([getattr(cloud, f).astype(np.float64).ravel() for f in _FIELDS])


def _layout(cloud: GaussianCloud):
    out, start = [], 0
    for f in _FIELDS:
        shape = getattr(cloud, f).shape
        size = int(np.prod(shape))
        out.append((f, start, start + size, shape))
        start += size
    return out


def unpack_batch(theta, layout) -> dict:
    theta = np.atleast_2d(theta)
    return {f: theta[:, a:b].reshape((theta.shape[0],) + shape) for f, a, b, shape in layout}


def unpack(theta, template: GaussianCloud) -> GaussianCloud:
    fields = unpack_batch(theta, _layout(template))
    return GaussianCloud(**{f: v[0] for f, v in fields.items()})


def _normalize_quats(theta, layout):
    for f, a, b, shape in layout:
        if f == "rotations":
            q = theta[a:b].reshape(shape)
            q /= np.linalg.norm(q, axis=1, keepdims=True)
            theta[a:b] = q.ravel()
    return theta


@dataclass
class Views:
    """Cameras with their supervision images."""

    cameras: list
    images: list

    def __len__(self):
        return len(self.cameras)

    def extend(self, cameras, images):
        self.cameras.extend(cameras)
        self.images.extend(np.asarray(i, dtype=np.float64) for i in images)


class LossFunction:
    """Combined loss of packed parameter vectors, evaluated in batches."""

    def __init__(self, template: GaussianCloud, sparse: Views, novel: Views | None,
                 cfg: LossConfig = LossConfig(), settings: RenderSettings | None = None, chunk: int = 96):
        self.layout = _layout(template)
        self.sparse = sparse
        self.novel = novel if novel is not None else Views([], [])
        self.cfg = cfg
        self.settings = settings or RenderSettings()
        self.chunk = chunk

    def _group(self, fields, views):
        if not len(views):
            return np.zeros(fields["positions"].shape[0])
        total = 0.0
        for cam, img in zip(views.cameras, views.images):
            pred = render_batch(fields["positions"], fields["log_scales"], fields["rotations"],
                                fields["opacity_logits"], fields["sh_coeffs"], cam, self.settings)
            total = total + photometric_loss(pred, img, self.cfg)
        return total / len(views)

    def parts(self, thetas):
        thetas = np.atleast_2d(thetas)
        recon, gen = [], []
        for i in range(0, thetas.shape[0], self.chunk):
            fields = unpack_batch(thetas[i:i + self.chunk], self.layout)
            recon.append(self._group(fields, self.sparse))
            gen.append(self._group(fields, self.novel))
        return np.concatenate(recon), np.concatenate(gen)

    def __call__(self, thetas):
        recon, gen = self.parts(thetas)
        return recon + self.cfg.lambda_gen * gen

    def single_splat(self, theta, probes, which):
        """Loss of ``probes`` that each differ from ``theta`` in splat ``which[i]`` only."""
        base = unpack_batch(theta, self.layout)
        base = [base[f][0] for f in _FIELDS]
        fields = unpack_batch(probes, self.layout)
        rows = np.arange(len(which))
        repl = tuple(fields[f][rows, which] for f in _FIELDS)

        def group(views):
            if not len(views):
                return np.zeros(len(which))
            total = 0.0
            for cam, img in zip(views.cameras, views.images):
                pred = render_replaced(*base, which, repl, cam, self.settings)
                total = total + photometric_loss(pred, img, self.cfg)
            return total / len(views)

        return group(self.sparse) + self.cfg.lambda_gen * group(self.novel)


def _splat_index(layout):
    # which splat each packed coordinate belongs to
    return np.concatenate([np.repeat(np.arange(shape[0]), int(np.prod(shape[1:]))) for _, _, _, shape in layout])


def fd_gradient(loss: LossFunction, theta, h: float = 1e-3):
    """Central differences with per-coordinate step ``h * max(1, |theta_i|)``."""
    p = theta.size
    steps = h * np.maximum(1.0, np.abs(theta))
    probes = np.repeat(theta[None], 2 * p, axis=0)
    idx = np.arange(p)
    probes[2 * idx, idx] += steps
    probes[2 * idx + 1, idx] -= steps
    if isinstance(loss, LossFunction):
        vals = loss.single_splat(theta, probes, np.repeat(_splat_index(loss.layout), 2))
    else:
        vals = loss(probes)
    return (vals[0::2] - vals[1::2]) / ((probes[2 * idx, idx] - probes[2 * idx + 1, idx]))


@dataclass
class FitHistory:
    """Loss curve; one row per evaluation, ``phase`` counts optimize() calls."""

    losses: list = field(default_factory=list)
    recon: list = field(default_factory=list)
    gen: list = field(default_factory=list)
    phase: list = field(default_factory=list)
    accepted: list = field(default_factory=list)
    _phase: int = -1

    def record(self, total, recon, gen):
        self.losses.append(float(total))
        self.recon.append(float(recon))
        self.gen.append(float(gen))
        self.phase.append(self._phase)

    def to_csv(self) -> str:
        rows = ["row,phase,loss,l_recon,l_gen"]
        for i, (p, t, r, g) in enumerate(zip(self.phase, self.losses, self.recon, self.gen)):
            rows.append(f"{i},{p},{t!r},{r!r},{g!r}")
        return "\n".join(rows) + "\n"


METHODS = ("adam", "descent")
DEFAULT_LR = {"adam": 0.01, "descent": 5.0}


def optimize(cloud: GaussianCloud, sparse: Views, novel: Views | None = None, cfg: LossConfig = LossConfig(),
             steps: int = 100, lr: float | None = None, *, method: str = "adam", budget: int = 2000,
             max_pixels: int = 64 * 64, h: float = 1e-3, max_halvings: int = 5, betas=(0.9, 0.999),
             eps: float = 1e-8, settings: RenderSettings | None = None,
             history: FitHistory | None = None) -> GaussianCloud:
    """Fit the cloud to the combined loss for ``steps`` gradient steps.

    ``method="adam"`` takes plain Adam steps of size ``lr`` (default 0.01) with
    fresh moments on every call.  ``method="descent"`` is monotone gradient
    descent: each step tries ``lr`` (default 5.0) and up to ``max_halvings``
    halvings, and is only taken if the loss does not increase, so the result
    never scores worse than the input.
    """
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")
    lr = DEFAULT_LR[method] if lr is None else float(lr)
    if lr <= 0:
        raise ValueError("lr must be positive")
    n_params = pack(cloud).size
    if n_params > budget:
        raise BudgetExceeded(f"{n_params} parameters exceed the finite-difference budget of {budget}")
    for cam in list(sparse.cameras) + list(novel.cameras if novel else []):
        if cam.width * cam.height > max_pixels:
            raise BudgetExceeded(f"{cam.width}x{cam.height} images exceed the {max_pixels}-pixel budget")
    if steps <= 0:
        return cloud
    loss = LossFunction(cloud, sparse, novel, cfg, settings)
    theta = pack(cloud)
    current = float(loss(theta)[0])
    history = history if history is not None else FitHistory()
    history._phase += 1
    r, g = loss.parts(theta)
    history.record(current, r[0], g[0])
    if method == "adam":
        b1, b2 = betas
        m = np.zeros_like(theta)
        v = np.zeros_like(theta)
        for step in range(1, steps + 1):
            grad = fd_gradient(loss, theta, h)
            m = b1 * m + (1 - b1) * grad
            v = b2 * v + (1 - b2) * grad * grad
            update = (m / (1 - b1**step)) / (np.sqrt(v / (1 - b2**step)) + eps)
            theta = _normalize_quats(theta - lr * update, loss.layout).astype(np.float32).astype(np.float64)
            r, g = loss.parts(theta)
            current = float(r[0] + cfg.lambda_gen * g[0])
            history.record(current, r[0], g[0])
            history.accepted.append(True)
            log.debug("step %d loss %.6f", step, current)
        return unpack(theta, cloud)
    n_accepted = 0
    for step in range(steps):
        grad = fd_gradient(loss, theta, h)
        rate = lr
        accepted = False
        for _ in range(max_halvings + 1):
            cand = _normalize_quats(theta - rate * grad, loss.layout)
            cand = cand.astype(np.float32).astype(np.float64)
            value = float(loss(cand)[0])
            if value <= current:
                theta, current, accepted = cand, value, True
                break
            rate *= 0.5
        n_accepted += accepted
        r, g = loss.parts(theta)
        history.record(current, r[0], g[0])
        history.accepted.append(accepted)
        log.debug("step %d loss %.6f accepted=%s", step, current, accepted)
    if not n_accepted:
        return cloud
    return unpack(theta, cloud)


Restorer = Callable[[np.ndarray, Sequence[PinholeCamera]], np.ndarray]


def identity_restorer(video, cameras=None):
    return video


class GroundTruthRestorer:
    """Oracle restorer: returns clean renders of a ground-truth cloud for the same cameras."""

    def __init__(self, gt: GaussianCloud, settings: RenderSettings | None = None):
        self.gt = gt
        self.settings = settings

    def __call__(self, video, cameras):
        return np.stack([render(self.gt, cam, self.settings) for cam in cameras])


def closed_loop(cloud: GaussianCloud, sparse: Views, restorer: Restorer, iterations: int = 3,
                cfg: LossConfig = LossConfig(), steps_per_iteration: int = 50, lr: float | None = None,
                n_novel: int = 4, settings: RenderSettings | None = None,
                history: FitHistory | None = None, accumulate: bool = True, **opt_kw) -> GaussianCloud:
    """Render novel views, restore them, add them as supervision, refit; repeat.

    Iteration ``i`` samples a trajectory between sparse views ``i`` and
    ``i + 1`` (cyclically).  With ``iterations=0`` this is a plain sparse-only
    fit of ``steps_per_iteration`` steps.  The restorer is called as
    ``restorer(video, cameras)``.  Restored views accumulate across
    iterations; ``accumulate=False`` keeps only the latest batch.  Extra
    keywords (``method``, ``budget``, ...) go to :func:`optimize`.
    """
    history = history if history is not None else FitHistory()
    if iterations <= 0:
        return optimize(cloud, sparse, None, cfg, steps_per_iteration, lr, settings=settings,
                        history=history, **opt_kw)
    novel = Views([], [])
    n_views = len(sparse)
    for it in range(iterations):
        a = sparse.cameras[it % n_views]
        b = sparse.cameras[(it + 1) % n_views]
        cams = novel_cameras(TrajectorySpec(a, b, n_novel))
        video = np.stack([render(cloud, cam, settings) for cam in cams])
        restored = restorer(video, cams)
        if not accumulate:
            novel = Views([], [])
        novel.extend(cams, restored)
        cloud = optimize(cloud, sparse, novel, cfg, steps_per_iteration, lr, settings=settings,
                         history=history, **opt_kw)
    return cloud
