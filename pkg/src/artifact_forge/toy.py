"""Small synthetic scenes for tests, demos and the pipeline smoke run."""

from __future__ import annotations

import numpy as np

from .gaussians import SH_BASIS, GaussianCloud, PinholeCamera
from .render import SH_C0
from .trajectory import CameraTrajectory


def rgb_to_dc(rgb):
    """SH DC coefficient that renders as ``rgb`` (view independent)."""
    return (np.asarray(rgb, dtype=np.float64) - 0.5) / SH_C0


def random_cloud(n: int, seed=0, sh_degree: int = 0, extent: float = 0.6,
                 log_scale_range=(-2.6, -1.8), opacity_logit_range=(1.0, 3.0)) -> GaussianCloud:
    rng = np.random.default_rng(seed)
    b = SH_BASIS[sh_degree]
    q = rng.standard_normal((n, 4))
    q /= np.linalg.norm(q, axis=1, keepdims=True)
    sh = np.zeros((n, 3, b))
    sh[:, :, 0] = rgb_to_dc(rng.uniform(0.1, 0.9, (n, 3)))
    if b > 1:
        sh[:, :, 1:] = 0.05 * rng.standard_normal((n, 3, b - 1))
    return GaussianCloud(
        positions=rng.uniform(-extent, extent, (n, 3)),
        log_scales=rng.uniform(*log_scale_range, (n, 3)),
        rotations=q,
        opacity_logits=rng.uniform(*opacity_logit_range, n),
        sh_coeffs=sh,
    )


def orbit_camera(angle_deg: float, radius: float = 3.0, height: float = 0.0, size: int = 32,
                 fov_deg: float = 40.0, target=(0.0, 0.0, 0.0)) -> PinholeCamera:
    a = np.deg2rad(angle_deg)
    eye = np.array([radius * np.sin(a), height, -radius * np.cos(a)])
    f = 0.5 * size / np.tan(np.deg2rad(fov_deg) / 2)
    return PinholeCamera.look_at(eye, target, fx=f, width=size, height=size)


def orbit_trajectory(n_frames: int, start_deg: float = -30.0, end_deg: float = 30.0,
                     radius: float = 3.0, size: int = 32) -> CameraTrajectory:
    angles = np.linspace(start_deg, end_deg, n_frames)
    return CameraTrajectory.from_cameras([orbit_camera(a, radius, size=size) for a in angles])


def perturbed(cloud: GaussianCloud, seed=0, position_sigma=0.08, log_scale_shift=0.25,
              dc_sigma=0.4, opacity_shift=-1.0) -> GaussianCloud:
    """A plausibly wrong starting point for fitting experiments."""
    rng = np.random.default_rng(seed)
    sh = cloud.sh_coeffs.astype(np.float64).copy()
    sh[:, :, 0] += dc_sigma * rng.standard_normal(sh[:, :, 0].shape)
    return cloud.replace(
        positions=cloud.positions + position_sigma * rng.standard_normal(cloud.positions.shape),
        log_scales=cloud.log_scales + log_scale_shift,
        opacity_logits=cloud.opacity_logits + opacity_shift,
        sh_coeffs=sh,
    )


def toy_scene(n: int = 10, size: int = 32, seed: int = 0, sparse_angles=(-40.0, 0.0, 40.0)):
    """Ground-truth cloud and sparse training cameras of the desk-scale scene."""
    cloud = random_cloud(n, seed=seed)
    cams = [orbit_camera(a, size=size) for a in sparse_angles]
    return cloud, cams
