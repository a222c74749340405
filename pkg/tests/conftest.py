import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from artifact_forge.gaussians import GaussianCloud, PinholeCamera  # noqa: E402
from artifact_forge.toy import random_cloud, rgb_to_dc  # noqa: E402


def splat(pos, log_scale=-2.0, rgb=(1.0, 0.0, 0.0), opacity_logit=4.0, quat=(1.0, 0.0, 0.0, 0.0)):
    """One-row cloud; handy for hand-checked fixtures."""
    return GaussianCloud(
        positions=[pos],
        log_scales=[[log_scale] * 3 if np.ndim(log_scale) == 0 else log_scale],
        rotations=[quat],
        opacity_logits=[opacity_logit],
        sh_coeffs=rgb_to_dc(rgb).reshape(1, 3, 1),
    )


def concat(*clouds):
    return GaussianCloud(*(np.concatenate([getattr(c, f) for c in clouds]) for f in
                           ("positions", "log_scales", "rotations", "opacity_logits", "sh_coeffs")))


@pytest.fixture
def front_camera():
    # at the origin looking down +z, 16x16, pixel centres at integer coordinates
    return PinholeCamera(np.eye(3), np.zeros(3), 20.0, 20.0, 7.5, 7.5, 16, 16)


@pytest.fixture
def small_cloud():
    return random_cloud(12, seed=3)


def smooth_trajectory(rng, n_frames, n_spikes=0, rot_spikes=0):
    """Random smooth camera path with optional position / rotation spikes.

    Returns ``(trajectory, spike_frames)``.
    """
    from scipy.spatial.transform import Rotation
    from artifact_forge.trajectory import CameraTrajectory, Intrinsics

    t = np.arange(n_frames, dtype=np.float64)
    direction = rng.standard_normal(3)
    direction /= np.linalg.norm(direction)
    speed = rng.uniform(0.05, 0.5)
    centers = rng.standard_normal(3) + speed * t[:, None] * direction
    for _ in range(2):
        amp = speed * rng.uniform(0.5, 3.0) * rng.standard_normal(3)
        w = rng.uniform(0.02, 0.12)
        centers += amp * np.sin(w * t + rng.uniform(0, 2 * np.pi))[:, None]
    rv = rng.standard_normal(3) + rng.uniform(0.002, 0.03) * t[:, None] * rng.standard_normal(3)
    rv += 0.05 * np.sin(rng.uniform(0.03, 0.1) * t)[:, None] * rng.standard_normal(3)
    spikes = sorted(rng.choice(np.arange(3, n_frames - 3), size=n_spikes + rot_spikes, replace=False).tolist())
    for i in spikes[:n_spikes]:
        centers[i] += speed * rng.uniform(4, 10) * rng.standard_normal(3)
    for i in spikes[n_spikes:]:
        rv[i] += rng.uniform(0.2, 0.5) * rng.standard_normal(3)
    rots = Rotation.from_rotvec(rv).as_matrix()
    return CameraTrajectory(rots, centers, Intrinsics(40.0, 40.0, 15.5, 15.5, 32, 32)), spikes


def uniform_motion(rng, n):
    """Constant velocity and constant angular rate; nothing here is an outlier."""
    from scipy.spatial.transform import Rotation
    from artifact_forge.trajectory import CameraTrajectory, Intrinsics

    v = rng.standard_normal(3) * rng.uniform(0.01, 2.0)
    w = rng.standard_normal(3) * rng.uniform(0.0, 0.05)
    r0 = Rotation.from_rotvec(rng.standard_normal(3))
    rots = np.stack([(Rotation.from_rotvec(w * t) * r0).as_matrix() for t in range(n)])
    centers = rng.standard_normal(3) + np.arange(n)[:, None] * v
    return CameraTrajectory(rots, centers, Intrinsics(40.0, 40.0, 15.5, 15.5, 32, 32))


# (number, title, passed, seconds, limit, notes) rows filled by test_acceptance.py
ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number, title, passed, seconds, limit, notes in sorted(ACCEPTANCE):
        verdict = "PASS" if passed else "FAIL"
        terminalreporter.write_line(f"criterion {number:>2} {verdict}  {title} ({seconds:.2f} s, limit {limit:g} s)"
                                    + (f"  {notes}" if notes else ""))
