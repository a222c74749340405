"""Camera trajectories and kinematic smoothness filtering.

Metrics are finite differences over frame indices (unit spacing):

* jerk ``j_t = a_{t+1} - a_t`` normalised by the mean step length,
* angular acceleration ``|w_{t+1} - w_t|`` where ``w_t`` is the axis-angle
  vector of ``R_{t+1} R_t^T``,
* directional consistency, the cosine between consecutive velocities.

A metric value at index ``t`` is attributed to frame ``t``.  Frames past the
end of a metric's support are not judged by that metric.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, SegmentTooShort, TooFewFrames
from .gaussians import PinholeCamera

MAD_FLOOR = 1e-12
STATIONARY_EPS = 1e-9


@dataclass(frozen=True)
class Intrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def to_dict(self):
        return {"fx": self.fx, "fy": self.fy, "cx": self.cx, "cy": self.cy,
                "width": self.width, "height": self.height}


@dataclass(frozen=True, eq=False)
class CameraTrajectory:
    """Per-frame world-to-camera rotations ``(T, 3, 3)`` and centres ``(T, 3)``."""

    rotations: np.ndarray
    centers: np.ndarray
    intrinsics: Intrinsics

    def __post_init__(self):
        r = np.array(self.rotations, dtype=np.float64).reshape(-1, 3, 3)
        c = np.array(self.centers, dtype=np.float64).reshape(-1, 3)
        if r.shape[0] != c.shape[0]:
            raise DataError("rotation and centre counts differ")
        err = np.abs(r @ np.swapaxes(r, 1, 2) - np.eye(3)).max(initial=0.0)
        if err > 1e-6:
            raise DataError(f"non-orthonormal rotation (max error {err:.2e})")
        r.setflags(write=False)
        c.setflags(write=False)
        object.__setattr__(self, "rotations", r)
        object.__setattr__(self, "centers", c)

    def __len__(self):
        return self.centers.shape[0]

    def camera(self, i: int) -> PinholeCamera:
        k = self.intrinsics
        return PinholeCamera(self.rotations[i], self.centers[i], k.fx, k.fy, k.cx, k.cy, k.width, k.height)

    def cameras(self) -> list:
        return [self.camera(i) for i in range(len(self))]

    @classmethod
    def from_cameras(cls, cams) -> "CameraTrajectory":
        c0 = cams[0]
        return cls(np.stack([c.rotation for c in cams]), np.stack([c.center for c in cams]),
                   Intrinsics(c0.fx, c0.fy, c0.cx, c0.cy, c0.width, c0.height))

    def slice(self, start: int, stop: int) -> "CameraTrajectory":
        return CameraTrajectory(self.rotations[start:stop], self.centers[start:stop], self.intrinsics)

    def to_json(self) -> dict:
        return {
            "intrinsics": self.intrinsics.to_dict(),
            "frames": [{"R": r.ravel().tolist(), "C": c.tolist()} for r, c in zip(self.rotations, self.centers)],
        }

    @classmethod
    def from_json(cls, obj) -> "CameraTrajectory":
        try:
            frames = obj["frames"]
            k = obj["intrinsics"]
            intr = Intrinsics(float(k["fx"]), float(k["fy"]), float(k["cx"]), float(k["cy"]),
                              int(k["width"]), int(k["height"]))
            rots = np.array([f["R"] for f in frames], dtype=np.float64).reshape(-1, 3, 3)
            cents = np.array([f["C"] for f in frames], dtype=np.float64).reshape(-1, 3)
        except (KeyError, TypeError, ValueError) as exc:
            raise DataError(f"malformed trajectory JSON: {exc}") from exc
        return cls(rots, cents, intr)

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh, indent=1)

    @classmethod
    def load(cls, path) -> "CameraTrajectory":
        with open(path) as fh:
            return cls.from_json(json.load(fh))


def rotvec(rot) -> np.ndarray:
    """Axis-angle vectors of rotation matrices ``(..., 3, 3)``.

    Goes through a unit quaternion (largest-component branch), which stays
    accurate near both 0 and pi.
    """
    m = np.asarray(rot, dtype=np.float64)
    flat = m.reshape(-1, 3, 3)
    out = np.empty((flat.shape[0], 3))
    for i, r in enumerate(flat):
        tr = r[0, 0] + r[1, 1] + r[2, 2]
        cands = (tr, r[0, 0], r[1, 1], r[2, 2])
        k = int(np.argmax(cands))
        if k == 0:
            s = 2.0 * np.sqrt(1.0 + tr)
            q = np.array([0.25 * s, (r[2, 1] - r[1, 2]) / s, (r[0, 2] - r[2, 0]) / s, (r[1, 0] - r[0, 1]) / s])
        elif k == 1:
            s = 2.0 * np.sqrt(max(1.0 + r[0, 0] - r[1, 1] - r[2, 2], 0.0))
            q = np.array([(r[2, 1] - r[1, 2]) / s, 0.25 * s, (r[0, 1] + r[1, 0]) / s, (r[0, 2] + r[2, 0]) / s])
        elif k == 2:
            s = 2.0 * np.sqrt(max(1.0 + r[1, 1] - r[0, 0] - r[2, 2], 0.0))
            q = np.array([(r[0, 2] - r[2, 0]) / s, (r[0, 1] + r[1, 0]) / s, 0.25 * s, (r[1, 2] + r[2, 1]) / s])
        else:
            s = 2.0 * np.sqrt(max(1.0 + r[2, 2] - r[0, 0] - r[1, 1], 0.0))
            q = np.array([(r[1, 0] - r[0, 1]) / s, (r[0, 2] + r[2, 0]) / s, (r[1, 2] + r[2, 1]) / s, 0.25 * s])
        if q[0] < 0:
            q = -q
        q /= np.linalg.norm(q)
        vnorm = np.linalg.norm(q[1:])
        angle = 2.0 * np.arctan2(vnorm, q[0])
        if vnorm < 1e-8:
            # first-order series: angle / sin(angle / 2) -> 2
            out[i] = 2.0 * q[1:] / q[0]
        else:
            out[i] = q[1:] * (angle / vnorm)
    return out.reshape(m.shape[:-2] + (3,))


@dataclass
class KinematicReport:
    velocity: np.ndarray          # (T-1, 3)
    acceleration: np.ndarray      # (T-2, 3)
    jerk: np.ndarray              # (T-3, 3)
    jerk_norm: np.ndarray         # (T-3,) J'_t, scale-free
    angular_velocity: np.ndarray  # (T-1, 3) rad/frame
    angular_accel: np.ndarray     # (T-2,)  rad/frame^2
    direction_cos: np.ndarray     # (T-2,)  NaN where a velocity is ~0
    mean_step: float

    def to_json(self) -> dict:
        def clean(a):
            return [None if not np.isfinite(v) else float(v) for v in np.ravel(a)]
        return {
            "mean_step": self.mean_step,
            "jerk_norm": clean(self.jerk_norm),
            "angular_accel": clean(self.angular_accel),
            "direction_cos": clean(self.direction_cos),
        }


def kinematics(traj: CameraTrajectory) -> KinematicReport:
    t = len(traj)
    if t < 4:
        raise TooFewFrames(f"need at least 4 frames, got {t}")
    c = traj.centers
    v = np.diff(c, axis=0)
    a = np.diff(v, axis=0)
    j = np.diff(a, axis=0)
    speed = np.linalg.norm(v, axis=1)
    mean_step = float(speed.mean())
    jn = np.linalg.norm(j, axis=1)
    jerk_norm = jn / mean_step if mean_step > 0 else np.zeros_like(jn)

    rel = traj.rotations[1:] @ np.swapaxes(traj.rotations[:-1], 1, 2)
    omega = rotvec(rel)
    ang_acc = np.linalg.norm(np.diff(omega, axis=0), axis=1)

    dots = np.einsum("ij,ij->i", v[:-1], v[1:])
    denom = speed[:-1] * speed[1:]
    moving = (speed[:-1] > STATIONARY_EPS) & (speed[1:] > STATIONARY_EPS)
    cos = np.full(t - 2, np.nan)
    cos[moving] = np.clip(dots[moving] / denom[moving], -1.0, 1.0)
    return KinematicReport(v, a, j, jerk_norm, omega, ang_acc, cos, mean_step)


def mad(values) -> tuple[float, float]:
    """``(median, MAD)`` of a series."""
    x = np.asarray(values, dtype=np.float64)
    med = float(np.median(x))
    return med, float(np.median(np.abs(x - med)))


def mad_filter(values, lam: float = 4.0) -> np.ndarray:
    """Flag entries with ``|x - median| > lam * MAD``.

    MAD is floored at ``1e-12 * (1 + |median|)`` so a constant series rejects
    nothing while a constant series with one spike rejects only the spike.
    """
    x = np.asarray(values, dtype=np.float64)
    if x.size == 0:
        raise DataError("mad_filter needs a non-empty series")
    med, spread = mad(x)
    spread = max(spread, MAD_FLOOR * (1.0 + abs(med)))
    return np.abs(x - med) > lam * spread


@dataclass(frozen=True)
class FilterConfig:
    lam: float = 4.0
    use_jerk: bool = True
    use_angular: bool = True
    use_direction: bool = True
    # optional MAD pass over the cosine series ("high variance in turning rate")
    use_direction_mad: bool = False
    min_segment_length: int = 16

    def __post_init__(self):
        if self.lam <= 0:
            raise ValueError("lambda must be positive")
        if self.min_segment_length < 1:
            raise ValueError("min_segment_length must be >= 1")


@dataclass
class QCResult:
    valid: np.ndarray
    segment: tuple
    report: KinematicReport
    rejected_by: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "n_frames": int(self.valid.size),
            "segment": list(self.segment),
            "valid": [bool(v) for v in self.valid],
            "rejected_by": {k: np.flatnonzero(v).tolist() for k, v in self.rejected_by.items()},
            "metrics": self.report.to_json(),
        }


def frame_flags(report: KinematicReport, n_frames: int, config: FilterConfig) -> dict:
    """Per-frame rejection masks, one per enabled criterion."""
    out = {}

    def place(mask):
        full = np.zeros(n_frames, dtype=bool)
        full[:mask.size] = mask
        return full

    if config.use_jerk:
        out["jerk"] = place(mad_filter(report.jerk_norm, config.lam))
    if config.use_angular:
        out["angular"] = place(mad_filter(report.angular_accel, config.lam))
    cos = report.direction_cos
    defined = np.isfinite(cos)
    if config.use_direction:
        out["direction"] = place(defined & (np.where(defined, cos, 1.0) < 0))
    if config.use_direction_mad and defined.any():
        mask = np.zeros(cos.size, dtype=bool)
        mask[defined] = mad_filter(cos[defined], config.lam)
        out["direction_mad"] = place(mask)
    return out


def longest_run(valid) -> tuple[int, int]:
    """Half-open ``[start, end)`` of the longest run of True; earliest wins ties."""
    best = (0, 0)
    start = None
    for i, ok in enumerate(list(valid) + [False]):
        if ok and start is None:
            start = i
        elif not ok and start is not None:
            if i - start > best[1] - best[0]:
                best = (start, i)
            start = None
    return best


def filter_trajectory(traj: CameraTrajectory, config: FilterConfig | None = None) -> QCResult:
    config = config or FilterConfig()
    report = kinematics(traj)
    n = len(traj)
    flags = frame_flags(report, n, config)
    rejected = np.zeros(n, dtype=bool)
    for mask in flags.values():
        rejected |= mask
    valid = ~rejected
    segment = longest_run(valid)
    result = QCResult(valid, segment, report, flags)
    if segment[1] - segment[0] < config.min_segment_length:
        exc = SegmentTooShort(
            f"longest valid segment {segment} is shorter than {config.min_segment_length} frames")
        exc.result = result
        raise exc
    return result
