"""Reference/target/heatmap assembly, mask scheduling, masked flow matching and Euler sampling.

Conventions used throughout:

* the flow-matching path is ``z_t = (1 - t) z0 + t z1`` with ``t = 1`` noise
  and ``t = 0`` data; the velocity target is ``z1 - z0``;
* the sampler walks a uniform grid ``t_i = 1 - i / N`` and updates
  ``z <- z - (1 / N) v``;
* step ``i`` of the sampler uses row ``i`` of the mask-weight table.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Protocol, Union

import numpy as np

from .errors import IndexOutOfRange, ShapeMismatch, TooShort
from .latent import IdentityEncoder, LatentSequence, check_compatible

SPANS = ("reference", "target", "heatmap")


@dataclass(frozen=True)
class MaskWeights:
    full: float
    null: float
    heatmap: float

    def __post_init__(self):
        vals = (self.full, self.null, self.heatmap)
        if any(v < 0 for v in vals):
            raise ValueError(f"mask weights must be non-negative, got {vals}")
        if abs(sum(vals) - 1.0) > 1e-9:
            raise ValueError(f"mask weights must sum to 1, got {vals}")

    def as_tuple(self):
        return (self.full, self.null, self.heatmap)


def _rows(*rows):
    return tuple(MaskWeights(*r) for r in rows)


_H = (0.0, 0.0, 1.0)

# [w_full, w_null, w_heatmap] per denoising step, 8 steps
PRESETS = {
    "exp1": _rows(*[_H] * 8),
    "exp2-pure": _rows((1.0, 0.0, 0.0), *[_H] * 7),
    "exp2-blend": _rows((0.8, 0.0, 0.2), *[_H] * 7),
    "exp3-blend": _rows(*[_H] * 7, (0.0, 0.8, 0.2)),
    "exp3-pure": _rows(*[_H] * 7, (0.0, 1.0, 0.0)),
    "exp4": _rows((0.8, 0.0, 0.2), *[_H] * 6, (0.0, 1.0, 0.0)),
    "exp5": _rows((0.0, 1.0, 0.0), *[_H] * 6, (0.8, 0.0, 0.2)),
    "exp6": _rows((0.8, 0.0, 0.2), (0.6, 0.0, 0.4), (0.4, 0.0, 0.6), (0.2, 0.0, 0.8),
                  _H, _H, _H, (0.0, 1.0, 0.0)),
    "exp7": _rows((0.8, 0.0, 0.2), _H, _H, _H,
                  (0.0, 0.25, 0.75), (0.0, 0.5, 0.5), (0.0, 0.75, 0.25), (0.0, 1.0, 0.0)),
}
# the headline ablation's "Exp 2" and "Exp 3" are the blended and pure variants respectively
PRESET_ALIASES = {"exp2": "exp2-blend", "exp3": "exp3-pure"}


def preset(name: str) -> tuple:
    key = name.lower().replace(" ", "").replace("_", "-")
    key = PRESET_ALIASES.get(key, key)
    if key not in PRESETS:
        raise KeyError(f"unknown schedule preset {name!r}; choose from {sorted(PRESETS)}")
    return PRESETS[key]


def step_times(n_steps: int) -> np.ndarray:
    """Timestep at the start of each Euler step: ``1, 1 - 1/N, ..., 1/N``."""
    return 1.0 - np.arange(n_steps) / n_steps


def piecewise_schedule(n_steps: int = 8, tau1: float = 0.55, tau2: float = 0.9,
                       full_start: float = 0.8, null_end: float = 1.0) -> tuple:
    """Discretise the three-phase heatmap decay onto ``n_steps`` Euler steps.

    Steps with ``t >= tau2`` blend from ``full_start`` weight on the all-ones
    mask linearly toward the pure heatmap; steps with ``t < tau1`` decay
    linearly from the heatmap toward the null mask, reaching ``null_end`` on
    the last step; the rest use the heatmap alone.  The defaults reproduce
    ``exp7``; ``tau2=0.6, tau1=0.15`` gives ``exp6``.
    """
    if not 0.0 < tau1 < tau2 < 1.0:
        raise ValueError("need 0 < tau1 < tau2 < 1")
    t = step_times(n_steps)
    early = np.flatnonzero(t >= tau2)
    late = np.flatnonzero(t < tau1)
    rows = [(0.0, 0.0, 1.0)] * n_steps
    for m, i in enumerate(early):
        # rounding keeps table values such as 0.2 exact rather than 0.19999999999999996
        full = round(full_start * (1.0 - m / len(early)), 12)
        rows[i] = (full, 0.0, round(1.0 - full, 12))
    for m, i in enumerate(late, start=1):
        null = round(null_end * m / len(late), 12)
        rows[i] = (0.0, null, round(1.0 - null, 12))
    return _rows(*rows)


@dataclass(frozen=True)
class ScheduleConfig:
    weights: tuple = PRESETS["exp7"]
    tau1: float | None = None
    tau2: float | None = None

    def __post_init__(self):
        rows = tuple(w if isinstance(w, MaskWeights) else MaskWeights(*w) for w in self.weights)
        if not rows:
            raise ValueError("schedule needs at least one step")
        object.__setattr__(self, "weights", rows)
        if self.tau1 is not None and self.tau2 is not None and not self.tau1 < self.tau2:
            raise ValueError("tau1 must be smaller than tau2")

    @property
    def steps(self) -> int:
        return len(self.weights)

    @classmethod
    def from_preset(cls, name: str = "exp7") -> "ScheduleConfig":
        return cls(preset(name))

    @classmethod
    def from_thresholds(cls, n_steps=8, tau1=0.55, tau2=0.9, **kw) -> "ScheduleConfig":
        return cls(piecewise_schedule(n_steps, tau1, tau2, **kw), tau1, tau2)


def schedule_weights(step: int, cfg: ScheduleConfig) -> MaskWeights:
    if not 0 <= step < cfg.steps:
        raise IndexOutOfRange(f"step {step} outside [0, {cfg.steps})")
    return cfg.weights[step]


def schedule_csv(cfg: ScheduleConfig) -> str:
    lines = ["step,w_full,w_null,w_heatmap"]
    for i, w in enumerate(cfg.weights, start=1):
        lines.append(f"{i},{w.full!r},{w.null!r},{w.heatmap!r}")
    return "\n".join(lines) + "\n"


# ------------------------------------------------------------- assembly

def build_reference(gt_first, gt_last, artifact_frames, k: int = 8, encoder=None) -> LatentSequence:
    """Reference latent with the clean first view at index 0 and the clean last view on the trailing ``k`` frames."""
    encoder = encoder or IdentityEncoder()
    frames = np.asarray(artifact_frames)
    t = len(frames)
    if k < 1 or t < k + 2:
        raise TooShort(f"need at least k + 2 = {k + 2} artifact frames, got {t}")
    ref = encoder.encode(frames).data.copy()
    ref[0] = encoder.encode(np.asarray(gt_first)[None]).data[0]
    ref[t - k:] = encoder.encode(np.asarray(gt_last)[None]).data[0]
    return LatentSequence(ref, encoder.tag)


def fm_path(z0, z1, t: float):
    """Linear flow-matching interpolant; accepts arrays or :class:`LatentSequence`."""
    a = z0.data if isinstance(z0, LatentSequence) else np.asarray(z0, dtype=np.float64)
    b = z1.data if isinstance(z1, LatentSequence) else np.asarray(z1, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeMismatch(f"z0 {a.shape} and z1 {b.shape} differ")
    if not 0.0 <= t <= 1.0:
        raise ValueError("t must lie in [0, 1]")
    zt = (1.0 - t) * a + t * b
    if isinstance(z0, LatentSequence):
        return z0.with_data(zt)
    return zt


def target_velocity(z0, z1):
    a = z0.data if isinstance(z0, LatentSequence) else np.asarray(z0, dtype=np.float64)
    b = z1.data if isinstance(z1, LatentSequence) else np.asarray(z1, dtype=np.float64)
    return b - a


def full_mask(like: LatentSequence) -> np.ndarray:
    """All-ones mask except the first and last frames, which are zero."""
    m = np.ones(like.shape)
    m[0] = 0.0
    m[-1] = 0.0
    return m


def blend_mask(weights: MaskWeights, heatmap: LatentSequence) -> LatentSequence:
    mask = weights.full * full_mask(heatmap) + weights.heatmap * heatmap.data
    # the null mask is all zeros, so its weight contributes nothing
    return heatmap.with_data(mask)


@dataclass(frozen=True)
class Triplet:
    """Concatenated ``[reference, target, heatmap]`` latents and per-frame timesteps."""

    data: np.ndarray
    t_seq: np.ndarray
    spans: dict
    encoder: str = "identity"

    def slice(self, name: str, array=None) -> np.ndarray:
        s = self.spans[name]
        return (self.data if array is None else array)[s]

    def dense_timesteps(self) -> np.ndarray:
        """Timestep per token, shaped like ``data``."""
        return np.broadcast_to(self.t_seq[:, None, None, None], self.data.shape)

    def as_latent(self) -> LatentSequence:
        return LatentSequence(self.data, self.encoder)


def assemble_triplet(z_ref: LatentSequence, z_target_t: LatentSequence, heatmap: LatentSequence,
                     t: float) -> Triplet:
    check_compatible(z_ref, z_target_t, heatmap)
    lengths = [z_ref.frames, z_target_t.frames, heatmap.frames]
    edges = np.cumsum([0] + lengths)
    spans = {name: slice(int(edges[i]), int(edges[i + 1])) for i, name in enumerate(SPANS)}
    data = np.concatenate([z_ref.data, z_target_t.data, heatmap.data], axis=0)
    t_seq = np.zeros(edges[-1])
    t_seq[spans["target"]] = t
    return Triplet(data, t_seq, spans, z_target_t.encoder)


# ------------------------------------------------------------- oracles

class VelocityOracle(Protocol):
    def predict(self, triplet: Triplet) -> np.ndarray:
        """Velocity field over the whole triplet, same shape as ``triplet.data``."""


OracleLike = Union[VelocityOracle, Callable[[Triplet], np.ndarray]]


class TruthOracle:
    """Returns a held velocity on the target span.

    ``fill`` sets what the reference and heatmap spans receive, which lets
    tests prove those spans never reach the loss.
    """

    def __init__(self, delta, fill: float | np.ndarray | None = 0.0):
        self.delta = delta.data if isinstance(delta, LatentSequence) else np.asarray(delta, dtype=np.float64)
        self.fill = fill

    @classmethod
    def from_endpoints(cls, z0, z1, **kw):
        return cls(target_velocity(z0, z1), **kw)

    def predict(self, triplet: Triplet) -> np.ndarray:
        out = np.empty_like(triplet.data)
        out[...] = 0.0 if self.fill is None else self.fill
        out[triplet.spans["target"]] = self.delta
        return out


class ZeroOracle:
    def predict(self, triplet: Triplet) -> np.ndarray:
        return np.zeros_like(triplet.data)


class LinearOracle:
    """``v = gain * x + bias`` over the whole sequence; a simple deterministic mock."""

    def __init__(self, gain: float = 1.0, bias: float = 0.0):
        self.gain = gain
        self.bias = bias

    def predict(self, triplet: Triplet) -> np.ndarray:
        return self.gain * triplet.data + self.bias


class PathOracle:
    """Exact conditional velocity of the linear path toward a known ``z0``.

    At time ``t`` the straight line through ``z_t`` and ``z0`` has velocity
    ``(z_t - z0) / t``; Euler integration with it recovers ``z0`` exactly.
    """

    def __init__(self, z0):
        self.z0 = z0.data if isinstance(z0, LatentSequence) else np.asarray(z0, dtype=np.float64)

    def predict(self, triplet: Triplet) -> np.ndarray:
        out = np.zeros_like(triplet.data)
        t = float(triplet.t_seq[triplet.spans["target"]][0])
        zt = triplet.slice("target")
        out[triplet.spans["target"]] = (zt - self.z0) / t if t > 0 else 0.0
        return out


def _predict(oracle: OracleLike, triplet: Triplet) -> np.ndarray:
    fn = oracle.predict if hasattr(oracle, "predict") else oracle
    out = np.asarray(fn(triplet), dtype=np.float64)
    if out.shape != triplet.data.shape:
        raise ShapeMismatch(f"oracle returned {out.shape}, expected {triplet.data.shape}")
    return out


def masked_fm_loss(oracle: OracleLike, z_ref: LatentSequence, z0: LatentSequence, z1: LatentSequence,
                   t: float, heatmap: LatentSequence) -> float:
    """Mean squared error between the target slice of the prediction and ``z1 - z0``.

    Predictions on the reference and heatmap spans never enter the loss.
    """
    if not 0.0 < t <= 1.0:
        raise ValueError("t must lie in (0, 1]")
    zt = fm_path(z0, z1, t)
    triplet = assemble_triplet(z_ref, zt, heatmap, t)
    pred = _predict(oracle, triplet)
    v_target = triplet.slice("target", pred)
    return float(np.mean((v_target - target_velocity(z0, z1)) ** 2))


def sample(oracle: OracleLike, z_ref: LatentSequence, heatmap: LatentSequence, cfg: ScheduleConfig,
           z1: LatentSequence, callback=None) -> LatentSequence:
    """Euler-integrate the target span from noise (t=1) to data (t=0).

    Each step reassembles the triplet with that step's blended mask.
    ``callback(step, t, z)`` is called after every update if given.
    """
    n = cfg.steps
    z = z1.data.copy()
    dt = 1.0 / n
    for i, t in enumerate(step_times(n)):
        mask = blend_mask(schedule_weights(i, cfg), heatmap)
        triplet = assemble_triplet(z_ref, z1.with_data(z), mask, float(t))
        v = triplet.slice("target", _predict(oracle, triplet))
        z = z - dt * v
        if callback is not None:
            callback(i, float(t), z)
    return z1.with_data(z)
