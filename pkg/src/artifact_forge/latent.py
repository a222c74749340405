"""Latent sequences, non-neural encoders and the flat binary container format.

Container layout (little endian)::

    magic   4 bytes  b"AFLS"
    version uint32   1
    T C H W uint32 x 4
    dtype   4 bytes  b"f32\\0"
    tag_len uint32, then tag_len bytes of UTF-8 encoder tag
    data    T*C*H*W float32, row-major (frame, channel, row, col)
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import DataError, ShapeMismatch

MAGIC = b"AFLS"
VERSION = 1


@dataclass(frozen=True, eq=False)
class LatentSequence:
    """Frame-major token volume of shape ``(T, C, H, W)``."""

    data: np.ndarray
    encoder: str = "identity"

    def __post_init__(self):
        d = np.asarray(self.data, dtype=np.float64)
        if d.ndim != 4:
            raise ShapeMismatch(f"latent data must be 4-D (T, C, H, W), got {d.shape}")
        if not np.all(np.isfinite(d)):
            raise DataError("latent sequence contains non-finite values")
        object.__setattr__(self, "data", d)

    @property
    def shape(self):
        return self.data.shape

    @property
    def frames(self) -> int:
        return self.data.shape[0]

    @property
    def token_shape(self):
        return self.data.shape[1:]

    def with_data(self, data) -> "LatentSequence":
        return LatentSequence(data, self.encoder)

    def __len__(self):
        return self.frames


def check_compatible(*seqs):
    shapes = {s.token_shape for s in seqs}
    if len(shapes) != 1:
        raise ShapeMismatch(f"latent sequences disagree on (C, H, W): {sorted(shapes)}")


@dataclass(frozen=True)
class TemporalGrouping:
    """How frames are grouped into latent frames (1 = no temporal compression)."""

    chunk: int = 1
    leading_frame_alone: bool = False


class IdentityEncoder:
    """Pixels are latents: ``(T, H, W, 3)`` video <-> ``(T, 3, H, W)`` latent."""

    tag = "identity"
    grouping = TemporalGrouping()

    def encode(self, video) -> LatentSequence:
        v = np.asarray(video, dtype=np.float64)
        if v.ndim == 3:
            v = v[None]
        return LatentSequence(np.moveaxis(v, -1, 1), self.tag)

    def decode(self, latent: LatentSequence) -> np.ndarray:
        return np.moveaxis(latent.data, 1, -1)

    def encode_frame(self, frame) -> np.ndarray:
        return self.encode(np.asarray(frame)[None]).data[0]


class PatchifyEncoder(IdentityEncoder):
    """Fold non-overlapping ``s x s`` pixel patches into channels (lossless)."""

    def __init__(self, patch: int = 2):
        if patch < 1:
            raise ValueError("patch size must be >= 1")
        self.patch = patch
        self.tag = f"patchify{patch}"

    def encode(self, video) -> LatentSequence:
        v = np.asarray(video, dtype=np.float64)
        if v.ndim == 3:
            v = v[None]
        t, h, w, c = v.shape
        s = self.patch
        if h % s or w % s:
            raise ShapeMismatch(f"frame size {h}x{w} is not divisible by patch {s}")
        x = v.reshape(t, h // s, s, w // s, s, c).transpose(0, 5, 2, 4, 1, 3)
        return LatentSequence(x.reshape(t, c * s * s, h // s, w // s), self.tag)

    def decode(self, latent: LatentSequence) -> np.ndarray:
        t, cc, hh, ww = latent.shape
        s = self.patch
        c = cc // (s * s)
        x = latent.data.reshape(t, c, s, s, hh, ww).transpose(0, 4, 2, 5, 3, 1)
        return x.reshape(t, hh * s, ww * s, c)


def heatmap_latent(volume, like: LatentSequence) -> LatentSequence:
    """Bring a ``(T, H, W)`` heatmap to the latent grid of ``like``.

    Spatial size is matched by block averaging; the single channel is
    broadcast across all latent channels.
    """
    vol = np.asarray(volume, dtype=np.float64)
    t, h, w = vol.shape
    _, c, hh, ww = like.shape
    if h % hh or w % ww:
        raise ShapeMismatch(f"heatmap {h}x{w} cannot be pooled onto latent grid {hh}x{ww}")
    sy, sx = h // hh, w // ww
    pooled = vol.reshape(t, hh, sy, ww, sx).mean(axis=(2, 4))
    return LatentSequence(np.repeat(pooled[:, None], c, axis=1), like.encoder)


def write_latent(path, seq: LatentSequence) -> None:
    t, c, h, w = seq.shape
    tag = seq.encoder.encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC + struct.pack("<5I", VERSION, t, c, h, w) + b"f32\0" + struct.pack("<I", len(tag)) + tag)
        fh.write(np.ascontiguousarray(seq.data, dtype="<f4").tobytes())


def read_latent(path) -> LatentSequence:
    with open(path, "rb") as fh:
        head = fh.read(4 + 20 + 4 + 4)
        if len(head) < 32 or head[:4] != MAGIC:
            raise DataError(f"{path}: not a latent container")
        version, t, c, h, w = struct.unpack("<5I", head[4:24])
        if version != VERSION or head[24:28] != b"f32\0":
            raise DataError(f"{path}: unsupported version or dtype")
        (tag_len,) = struct.unpack("<I", head[28:32])
        tag = fh.read(tag_len).decode("utf-8")
        count = t * c * h * w
        data = np.frombuffer(fh.read(4 * count), dtype="<f4")
    if data.size != count:
        raise DataError(f"{path}: truncated latent data")
    return LatentSequence(data.reshape(t, c, h, w).astype(np.float64), tag)
