"""Image and frame-directory I/O: 8-bit PNG and lossless float PFM."""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image

from .errors import DataError

FRAME_SUFFIXES = (".png", ".pfm")


def to_uint8(img) -> np.ndarray:
    return np.round(np.clip(np.asarray(img, dtype=np.float64), 0.0, 1.0) * 255.0).astype(np.uint8)


def write_png(path, img) -> None:
    Image.fromarray(to_uint8(img)).save(path, format="PNG")


def read_png(path) -> np.ndarray:
    with Image.open(path) as im:
        arr = np.asarray(im.convert("RGB") if im.mode not in ("L", "RGB") else im)
    return arr.astype(np.float64) / 255.0


def write_pfm(path, img) -> None:
    """Little-endian PFM; rows are stored bottom-to-top as the format requires."""
    arr = np.asarray(img, dtype="<f4")
    color = arr.ndim == 3
    h, w = arr.shape[:2]
    with open(path, "wb") as fh:
        fh.write(b"PF\n" if color else b"Pf\n")
        fh.write(f"{w} {h}\n-1.0\n".encode("ascii"))
        fh.write(np.ascontiguousarray(arr[::-1]).tobytes())


def read_pfm(path) -> np.ndarray:
    with open(path, "rb") as fh:
        kind = fh.readline().strip()
        if kind not in (b"PF", b"Pf"):
            raise DataError(f"{path}: not a PFM file")
        w, h = map(int, fh.readline().split())
        scale = float(fh.readline())
        dtype = "<f4" if scale < 0 else ">f4"
        channels = 3 if kind == b"PF" else 1
        data = np.frombuffer(fh.read(), dtype=dtype, count=w * h * channels)
    shape = (h, w, 3) if channels == 3 else (h, w)
    return data.reshape(shape)[::-1].astype(np.float64)


def write_image(path, img) -> None:
    path = Path(path)
    if path.suffix.lower() == ".pfm":
        write_pfm(path, img)
    else:
        write_png(path, img)


def read_image(path) -> np.ndarray:
    path = Path(path)
    return read_pfm(path) if path.suffix.lower() == ".pfm" else read_png(path)


def read_frames(directory) -> np.ndarray:
    """Stack every PNG/PFM in ``directory`` (sorted by name) into ``(T, H, W, 3)``."""
    files = sorted(p for p in Path(directory).iterdir() if p.suffix.lower() in FRAME_SUFFIXES)
    if not files:
        raise DataError(f"no frames found in {directory}")
    frames = [read_image(p) for p in files]
    if len({f.shape for f in frames}) != 1:
        raise DataError(f"frames in {directory} differ in size")
    return np.stack(frames)


def write_frames(directory, frames, suffix=".png") -> list[Path]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for i, frame in enumerate(frames):
        p = directory / f"frame_{i:05d}{suffix}"
        write_image(p, frame)
        paths.append(p)
    return paths
