"""3D Gaussian Splatting checkpoints: the in-memory cloud, cameras and PLY I/O.

The PLY layout follows the reference 3DGS trainer: one ``vertex`` element with
``x y z nx ny nz f_dc_0..2 f_rest_* opacity scale_0..2 rot_0..3``, all float32,
binary little endian.  Opacities are stored as logits and scales as natural
logs; :func:`activate` maps them to physical values.
"""

from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass

import numpy as np

from .errors import IoFailure, MalformedPly, NonFiniteValue, UnsupportedShDegree

SH_BASIS = {0: 1, 1: 4, 2: 9, 3: 16}
_QUAT_TOL = 1e-6

_PLY_TYPES = {
    "float": "<f4", "float32": "<f4", "double": "<f8", "float64": "<f8",
    "uchar": "u1", "uint8": "u1", "char": "i1", "int8": "i1",
    "ushort": "<u2", "uint16": "<u2", "short": "<i2", "int16": "<i2",
    "uint": "<u4", "uint32": "<u4", "int": "<i4", "int32": "<i4",
}


def sh_degree_for_basis(n_basis: int) -> int:
    for deg, b in SH_BASIS.items():
        if b == n_basis:
            return deg
    raise UnsupportedShDegree(f"{n_basis} SH basis terms do not match any degree in 0..3")


def _frozen(a, shape_tail, name, dtype=np.float32):
    arr = np.array(a, dtype=dtype, copy=True)
    if arr.ndim != len(shape_tail) + 1 or arr.shape[1:] != tuple(shape_tail):
        raise ValueError(f"{name} must have shape (N, {', '.join(map(str, shape_tail))}), got {arr.shape}")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class GaussianCloud:
    """Stored 3DGS parameters of one scene.

    All arrays are float32 and read-only.  ``sh_coeffs`` has shape
    ``(N, 3, B)`` with ``B = (deg + 1) ** 2`` and index 0 the DC term.
    """

    positions: np.ndarray
    log_scales: np.ndarray
    rotations: np.ndarray
    opacity_logits: np.ndarray
    sh_coeffs: np.ndarray

    def __post_init__(self):
        pos = _frozen(self.positions, (3,), "positions")
        n = pos.shape[0]
        sh = np.array(self.sh_coeffs, dtype=np.float32, copy=True)
        if sh.ndim != 3 or sh.shape[1] != 3:
            raise ValueError(f"sh_coeffs must have shape (N, 3, B), got {sh.shape}")
        sh_degree_for_basis(sh.shape[2])
        sh.setflags(write=False)
        fields = {
            "positions": pos,
            "log_scales": _frozen(self.log_scales, (3,), "log_scales"),
            "rotations": _frozen(self.rotations, (4,), "rotations"),
            "opacity_logits": _frozen(np.reshape(self.opacity_logits, (-1,)), (), "opacity_logits"),
            "sh_coeffs": sh,
        }
        for name, arr in fields.items():
            if arr.shape[0] != n:
                raise ValueError(f"{name} has {arr.shape[0]} rows, positions has {n}")
            object.__setattr__(self, name, arr)

    def __len__(self):
        return self.positions.shape[0]

    @property
    def n(self) -> int:
        return len(self)

    @property
    def sh_degree(self) -> int:
        return sh_degree_for_basis(self.sh_coeffs.shape[2])

    @classmethod
    def empty(cls, sh_degree: int = 3) -> "GaussianCloud":
        b = SH_BASIS[sh_degree]
        return cls(np.zeros((0, 3)), np.zeros((0, 3)), np.zeros((0, 4)), np.zeros(0), np.zeros((0, 3, b)))

    def replace(self, **changes) -> "GaussianCloud":
        return dataclasses.replace(self, **changes)

    def subset(self, index) -> "GaussianCloud":
        index = np.asarray(index)
        return GaussianCloud(
            self.positions[index], self.log_scales[index], self.rotations[index],
            self.opacity_logits[index], self.sh_coeffs[index],
        )

    def validate(self) -> "GaussianCloud":
        for f in dataclasses.fields(self):
            if not np.all(np.isfinite(getattr(self, f.name))):
                raise NonFiniteValue(f"non-finite values in {f.name}")
        return self

    def normalized(self) -> "GaussianCloud":
        """Return a copy whose quaternions have unit norm.

        Rows already within 1e-6 of unit length are left untouched, which
        makes the operation idempotent bit for bit.
        """
        q = self.rotations.astype(np.float64)
        norms = np.linalg.norm(q, axis=1)
        if np.any(norms == 0) or not np.all(np.isfinite(norms)):
            raise NonFiniteValue("zero-length or non-finite quaternion")
        fix = np.abs(norms - 1.0) > _QUAT_TOL
        if not fix.any():
            return self
        out = self.rotations.copy()
        out[fix] = (q[fix] / norms[fix, None]).astype(np.float32)
        return self.replace(rotations=out)

    def __eq__(self, other):
        if not isinstance(other, GaussianCloud):
            return NotImplemented
        return all(
            getattr(self, f.name).shape == getattr(other, f.name).shape
            and np.array_equal(getattr(self, f.name).view(np.uint32), getattr(other, f.name).view(np.uint32))
            for f in dataclasses.fields(self)
        )

    __hash__ = None


@dataclass(frozen=True)
class Activated:
    scales: np.ndarray
    opacities: np.ndarray


def sigmoid(x):
    x = np.asarray(x, dtype=np.float64)
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def logit(p):
    p = np.asarray(p, dtype=np.float64)
    return np.log(p) - np.log1p(-p)


def activate(cloud: GaussianCloud) -> Activated:
    """Physical scales (``exp``) and opacities (``sigmoid``), in float64."""
    return Activated(
        scales=np.exp(cloud.log_scales.astype(np.float64)),
        opacities=sigmoid(cloud.opacity_logits),
    )


def quat_to_matrix(q):
    """Rotation matrices from (..., 4) quaternions in (w, x, y, z) order.

    Quaternions are normalised first, as the rasterizer does.
    """
    q = np.asarray(q, dtype=np.float64)
    q = q / np.linalg.norm(q, axis=-1, keepdims=True)
    w, x, y, z = np.moveaxis(q, -1, 0)
    return np.stack([
        np.stack([1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)], -1),
        np.stack([2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)], -1),
        np.stack([2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)], -1),
    ], -2)


@dataclass(frozen=True, eq=False)
class PinholeCamera:
    """World-to-camera rotation, camera centre and pinhole intrinsics.

    Camera space is x right, y down, z forward.  Pixel ``(col, row)`` has its
    centre at integer coordinates, so a point on the optical axis lands at
    ``(cx, cy)``.
    """

    rotation: np.ndarray
    center: np.ndarray
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        r = np.array(self.rotation, dtype=np.float64).reshape(3, 3)
        c = np.array(self.center, dtype=np.float64).reshape(3)
        r.setflags(write=False)
        c.setflags(write=False)
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "center", c)
        if not np.allclose(r @ r.T, np.eye(3), atol=1e-6) or np.linalg.det(r) < 0:
            raise ValueError("camera rotation must be a proper orthonormal matrix")
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")
        if int(self.width) < 1 or int(self.height) < 1:
            raise ValueError("image size must be at least 1x1")
        object.__setattr__(self, "width", int(self.width))
        object.__setattr__(self, "height", int(self.height))

    @property
    def forward(self) -> np.ndarray:
        """Viewing direction in world space."""
        return self.rotation[2].copy()

    def world_to_camera(self, points):
        return (np.asarray(points, dtype=np.float64) - self.center) @ self.rotation.T

    def scaled(self, factor: int) -> "PinholeCamera":
        """Same pose at ``1/factor`` resolution with matching intrinsics.

        Pixel centres sit at integer coordinates, so the principal point maps
        as ``(c + 0.5) / factor - 0.5``.
        """
        return PinholeCamera(
            self.rotation, self.center, self.fx / factor, self.fy / factor,
            (self.cx + 0.5) / factor - 0.5, (self.cy + 0.5) / factor - 0.5,
            max(1, self.width // factor), max(1, self.height // factor),
        )

    def with_pose(self, rotation, center) -> "PinholeCamera":
        return PinholeCamera(rotation, center, self.fx, self.fy, self.cx, self.cy, self.width, self.height)

    @classmethod
    def look_at(cls, eye, target, up=(0.0, -1.0, 0.0), *, fx, fy=None, width, height, cx=None, cy=None):
        eye = np.asarray(eye, dtype=np.float64)
        fwd = np.asarray(target, dtype=np.float64) - eye
        fwd /= np.linalg.norm(fwd)
        right = np.cross(up, fwd)
        if np.linalg.norm(right) < 1e-9:
            right = np.cross((1.0, 0.0, 0.0), fwd)
        right /= np.linalg.norm(right)
        down = np.cross(fwd, right)
        rot = np.stack([right, down, fwd])
        return cls(
            rot, eye, fx, fy if fy is not None else fx,
            (width - 1) / 2 if cx is None else cx, (height - 1) / 2 if cy is None else cy,
            width, height,
        )

    def to_dict(self) -> dict:
        return {
            "R": self.rotation.ravel().tolist(), "C": self.center.tolist(),
            "fx": self.fx, "fy": self.fy, "cx": self.cx, "cy": self.cy,
            "width": self.width, "height": self.height,
        }


# ---------------------------------------------------------------- PLY I/O

def ply_property_names(sh_degree: int) -> list[str]:
    n_rest = 3 * (SH_BASIS[sh_degree] - 1)
    return (
        ["x", "y", "z", "nx", "ny", "nz", "f_dc_0", "f_dc_1", "f_dc_2"]
        + [f"f_rest_{i}" for i in range(n_rest)]
        + ["opacity", "scale_0", "scale_1", "scale_2", "rot_0", "rot_1", "rot_2", "rot_3"]
    )


def _read_header(fh):
    first = fh.readline()
    if first.strip() != b"ply":
        raise MalformedPly("missing 'ply' magic")
    fmt = None
    elements = []  # [name, count, [(prop, dtype)]]
    while True:
        line = fh.readline()
        if not line:
            raise MalformedPly("unterminated header")
        tokens = line.decode("ascii", "replace").split()
        if not tokens or tokens[0] in ("comment", "obj_info"):
            continue
        key = tokens[0]
        if key == "end_header":
            break
        if key == "format":
            fmt = tuple(tokens[1:])
        elif key == "element":
            if len(tokens) != 3:
                raise MalformedPly(f"bad element line: {line!r}")
            elements.append([tokens[1], int(tokens[2]), []])
        elif key == "property":
            if not elements:
                raise MalformedPly("property before element")
            if tokens[1] == "list":
                raise MalformedPly("list properties are not supported")
            if len(tokens) != 3 or tokens[1] not in _PLY_TYPES:
                raise MalformedPly(f"bad property line: {line!r}")
            elements[-1][2].append((tokens[2], _PLY_TYPES[tokens[1]]))
        else:
            raise MalformedPly(f"unknown header keyword {key!r}")
    if fmt != ("binary_little_endian", "1.0"):
        raise MalformedPly(f"unsupported PLY format {fmt}")
    if not elements or elements[0][0] != "vertex":
        raise MalformedPly("first element must be 'vertex'")
    return elements[0]


def load_ply(path) -> GaussianCloud:
    """Read a 3DGS checkpoint; quaternions are normalised and values validated."""
    try:
        with open(path, "rb") as fh:
            _, count, props = _read_header(fh)
            dtype = np.dtype(props)
            raw = fh.read(dtype.itemsize * count)
    except OSError as exc:
        raise IoFailure(str(exc)) from exc
    if len(raw) != dtype.itemsize * count:
        raise MalformedPly(f"expected {count} vertices, file is truncated")
    data = np.frombuffer(raw, dtype=dtype, count=count)
    names = set(dtype.names)
    required = ["x", "y", "z", "f_dc_0", "f_dc_1", "f_dc_2", "opacity",
                "scale_0", "scale_1", "scale_2", "rot_0", "rot_1", "rot_2", "rot_3"]
    missing = [p for p in required if p not in names]
    if missing:
        raise MalformedPly(f"missing properties: {', '.join(missing)}")
    n_rest = sum(1 for p in names if p.startswith("f_rest_"))
    if n_rest % 3:
        raise UnsupportedShDegree(f"{n_rest} rest coefficients is not a multiple of 3")
    deg = sh_degree_for_basis(n_rest // 3 + 1)
    rest_names = [f"f_rest_{i}" for i in range(n_rest)]
    if any(p not in names for p in rest_names):
        raise MalformedPly("f_rest properties are not contiguously numbered")

    def cols(keys):
        if not keys:
            return np.zeros((count, 0), dtype=np.float32)
        return np.stack([data[k].astype(np.float32) for k in keys], axis=1)

    b = SH_BASIS[deg]
    sh = np.empty((count, 3, b), dtype=np.float32)
    sh[:, :, 0] = cols(["f_dc_0", "f_dc_1", "f_dc_2"])
    sh[:, :, 1:] = cols(rest_names).reshape(count, 3, b - 1)
    cloud = GaussianCloud(
        positions=cols(["x", "y", "z"]),
        log_scales=cols(["scale_0", "scale_1", "scale_2"]),
        rotations=cols(["rot_0", "rot_1", "rot_2", "rot_3"]),
        opacity_logits=data["opacity"].astype(np.float32),
        sh_coeffs=sh,
    )
    return cloud.validate().normalized()


def save_ply(cloud: GaussianCloud, path) -> None:
    names = ply_property_names(cloud.sh_degree)
    n = cloud.n
    b = cloud.sh_coeffs.shape[2]
    table = np.concatenate([
        cloud.positions,
        np.zeros((n, 3), dtype=np.float32),
        cloud.sh_coeffs[:, :, 0],
        cloud.sh_coeffs[:, :, 1:].reshape(n, 3 * (b - 1)),
        cloud.opacity_logits[:, None],
        cloud.log_scales,
        cloud.rotations,
    ], axis=1).astype("<f4")
    header = ["ply", "format binary_little_endian 1.0", f"element vertex {n}"]
    header += [f"property float {p}" for p in names]
    header.append("end_header")
    try:
        tmp = f"{os.fspath(path)}.tmp"
        with open(tmp, "wb") as fh:
            fh.write(("\n".join(header) + "\n").encode("ascii"))
            fh.write(np.ascontiguousarray(table).tobytes())
        os.replace(tmp, path)
    except OSError as exc:
        raise IoFailure(str(exc)) from exc
