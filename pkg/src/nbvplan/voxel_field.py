"""Voxel grid, geometric uncertainty field, fused utility field and frustum decay.

Fields are single-writer: splatting and decay mutate their arrays in place and
must not be interleaved with concurrent reads. Reads between mutations are safe.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .errors import FormatError, InvalidInputError
from .geometry import CameraIntrinsics, FrustumSpec, Pose, back_project_pixels, in_frustum

_SNAPSHOT_MAGIC = b"NBVF"
_SNAPSHOT_VERSION = 1


@dataclass(frozen=True)
class VoxelGrid:
    """Axis-aligned voxel lattice. `origin` is the min corner of voxel (0, 0, 0)."""

    origin: tuple[float, float, float]
    voxel_size: float
    dims: tuple[int, int, int]

    def __post_init__(self):
        if self.voxel_size <= 0:
            raise InvalidInputError(f"voxel_size must be positive, got {self.voxel_size}")
        if len(self.dims) != 3 or any(d < 1 for d in self.dims):
            raise InvalidInputError(f"dims must be three positive integers, got {self.dims}")
        object.__setattr__(self, "origin", tuple(float(v) for v in self.origin))
        object.__setattr__(self, "dims", tuple(int(d) for d in self.dims))

    @property
    def total_voxels(self) -> int:
        return self.dims[0] * self.dims[1] * self.dims[2]

    @property
    def origin_array(self) -> np.ndarray:
        return np.asarray(self.origin, dtype=np.float64)

    @property
    def extent(self) -> np.ndarray:
        """World-space edge lengths of the grid box."""
        return np.asarray(self.dims, dtype=np.float64) * self.voxel_size

    @property
    def center(self) -> np.ndarray:
        return self.origin_array + self.extent / 2.0

    @property
    def diagonal(self) -> float:
        return float(np.linalg.norm(self.extent))

    def world_to_index(self, points) -> np.ndarray:
        p = np.asarray(points, dtype=np.float64)
        return np.floor((p - self.origin_array) / self.voxel_size).astype(np.int64)

    def index_to_center(self, indices) -> np.ndarray:
        idx = np.asarray(indices, dtype=np.float64)
        return self.origin_array + (idx + 0.5) * self.voxel_size

    def in_bounds(self, indices) -> np.ndarray:
        idx = np.asarray(indices, dtype=np.int64).reshape(-1, 3)
        d = np.asarray(self.dims)
        ok = np.all((idx >= 0) & (idx < d), axis=1)
        return ok if np.asarray(indices).ndim == 2 else bool(ok[0])

    def linear_index(self, indices) -> np.ndarray:
        idx = np.asarray(indices, dtype=np.int64)
        return np.ravel_multi_index((idx[..., 0], idx[..., 1], idx[..., 2]), self.dims)

    def unravel(self, linear) -> np.ndarray:
        return np.stack(np.unravel_index(np.asarray(linear, dtype=np.int64), self.dims), axis=-1)

    def voxel_centers(self) -> np.ndarray:
        """All voxel centers in C (linear) order, shape (total_voxels, 3). Cached."""
        return _voxel_centers(self)


@lru_cache(maxsize=64)
def _voxel_centers(grid: VoxelGrid) -> np.ndarray:
    ii, jj, kk = np.indices(grid.dims, dtype=np.float64)
    idx = np.stack([ii.ravel(), jj.ravel(), kk.ravel()], axis=-1)
    centers = grid.origin_array + (idx + 0.5) * grid.voxel_size
    centers.setflags(write=False)
    return centers


@dataclass
class GeometricField:
    """Per-voxel geometric uncertainty in [0, 1]; unobserved voxels hold the 1.0 sentinel."""

    grid: VoxelGrid
    uncertainty: np.ndarray
    observation_count: np.ndarray

    @classmethod
    def empty(cls, grid: VoxelGrid) -> "GeometricField":
        return cls(
            grid=grid,
            uncertainty=np.ones(grid.dims, dtype=np.float64),
            observation_count=np.zeros(grid.dims, dtype=np.int32),
        )

    def copy(self) -> "GeometricField":
        return GeometricField(self.grid, self.uncertainty.copy(), self.observation_count.copy())


def normalize_confidence(raw: np.ndarray, valid: np.ndarray | None = None) -> np.ndarray:
    """Min-max normalize a raw confidence map over its valid pixels.

    Constant frames map to 1.0 on the valid set; invalid pixels come out 0.
    An empty valid set yields an all-zero map.
    """
    raw = np.asarray(raw, dtype=np.float64)
    if valid is None:
        valid = np.isfinite(raw)
    else:
        valid = np.asarray(valid, dtype=bool)
        if valid.shape != raw.shape:
            raise InvalidInputError(f"valid mask shape {valid.shape} != raw shape {raw.shape}")
    vals = raw[valid]
    if not np.all(np.isfinite(vals)) or (vals.size and vals.min() < 0):
        raise InvalidInputError("raw confidence must be finite and non-negative on valid pixels")
    out = np.zeros_like(raw)
    if vals.size == 0:
        return out
    lo, hi = vals.min(), vals.max()
    if hi > lo:
        out[valid] = (raw[valid] - lo) / (hi - lo)
    else:
        out[valid] = 1.0
    return out


def minmax_unit(values: np.ndarray) -> np.ndarray:
    """Min-max rescale to [0, 1]; a constant positive map becomes all ones, zero stays zero."""
    v = np.asarray(values, dtype=np.float64)
    lo, hi = v.min(), v.max()
    if hi > lo:
        return (v - lo) / (hi - lo)
    if hi > 0:
        return np.ones_like(v)
    return np.zeros_like(v)


def splat_confidence(
    depth_map: np.ndarray,
    confidence_map: np.ndarray,
    pose: Pose,
    intrinsics: CameraIntrinsics,
    field_: GeometricField,
    normalize: bool = True,
) -> GeometricField:
    """Back-project a depth frame and fold its confidence into the field.

    Each valid pixel (finite, positive depth) lands in exactly one voxel; that
    voxel's uncertainty becomes min(previous, 1 - confidence) and its observation
    count increments. Points outside the grid are dropped silently.
    """
    depth_map = np.asarray(depth_map, dtype=np.float64)
    confidence_map = np.asarray(confidence_map, dtype=np.float64)
    expected = (intrinsics.height, intrinsics.width)
    if depth_map.shape != expected or confidence_map.shape != expected:
        raise InvalidInputError(
            f"maps must be {expected}, got depth {depth_map.shape}, confidence {confidence_map.shape}"
        )
    valid = np.isfinite(depth_map) & (depth_map > 0)
    if not valid.any():
        return field_
    conf = normalize_confidence(confidence_map, valid) if normalize else confidence_map
    rows, cols = np.nonzero(valid)
    points = back_project_pixels(cols + 0.5, rows + 0.5, depth_map[valid], intrinsics, pose)
    idx = field_.grid.world_to_index(points)
    inb = field_.grid.in_bounds(idx)
    idx = idx[inb]
    u_new = 1.0 - conf[valid][inb]
    np.minimum.at(field_.uncertainty, (idx[:, 0], idx[:, 1], idx[:, 2]), u_new)
    np.add.at(field_.observation_count, (idx[:, 0], idx[:, 1], idx[:, 2]), 1)
    return field_


@dataclass
class FusedField:
    """Weighted sum of geometric and semantic uncertainty plus a global floor."""

    grid: VoxelGrid
    utility: np.ndarray
    w_geo: float
    w_sem: float
    gamma: float

    def total(self) -> float:
        return float(self.utility.sum())

    def copy(self) -> "FusedField":
        return FusedField(self.grid, self.utility.copy(), self.w_geo, self.w_sem, self.gamma)

    @property
    def flat(self) -> np.ndarray:
        return self.utility.reshape(-1)


def fuse(
    geo: GeometricField,
    sem: np.ndarray | None,
    w_geo: float,
    w_sem: float,
    gamma: float,
) -> FusedField:
    """utility(v) = w_geo * geo(v) + w_sem * sem(v) + gamma. `sem=None` means a zero field."""
    if min(w_geo, w_sem, gamma) < 0:
        raise InvalidInputError("fusion weights and gamma must be non-negative")
    if sem is None:
        sem = np.zeros(geo.grid.dims, dtype=np.float64)
    else:
        sem = np.asarray(sem, dtype=np.float64)
        if sem.shape != tuple(geo.grid.dims):
            raise InvalidInputError(f"semantic field shape {sem.shape} != grid dims {geo.grid.dims}")
    utility = w_geo * geo.uncertainty + w_sem * sem + gamma
    return FusedField(grid=geo.grid, utility=utility, w_geo=w_geo, w_sem=w_sem, gamma=gamma)


def apply_decay(field_: FusedField, pose: Pose, spec: FrustumSpec, eta: float) -> FusedField:
    """Scale every voxel whose center lies in the pose's frustum by (1 - eta), in place."""
    if not (0.0 < eta < 1.0):
        raise InvalidInputError(f"eta must be in (0, 1), got {eta}")
    inside = in_frustum(field_.grid.voxel_centers(), pose, spec)
    flat = field_.flat
    flat[inside] *= 1.0 - eta
    return field_


def write_field_snapshot(path, grid: VoxelGrid, values: np.ndarray) -> None:
    """Flat little-endian snapshot: header (origin, voxel size, dims) + float32 body."""
    values = np.asarray(values)
    if values.shape != tuple(grid.dims):
        raise InvalidInputError(f"values shape {values.shape} != grid dims {grid.dims}")
    header = struct.pack(
        "<4sI3dd3I", _SNAPSHOT_MAGIC, _SNAPSHOT_VERSION, *grid.origin, grid.voxel_size, *grid.dims
    )
    with open(path, "wb") as f:
        f.write(header)
        f.write(np.ascontiguousarray(values, dtype="<f4").tobytes())


def read_field_snapshot(path) -> tuple[VoxelGrid, np.ndarray]:
    header_size = struct.calcsize("<4sI3dd3I")
    with open(path, "rb") as f:
        header = f.read(header_size)
        if len(header) < header_size:
            raise FormatError("snapshot truncated before header end")
        magic, version, ox, oy, oz, vs, dx, dy, dz = struct.unpack("<4sI3dd3I", header)
        if magic != _SNAPSHOT_MAGIC:
            raise FormatError(f"bad magic {magic!r}")
        if version != _SNAPSHOT_VERSION:
            raise FormatError(f"unsupported snapshot version {version}")
        grid = VoxelGrid(origin=(ox, oy, oz), voxel_size=vs, dims=(dx, dy, dz))
        body = f.read()
    expected = grid.total_voxels * 4
    if len(body) != expected:
        raise FormatError(f"snapshot body has {len(body)} bytes, expected {expected}")
    values = np.frombuffer(body, dtype="<f4").reshape(grid.dims).astype(np.float32)
    return grid, values
