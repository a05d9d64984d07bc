"""Pinhole camera models, rigid poses, projection and the shared frustum test.

Conventions used throughout the package:

  World frame:  right-handed, z up, units in meters.
  Camera frame: right-handed, x right, y down, z forward (optical axis).
  Pose:         camera-to-world transform, p_world = R @ p_cam + t.
  Angles:       degrees at module boundaries, radians internally.
  Yaw:          rotation about world z, measured from +x toward +y.
  Pitch:        elevation of the optical axis, positive looking up.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError

_ORTHONORMAL_TOL = 1e-6


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole intrinsics; focal lengths and principal point in pixels."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise InvalidInputError(f"focal lengths must be positive, got fx={self.fx}, fy={self.fy}")
        if self.width < 1 or self.height < 1:
            raise InvalidInputError(f"image size must be at least 1x1, got {self.width}x{self.height}")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise InvalidInputError(
                f"principal point ({self.cx}, {self.cy}) outside image {self.width}x{self.height}"
            )

    @classmethod
    def from_fov(cls, width: int, height: int, fov_deg: float) -> "CameraIntrinsics":
        """Square-pixel intrinsics whose horizontal field of view is `fov_deg`."""
        f = (width / 2.0) / math.tan(math.radians(fov_deg) / 2.0)
        return cls(fx=f, fy=f, cx=width / 2.0, cy=height / 2.0, width=width, height=height)


@dataclass(frozen=True)
class Pixel:
    """Continuous image coordinates; bounds checks are the caller's job."""

    x: float
    y: float


@dataclass(frozen=True)
class FrustumSpec:
    """Circular viewing cone: full opening angle plus a near/far depth range."""

    fov_deg: float
    max_depth: float
    min_depth: float = 0.05

    def __post_init__(self):
        if not (0.0 < self.fov_deg < 180.0):
            raise InvalidInputError(f"fov must be in (0, 180) degrees, got {self.fov_deg}")
        if not (0.0 < self.min_depth < self.max_depth):
            raise InvalidInputError(
                f"need 0 < min_depth < max_depth, got {self.min_depth}, {self.max_depth}"
            )

    @property
    def half_angle_rad(self) -> float:
        return math.radians(self.fov_deg) / 2.0

    @property
    def cos_half_angle(self) -> float:
        return math.cos(self.half_angle_rad)


def _as_matrix(rotation) -> np.ndarray:
    r = np.asarray(rotation, dtype=np.float64)
    if r.shape != (3, 3):
        raise InvalidInputError(f"rotation must be 3x3, got shape {r.shape}")
    if not np.allclose(r @ r.T, np.eye(3), atol=_ORTHONORMAL_TOL):
        raise InvalidInputError("rotation is not orthonormal")
    if abs(np.linalg.det(r) - 1.0) > _ORTHONORMAL_TOL:
        raise InvalidInputError("rotation determinant is not +1 (improper rotation)")
    return r


@dataclass(frozen=True)
class Pose:
    """Rigid camera-to-world transform. Immutable; arrays are write-protected."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        r = _as_matrix(self.rotation)
        t = np.asarray(self.translation, dtype=np.float64).reshape(3)
        if not np.all(np.isfinite(t)):
            raise InvalidInputError("translation must be finite")
        r.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls) -> "Pose":
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_yaw_pitch(cls, position, yaw_deg: float, pitch_deg: float) -> "Pose":
        """Camera at `position` looking along the (yaw, pitch) direction, world z as up.

        Degenerates (|pitch| -> 90) fall back to a yaw-aligned right vector.
        """
        fwd = direction_from_yaw_pitch(yaw_deg, pitch_deg)
        up = np.array([0.0, 0.0, 1.0])
        right = np.cross(fwd, up)
        n = np.linalg.norm(right)
        if n < 1e-9:
            y = math.radians(yaw_deg)
            right = np.array([-math.sin(y), math.cos(y), 0.0])
        else:
            right = right / n
        down = np.cross(fwd, right)
        return cls(np.column_stack([right, down, fwd]), np.asarray(position, dtype=np.float64))

    def compose(self, other: "Pose") -> "Pose":
        """self ∘ other: apply `other` first, then self."""
        return Pose(self.rotation @ other.rotation, self.rotation @ other.translation + self.translation)

    def inverse(self) -> "Pose":
        rt = self.rotation.T
        return Pose(rt, -rt @ self.translation)

    @property
    def forward(self) -> np.ndarray:
        """Optical axis in world coordinates (camera +z)."""
        return self.rotation[:, 2]

    def to_world(self, points_cam: np.ndarray) -> np.ndarray:
        p = np.asarray(points_cam, dtype=np.float64)
        return p @ self.rotation.T + self.translation

    def to_camera(self, points_world: np.ndarray) -> np.ndarray:
        p = np.asarray(points_world, dtype=np.float64)
        return (p - self.translation) @ self.rotation


def direction_from_yaw_pitch(yaw_deg: float, pitch_deg: float) -> np.ndarray:
    y, p = math.radians(yaw_deg), math.radians(pitch_deg)
    return np.array([math.cos(p) * math.cos(y), math.cos(p) * math.sin(y), math.sin(p)])


def yaw_pitch_from_direction(direction) -> tuple[float, float]:
    d = np.asarray(direction, dtype=np.float64)
    n = np.linalg.norm(d)
    if n < 1e-12:
        raise InvalidInputError("zero-length direction")
    d = d / n
    yaw = math.degrees(math.atan2(d[1], d[0])) % 360.0
    pitch = math.degrees(math.asin(np.clip(d[2], -1.0, 1.0)))
    return yaw, pitch


def back_project(pixel: Pixel, depth: float, intrinsics: CameraIntrinsics, pose: Pose) -> np.ndarray:
    """Lift a pixel at a given camera depth to a world point: T(depth * K^-1 [x, y, 1])."""
    if not (np.isfinite(depth) and depth > 0):
        raise InvalidInputError(f"depth must be finite and positive, got {depth}")
    cam = np.array(
        [
            depth * (pixel.x - intrinsics.cx) / intrinsics.fx,
            depth * (pixel.y - intrinsics.cy) / intrinsics.fy,
            depth,
        ]
    )
    return pose.to_world(cam)


def back_project_pixels(
    xs: np.ndarray, ys: np.ndarray, depths: np.ndarray, intrinsics: CameraIntrinsics, pose: Pose
) -> np.ndarray:
    """Vectorized back-projection of N pixels; returns (N, 3) world points."""
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    depths = np.asarray(depths, dtype=np.float64)
    cam = np.stack(
        [
            depths * (xs - intrinsics.cx) / intrinsics.fx,
            depths * (ys - intrinsics.cy) / intrinsics.fy,
            depths,
        ],
        axis=-1,
    )
    return pose.to_world(cam)


def project(point, intrinsics: CameraIntrinsics, pose: Pose) -> tuple[Pixel, float] | None:
    """Project a world point; returns (pixel, camera depth), or None if behind the camera."""
    p = np.asarray(point, dtype=np.float64)
    if not np.all(np.isfinite(p)):
        raise InvalidInputError("point must be finite")
    cam = pose.to_camera(p)
    z = cam[2]
    if z <= 0:
        return None
    return Pixel(intrinsics.fx * cam[0] / z + intrinsics.cx, intrinsics.fy * cam[1] / z + intrinsics.cy), z


def in_frustum(points, pose: Pose, spec: FrustumSpec):
    """Conical frustum membership for one point (3,) or a batch (N, 3).

    True iff the camera-frame depth lies in [min_depth, max_depth] and the angle
    to the optical axis is at most half the field of view.
    """
    p = np.asarray(points, dtype=np.float64)
    single = p.ndim == 1
    cam = pose.to_camera(p.reshape(-1, 3))
    z = cam[:, 2]
    dist = np.linalg.norm(cam, axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        cos_angle = np.where(dist > 0, z / np.maximum(dist, 1e-300), 1.0)
    ok = (z >= spec.min_depth) & (z <= spec.max_depth) & (cos_angle >= spec.cos_half_angle)
    return bool(ok[0]) if single else ok
