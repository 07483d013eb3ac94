"""Camera geometry, rigid transforms, and the RGB-D frame data model.

Conventions: camera looks down +z, u is the image column (maps to +x),
v is the image row (maps to +y). Depth is metric (meters); a depth of 0
marks an invalid pixel (Kinect convention) and every downstream stage
skips such pixels.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    DegenerateDirectionError,
    DimensionMismatchError,
    InvalidDepthError,
    OutOfBoundsError,
)

_ORTHO_TOL = 1e-9


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
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError(f"focal lengths must be positive, got fx={self.fx}, fy={self.fy}")
        if not (0 <= self.cx < self.width) or not (0 <= self.cy < self.height):
            raise ValueError(
                f"principal point ({self.cx}, {self.cy}) outside {self.width}x{self.height} image"
            )

    def to_dict(self) -> dict:
        return {
            "fx": self.fx, "fy": self.fy, "cx": self.cx, "cy": self.cy,
            "width": self.width, "height": self.height,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CameraIntrinsics":
        return cls(
            fx=float(d["fx"]), fy=float(d["fy"]), cx=float(d["cx"]), cy=float(d["cy"]),
            width=int(d["width"]), height=int(d["height"]),
        )


# Typical Kinect/Xtion intrinsics for 640x480; overridable via an intrinsics file.
DEFAULT_INTRINSICS = CameraIntrinsics(fx=525.0, fy=525.0, cx=319.5, cy=239.5, width=640, height=480)


@dataclass(frozen=True)
class Point3:
    """A 3-D point in camera coordinates, meters."""

    x: float
    y: float
    z: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y) and math.isfinite(self.z)):
            raise ValueError(f"non-finite point ({self.x}, {self.y}, {self.z})")

    def to_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z], dtype=np.float64)

    @classmethod
    def from_array(cls, a) -> "Point3":
        return cls(float(a[0]), float(a[1]), float(a[2]))


class RgbdFrame:
    """A registered grayscale + metric depth image pair with intrinsics.

    gray: (H, W) uint8 intensities. depth: (H, W) float64 meters, 0 = invalid.
    """

    def __init__(self, gray: np.ndarray, depth: np.ndarray, intrinsics: CameraIntrinsics):
        gray = np.asarray(gray)
        depth = np.asarray(depth, dtype=np.float64)
        if gray.ndim != 2 or depth.ndim != 2:
            raise DimensionMismatchError("gray and depth must be 2-D arrays")
        if gray.shape != depth.shape:
            raise DimensionMismatchError(
                f"gray shape {gray.shape} != depth shape {depth.shape}"
            )
        if gray.shape != (intrinsics.height, intrinsics.width):
            raise DimensionMismatchError(
                f"image shape {gray.shape} does not match intrinsics "
                f"{intrinsics.height}x{intrinsics.width}"
            )
        if not np.all(np.isfinite(depth)):
            raise ValueError("depth contains non-finite values")
        if np.any(depth < 0):
            raise ValueError("depth contains negative values")
        if gray.dtype != np.uint8:
            if np.any(gray < 0) or np.any(gray > 255):
                raise ValueError("gray values must lie in [0, 255]")
            gray = np.rint(gray).astype(np.uint8)
        self.gray = gray
        self.depth = depth
        self.intrinsics = intrinsics
        self.gray.flags.writeable = False
        self.depth.flags.writeable = False

    @property
    def valid_depth(self) -> np.ndarray:
        return self.depth > 0


class Pose:
    """A rigid transform p -> R @ p + t with an orthonormal right-handed R."""

    def __init__(self, rotation: np.ndarray, translation: np.ndarray):
        r = np.asarray(rotation, dtype=np.float64).reshape(3, 3).copy()
        t = np.asarray(translation, dtype=np.float64).reshape(3).copy()
        if np.max(np.abs(r.T @ r - np.eye(3))) > _ORTHO_TOL:
            raise ValueError("rotation is not orthonormal within 1e-9")
        if abs(np.linalg.det(r) - 1.0) > _ORTHO_TOL:
            raise ValueError("rotation determinant is not +1 within 1e-9")
        r.flags.writeable = False
        t.flags.writeable = False
        self.rotation = r
        self.translation = t

    @classmethod
    def identity(cls) -> "Pose":
        return cls(np.eye(3), np.zeros(3))

    def compose(self, other: "Pose") -> "Pose":
        """self after other: (self @ other)(p) = self(other(p))."""
        return Pose(self.rotation @ other.rotation,
                    self.rotation @ other.translation + self.translation)

    def inverse(self) -> "Pose":
        return Pose(self.rotation.T, -self.rotation.T @ self.translation)

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Transform an (N, 3) or (3,) array of points."""
        pts = np.asarray(points, dtype=np.float64)
        return pts @ self.rotation.T + self.translation

    def to_dict(self) -> dict:
        return {"rotation": self.rotation.tolist(), "translation": self.translation.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "Pose":
        rot = np.asarray(d["rotation"], dtype=np.float64)
        if rot.size != 9:
            raise ValueError("rotation must hold 9 entries (row-major 3x3)")
        return cls(rot.reshape(3, 3), np.asarray(d["translation"], dtype=np.float64))


def rot_x(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rot_y(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rot_z(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def backproject(u: float, v: float, d: float, k: CameraIntrinsics) -> Point3:
    """Lift a pixel with metric depth to a 3-D camera-frame point."""
    if d <= 0:
        raise InvalidDepthError(f"depth must be positive, got {d}")
    if not (0 <= u < k.width and 0 <= v < k.height):
        raise OutOfBoundsError(f"pixel ({u}, {v}) outside {k.width}x{k.height} image")
    return Point3((u - k.cx) * d / k.fx, (v - k.cy) * d / k.fy, d)


def project_point(p: Point3, k: CameraIntrinsics) -> tuple[float, float]:
    """Forward pinhole projection of a camera-frame point to pixel coordinates."""
    if p.z <= 0:
        raise InvalidDepthError(f"point depth must be positive, got z={p.z}")
    return (k.fx * p.x / p.z + k.cx, k.fy * p.y / p.z + k.cy)


def project_direction(direction, k: CameraIntrinsics) -> np.ndarray:
    """Image of a 3-D direction on the image plane, as a unit (du, dv) vector.

    Uses the translation-free directional projection (fx*dx, fy*dy), which is
    orientation-stable for small patches; the z component does not matter.
    """
    d = np.asarray(direction, dtype=np.float64).reshape(3)
    norm = np.linalg.norm(d)
    if norm == 0:
        raise DegenerateDirectionError("zero direction vector")
    du = k.fx * d[0]
    dv = k.fy * d[1]
    plane_norm = math.hypot(du, dv)
    if plane_norm <= 1e-9 * norm * max(k.fx, k.fy):
        raise DegenerateDirectionError("direction is parallel to the optical axis")
    return np.array([du / plane_norm, dv / plane_norm])


def transform(p: Point3, pose: Pose) -> Point3:
    """Apply a rigid transform to a point: R @ p + t."""
    return Point3.from_array(pose.rotation @ p.to_array() + pose.translation)


def load_intrinsics(path) -> CameraIntrinsics:
    with open(path, "r", encoding="utf-8") as f:
        return CameraIntrinsics.from_dict(json.load(f))


def save_intrinsics(k: CameraIntrinsics, path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(k.to_dict(), f, indent=2)
        f.write("\n")


def load_pose(path) -> Pose:
    with open(path, "r", encoding="utf-8") as f:
        return Pose.from_dict(json.load(f))


def save_pose(pose: Pose, path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(pose.to_dict(), f, indent=2)
        f.write("\n")
