"""Pinhole cameras and ray generation.

Conventions: right-handed world, camera looks along its local -z axis with +y
up, poses are 4x4 camera-to-world matrices (row-major), and rays pass through
pixel centers. The scene occupies the unit cube [0,1]^3.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

SCENE_CENTER = np.array([0.5, 0.5, 0.5], dtype=np.float64)
SCENE_RADIUS = math.sqrt(3.0) / 2.0  # bounding sphere of the unit cube
NEAR_FAR_MARGIN = 1.1


class CameraError(ValueError):
    """Raised for invalid camera parameters or out-of-bounds pixels."""


@dataclass(frozen=True)
class Camera:
    """A pinhole camera with a camera-to-world pose."""

    pose: np.ndarray  # (4, 4) camera-to-world
    fov_x: float  # radians
    width: int
    height: int

    def __post_init__(self) -> None:
        pose = np.asarray(self.pose, dtype=np.float64)
        if pose.shape != (4, 4):
            raise CameraError(f"pose must be 4x4, got {pose.shape}")
        rot = pose[:3, :3]
        err = np.abs(rot.T @ rot - np.eye(3)).max()
        if err >= 1e-5:
            raise CameraError(f"rotation block not orthonormal (max err {err:.2e})")
        if np.linalg.det(rot) < 0:
            raise CameraError("rotation block has negative determinant (reflection)")
        if not 0.0 < self.fov_x < math.pi:
            raise CameraError(f"fov_x must lie in (0, pi), got {self.fov_x}")
        if self.width < 1 or self.height < 1:
            raise CameraError("image dimensions must be positive")
        object.__setattr__(self, "pose", pose)

    @property
    def focal(self) -> float:
        """Focal length in pixels (shared by both axes)."""
        return (self.width / 2.0) / math.tan(self.fov_x / 2.0)

    @property
    def origin(self) -> np.ndarray:
        return self.pose[:3, 3].copy()

    def to_dict(self) -> dict:
        return {
            "pose": self.pose.tolist(),
            "fov_x": self.fov_x,
            "width": self.width,
            "height": self.height,
        }

    @staticmethod
    def from_dict(d: dict) -> "Camera":
        return Camera(np.asarray(d["pose"], dtype=np.float64), float(d["fov_x"]),
                      int(d["width"]), int(d["height"]))


@dataclass
class Rays:
    """A batch of rays with shared near/far planes per ray."""

    origins: np.ndarray  # (N, 3)
    directions: np.ndarray  # (N, 3), unit norm
    near: np.ndarray  # (N,)
    far: np.ndarray  # (N,)

    def __post_init__(self) -> None:
        norms = np.linalg.norm(self.directions, axis=-1)
        if not np.allclose(norms, 1.0, atol=1e-6):
            raise CameraError("ray directions must be unit norm")
        if np.any(self.near < 0) or np.any(self.near >= self.far):
            raise CameraError("need 0 <= near < far for every ray")

    def __len__(self) -> int:
        return len(self.origins)


def near_far_for_origin(origin: np.ndarray) -> tuple[float, float]:
    """Near/far planes from the scene bounding sphere with a 10% margin."""
    dist = float(np.linalg.norm(np.asarray(origin, dtype=np.float64) - SCENE_CENTER))
    reach = SCENE_RADIUS * NEAR_FAR_MARGIN
    near = max(1e-3, dist - reach)
    far = dist + reach
    return near, far


def generate_rays(camera: Camera, pixels: np.ndarray) -> Rays:
    """Rays through the centers of the given (row, col) pixels.

    Pixel (0, 0) is the top-left corner; rows grow downward while the camera's
    +y axis points up, hence the sign flip on the vertical offset.
    """
    pix = np.asarray(pixels, dtype=np.int64).reshape(-1, 2)
    rows, cols = pix[:, 0], pix[:, 1]
    if (rows < 0).any() or (rows >= camera.height).any() or \
       (cols < 0).any() or (cols >= camera.width).any():
        raise CameraError("pixel index outside image bounds")

    f = camera.focal
    x = (cols + 0.5 - camera.width / 2.0) / f
    y = -(rows + 0.5 - camera.height / 2.0) / f
    dirs_cam = np.stack([x, y, -np.ones_like(x)], axis=-1)

    rot = camera.pose[:3, :3]
    dirs = dirs_cam @ rot.T
    dirs /= np.linalg.norm(dirs, axis=-1, keepdims=True)
    origin = camera.pose[:3, 3]
    origins = np.broadcast_to(origin, dirs.shape).copy()

    near, far = near_far_for_origin(origin)
    n = len(pix)
    return Rays(origins, dirs,
                np.full(n, near, dtype=np.float64),
                np.full(n, far, dtype=np.float64))


def all_pixels(camera: Camera) -> np.ndarray:
    """(H*W, 2) array of every (row, col) pixel, row-major."""
    rr, cc = np.meshgrid(np.arange(camera.height), np.arange(camera.width), indexing="ij")
    return np.stack([rr.ravel(), cc.ravel()], axis=-1)


def _look_at_pose(eye: np.ndarray, target: np.ndarray, up: np.ndarray) -> np.ndarray:
    forward = target - eye
    forward = forward / np.linalg.norm(forward)
    right = np.cross(forward, up)
    nr = np.linalg.norm(right)
    if nr < 1e-8:  # looking straight along up; pick another up vector
        up = np.array([0.0, 0.0, 1.0]) if abs(forward[2]) < 0.9 else np.array([1.0, 0.0, 0.0])
        right = np.cross(forward, up)
        nr = np.linalg.norm(right)
    right = right / nr
    true_up = np.cross(right, forward)
    pose = np.eye(4)
    pose[:3, 0] = right
    pose[:3, 1] = true_up
    pose[:3, 2] = -forward  # camera looks along -z
    pose[:3, 3] = eye
    return pose


def orbit_camera(azimuth: float, elevation: float, radius: float, fov_x: float,
                 width: int, height: int) -> Camera:
    """Camera on a sphere around the scene center, looking at it.

    Azimuth/elevation in radians; elevation 0 is the equator, +pi/2 the pole.
    """
    eye = SCENE_CENTER + radius * np.array([
        math.cos(elevation) * math.cos(azimuth),
        math.cos(elevation) * math.sin(azimuth),
        math.sin(elevation),
    ])
    pose = _look_at_pose(eye, SCENE_CENTER, np.array([0.0, 0.0, 1.0]))
    return Camera(pose, fov_x, width, height)


def sphere_cameras(count: int, radius: float, fov_x: float, width: int, height: int,
                   *, seed: int | None = None) -> list[Camera]:
    """Cameras evenly placed on a sphere enclosing the scene (Fibonacci spiral).

    A seed, when given, applies a deterministic rotation offset so train and
    held-out sets do not coincide.
    """
    golden = math.pi * (3.0 - math.sqrt(5.0))
    offset = 0.0
    if seed is not None:
        offset = (seed * 0.6180339887498949) % 1.0 * 2 * math.pi
    cams = []
    for i in range(count):
        z = 1.0 - 2.0 * (i + 0.5) / count  # uniform in [-1, 1]
        elevation = math.asin(max(-1.0, min(1.0, z)))
        azimuth = (golden * i + offset) % (2 * math.pi)
        cams.append(orbit_camera(azimuth, elevation, radius, fov_x, width, height))
    return cams


def great_circle_cameras(count: int, radius: float, fov_x: float, width: int, height: int,
                         *, elevation: float = 0.3) -> list[Camera]:
    """An orbit trajectory for inference sweeps: constant elevation, full turn."""
    return [orbit_camera(2 * math.pi * i / count, elevation, radius, fov_x, width, height)
            for i in range(count)]
