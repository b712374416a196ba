"""Pinhole cameras, ring placement and the ground-plane grid.

World frame: metres, z up, ground at z = 0. Camera frame: x right, y down,
z forward (optical axis). Pixels: u along columns, v along rows, origin at
the top-left pixel centre.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import DegenerateProjection, InvalidRing, RayParallelToPlane

# Default capture rig: a 40-degree lens on a 1920x1080 sensor, four cardinal
# cameras plus a dense 46-camera ring (50 views in total), mounted 6 m up and
# pitched 25 degrees down, on a circle of 0.75x the larger scene dimension.
DEFAULT_FOV_DEG = 40.0
DEFAULT_IMAGE_WIDTH = 1920
DEFAULT_IMAGE_HEIGHT = 1080
CARDINAL_COUNT = 4
RING_COUNT = 46
RING_HEIGHT_M = 6.0
RING_PITCH_DEG = -25.0
RING_RADIUS_FACTOR = 0.75

#: Head height above the feet used for image-space annotations.
HEAD_HEIGHT_M = 1.75

_DEGENERATE_EPS = 1e-12
_ORTHO_TOL = 1e-9


@dataclass(frozen=True)
class WorldPoint:
    """A point in the world frame, in metres."""

    x: float
    y: float
    z: float = 0.0

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z], dtype=float)


@dataclass(frozen=True)
class ImagePoint:
    """A projected point: pixel coordinates plus the projective depth."""

    u: float
    v: float
    depth: float


@dataclass(eq=False)
class Camera:
    """A calibrated pinhole camera.

    ``intrinsics`` is the 3x3 upper-triangular matrix A, ``rotation`` and
    ``translation`` map world points into the camera frame:
    ``x_cam = R @ x_world + t``.
    """

    id: int
    intrinsics: np.ndarray
    rotation: np.ndarray
    translation: np.ndarray
    image_width: int
    image_height: int
    fov_deg: float

    def __post_init__(self):
        self.intrinsics = np.asarray(self.intrinsics, dtype=float).reshape(3, 3)
        self.rotation = np.asarray(self.rotation, dtype=float).reshape(3, 3)
        self.translation = np.asarray(self.translation, dtype=float).reshape(3)
        A, R = self.intrinsics, self.rotation
        if not (A[0, 0] > 0 and A[1, 1] > 0):
            raise ValueError(f"camera {self.id}: focal lengths must be positive")
        if A[1, 0] != 0.0 or A[2, 0] != 0.0 or A[2, 1] != 0.0:
            raise ValueError(f"camera {self.id}: intrinsics must be upper-triangular")
        if np.max(np.abs(R.T @ R - np.eye(3))) >= _ORTHO_TOL:
            raise ValueError(f"camera {self.id}: rotation is not orthonormal")
        if abs(np.linalg.det(R) - 1.0) >= _ORTHO_TOL:
            raise ValueError(f"camera {self.id}: rotation must have determinant 1")
        if not (0.0 < self.fov_deg < 180.0):
            raise ValueError(f"camera {self.id}: fov must lie in (0, 180) degrees")
        if self.image_width < 1 or self.image_height < 1:
            raise ValueError(f"camera {self.id}: image size must be positive")

    def __eq__(self, other) -> bool:
        if not isinstance(other, Camera):
            return NotImplemented
        return (
            self.id == other.id
            and self.image_width == other.image_width
            and self.image_height == other.image_height
            and self.fov_deg == other.fov_deg
            and np.array_equal(self.intrinsics, other.intrinsics)
            and np.array_equal(self.rotation, other.rotation)
            and np.array_equal(self.translation, other.translation)
        )

    def projection_matrix(self) -> np.ndarray:
        """The 3x4 matrix P = A [R | t]."""
        return self.intrinsics @ np.hstack([self.rotation, self.translation[:, None]])

    def center(self) -> np.ndarray:
        """Camera centre in world coordinates, c = -R^T t."""
        return -self.rotation.T @ self.translation

    def to_jsonable(self) -> dict:
        """Manifest form: matrices flattened row-major, full 64-bit decimals."""
        return {
            "id": self.id,
            "image_width": self.image_width,
            "image_height": self.image_height,
            "fov_deg": self.fov_deg,
            "intrinsics": [float(x) for x in self.intrinsics.ravel()],
            "rotation": [float(x) for x in self.rotation.ravel()],
            "translation": [float(x) for x in self.translation.ravel()],
        }

    @classmethod
    def from_jsonable(cls, d: dict) -> "Camera":
        return cls(
            id=int(d["id"]),
            intrinsics=np.array(d["intrinsics"], dtype=float).reshape(3, 3),
            rotation=np.array(d["rotation"], dtype=float).reshape(3, 3),
            translation=np.array(d["translation"], dtype=float),
            image_width=int(d["image_width"]),
            image_height=int(d["image_height"]),
            fov_deg=float(d["fov_deg"]),
        )


@dataclass(frozen=True)
class GroundGrid:
    """A regular grid over the ground plane.

    Rows run along y, columns along x; cell (r, c) covers
    ``[origin_x + c*cell, origin_x + (c+1)*cell) x [origin_y + r*cell, ...)``.
    """

    origin_x: float
    origin_y: float
    cell_size: float
    rows: int
    cols: int

    def __post_init__(self):
        if self.cell_size <= 0:
            raise ValueError("cell_size must be positive")
        if self.rows < 1 or self.cols < 1:
            raise ValueError("grid must have at least one cell")

    @classmethod
    def for_scene(cls, size_x: float, size_y: float, cell_size: float = 0.2) -> "GroundGrid":
        return cls(
            origin_x=0.0,
            origin_y=0.0,
            cell_size=cell_size,
            rows=int(math.ceil(size_y / cell_size)),
            cols=int(math.ceil(size_x / cell_size)),
        )

    def cell_center(self, row: int, col: int) -> tuple[float, float]:
        return (
            self.origin_x + (col + 0.5) * self.cell_size,
            self.origin_y + (row + 0.5) * self.cell_size,
        )

    def to_jsonable(self) -> dict:
        return {
            "origin_x": self.origin_x,
            "origin_y": self.origin_y,
            "cell_size": self.cell_size,
            "rows": self.rows,
            "cols": self.cols,
        }

    @classmethod
    def from_jsonable(cls, d: dict) -> "GroundGrid":
        return cls(
            origin_x=float(d["origin_x"]),
            origin_y=float(d["origin_y"]),
            cell_size=float(d["cell_size"]),
            rows=int(d["rows"]),
            cols=int(d["cols"]),
        )


def intrinsics_from_fov(fov_deg: float, image_width: int, image_height: int) -> np.ndarray:
    """Zero-skew intrinsics with the principal point at the image centre.

    The horizontal field of view fixes the focal length:
    ``f = (width / 2) / tan(fov / 2)``.
    """
    if not (0.0 < fov_deg < 180.0):
        raise ValueError("fov must lie in (0, 180) degrees")
    f = (image_width / 2.0) / math.tan(math.radians(fov_deg) / 2.0)
    return np.array(
        [
            [f, 0.0, image_width / 2.0],
            [0.0, f, image_height / 2.0],
            [0.0, 0.0, 1.0],
        ]
    )


def project(camera: Camera, point: WorldPoint) -> ImagePoint:
    """Project a world point through the camera.

    Homogeneous division is exact; ``depth`` is the scale factor s, i.e. the
    z coordinate of the point in the camera frame.

    Raises:
        DegenerateProjection: if the point lies (numerically) on the plane
            through the camera centre parallel to the image plane.
    """
    p = camera.projection_matrix() @ np.array([point.x, point.y, point.z, 1.0])
    s = p[2]
    if abs(s) < _DEGENERATE_EPS:
        raise DegenerateProjection(
            f"camera {camera.id}: point ({point.x}, {point.y}, {point.z}) "
            f"projects with |s| = {abs(s):.3e}"
        )
    return ImagePoint(u=p[0] / s, v=p[1] / s, depth=s)


def project_many(camera: Camera, points: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorised projection of an (n, 3) array of world points.

    Returns (u, v, depth) arrays. Points on the principal plane get
    non-finite u/v rather than an exception; callers filter on depth.
    """
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    x_cam = pts @ camera.rotation.T + camera.translation
    hom = x_cam @ camera.intrinsics.T
    s = hom[:, 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        u = hom[:, 0] / s
        v = hom[:, 1] / s
    return u, v, s


def backproject_at_height(camera: Camera, u: float, v: float, z: float) -> WorldPoint:
    """Invert the projection for a pixel, fixing the world height z.

    Raises:
        RayParallelToPlane: if the viewing ray runs parallel to the plane.
    """
    direction = camera.rotation.T @ np.linalg.solve(camera.intrinsics, np.array([u, v, 1.0]))
    direction = direction / np.linalg.norm(direction)
    if abs(direction[2]) < _DEGENERATE_EPS:
        raise RayParallelToPlane(
            f"camera {camera.id}: pixel ({u}, {v}) ray never reaches z = {z}"
        )
    c = camera.center()
    lam = (z - c[2]) / direction[2]
    p = c + lam * direction
    return WorldPoint(x=p[0], y=p[1], z=z)


def is_visible(camera: Camera, point: WorldPoint) -> bool:
    """True when the point projects in front of the camera and inside the image."""
    try:
        ip = project(camera, point)
    except DegenerateProjection:
        return False
    return (
        ip.depth > 0.0
        and 0.0 <= ip.u < camera.image_width
        and 0.0 <= ip.v < camera.image_height
    )


def _look_rotation(forward: np.ndarray) -> np.ndarray:
    """Rotation whose rows are the camera axes (right, down, forward) for a
    camera looking along ``forward`` with world z as the up reference."""
    f = forward / np.linalg.norm(forward)
    r = np.cross(f, np.array([0.0, 0.0, 1.0]))
    nr = np.linalg.norm(r)
    if nr < 1e-12:
        raise InvalidRing("optical axis is vertical; bearing is undefined")
    r = r / nr
    d = np.cross(f, r)
    return np.vstack([r, d, f])


def place_camera_ring(
    scene_center: WorldPoint,
    radius: float,
    height: float,
    pitch_deg: float,
    count: int,
    fov_deg: float = DEFAULT_FOV_DEG,
    image_width: int = DEFAULT_IMAGE_WIDTH,
    image_height: int = DEFAULT_IMAGE_HEIGHT,
    start_deg: float = 0.0,
    id_offset: int = 0,
) -> list[Camera]:
    """Place ``count`` cameras evenly on a circle around the scene centre.

    Cameras sit at ``height`` above the centre's plane, ``radius`` out, with
    azimuths ``start_deg + i * 360 / count``. Each optical axis bears toward
    the centre's horizontal position and is tilted by ``pitch_deg`` (negative
    pitches look down).

    Raises:
        InvalidRing: for non-positive radius, an empty ring, or |pitch| >= 90.
    """
    if radius <= 0:
        raise InvalidRing(f"ring radius must be positive, got {radius}")
    if count < 1:
        raise InvalidRing(f"ring needs at least one camera, got {count}")
    if abs(pitch_deg) >= 90.0:
        raise InvalidRing(f"pitch must satisfy |pitch| < 90 degrees, got {pitch_deg}")

    A = intrinsics_from_fov(fov_deg, image_width, image_height)
    pitch = math.radians(pitch_deg)
    cameras = []
    for i in range(count):
        az = math.radians(start_deg + i * 360.0 / count)
        pos = np.array(
            [
                scene_center.x + radius * math.cos(az),
                scene_center.y + radius * math.sin(az),
                scene_center.z + height,
            ]
        )
        bearing = np.array([-math.cos(az), -math.sin(az)])  # toward the centre
        forward = np.array(
            [
                math.cos(pitch) * bearing[0],
                math.cos(pitch) * bearing[1],
                math.sin(pitch),
            ]
        )
        R = _look_rotation(forward)
        cameras.append(
            Camera(
                id=id_offset + i,
                intrinsics=A.copy(),
                rotation=R,
                translation=-R @ pos,
                image_width=image_width,
                image_height=image_height,
                fov_deg=fov_deg,
            )
        )
    return cameras


def default_camera_rig(
    scene_center: WorldPoint,
    radius: float,
    height: float = RING_HEIGHT_M,
    pitch_deg: float = RING_PITCH_DEG,
    fov_deg: float = DEFAULT_FOV_DEG,
    image_width: int = DEFAULT_IMAGE_WIDTH,
    image_height: int = DEFAULT_IMAGE_HEIGHT,
    cardinal_count: int = CARDINAL_COUNT,
    ring_count: int = RING_COUNT,
) -> list[Camera]:
    """The standard 50-view rig: 4 cardinal cameras plus a 46-camera ring."""
    common = dict(
        scene_center=scene_center,
        radius=radius,
        height=height,
        pitch_deg=pitch_deg,
        fov_deg=fov_deg,
        image_width=image_width,
        image_height=image_height,
    )
    rig = place_camera_ring(count=cardinal_count, id_offset=0, **common)
    rig += place_camera_ring(count=ring_count, id_offset=cardinal_count, **common)
    return rig


def grid_index(grid: GroundGrid, x: float, y: float) -> Optional[tuple[int, int]]:
    """Map a ground position to its (row, col) cell, or None when outside."""
    col = math.floor((x - grid.origin_x) / grid.cell_size)
    row = math.floor((y - grid.origin_y) / grid.cell_size)
    if 0 <= row < grid.rows and 0 <= col < grid.cols:
        return (row, col)
    return None
