"""Pinhole projection between the ground plane (z = 0) and the image plane.

Camera frame: z along the optical axis, x to the right of the image, y down
the image. Roll is fixed by aligning the image's down direction (+y) with the
projection of world -z onto the image plane; for a vertical boresight the
image's x axis falls back to world +x. Under this convention a camera looking
straight down maps world +x to increasing u.

The homography is built without rescaling, so the third homogeneous
coordinate of ``H @ [x, y, 1]`` is the camera-frame depth of the ground
point. Depth signs below rely on that.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import AtInfinity, BehindCamera, DegenerateView, HorizonInView

AXIS_Z_FLOOR = 1e-6
DET_FLOOR = 1e-12
W_FLOOR = 1e-12
DEFAULT_BOUNDARY_SAMPLES = 256


@dataclass(frozen=True)
class CameraModel:
    focal_u: float = 600.0
    focal_v: float = 600.0
    center_u: float = 320.0
    center_v: float = 240.0
    width: int = 640
    height: int = 480

    def __post_init__(self):
        if not (self.focal_u > 0 and self.focal_v > 0):
            raise ValueError("focal lengths must be positive")
        if self.width < 2 or self.height < 2:
            raise ValueError("image must be at least 2x2 pixels")
        if not (1 <= self.center_u <= self.width and 1 <= self.center_v <= self.height):
            raise ValueError("principal point must lie inside the image")

    @property
    def K(self) -> np.ndarray:
        return np.array(
            [
                [self.focal_u, 0.0, self.center_u],
                [0.0, self.focal_v, self.center_v],
                [0.0, 0.0, 1.0],
            ]
        )

    @property
    def K_inv(self) -> np.ndarray:
        return np.array(
            [
                [1.0 / self.focal_u, 0.0, -self.center_u / self.focal_u],
                [0.0, 1.0 / self.focal_v, -self.center_v / self.focal_v],
                [0.0, 0.0, 1.0],
            ]
        )

    @property
    def corners(self) -> np.ndarray:
        """Image corner pixels, clockwise in image coordinates."""
        w, h = float(self.width), float(self.height)
        return np.array([[0.0, 0.0], [w, 0.0], [w, h], [0.0, h]])

    @property
    def area(self) -> float:
        return float(self.width * self.height)


@dataclass(frozen=True)
class Troi:
    """Target region of interest, used through its ground disc."""

    center: tuple[float, float]
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", (float(self.center[0]), float(self.center[1])))
        if not self.radius >= 0:
            raise ValueError("TROI radius must be non-negative")

    @property
    def xy(self) -> np.ndarray:
        return np.array(self.center)

    def contains(self, point) -> bool:
        d = np.asarray(point, dtype=float)[:2] - self.xy
        return bool(d @ d <= self.radius**2)


@dataclass(frozen=True)
class Mpoi:
    point: tuple[float, float]

    def __post_init__(self):
        object.__setattr__(self, "point", (float(self.point[0]), float(self.point[1])))

    @property
    def xy(self) -> np.ndarray:
        return np.array(self.point)

    @property
    def xyz(self) -> np.ndarray:
        return np.array([self.point[0], self.point[1], 0.0])


@dataclass(frozen=True)
class EePose:
    position: tuple[float, float, float]
    optical_axis: tuple[float, float, float]

    def __post_init__(self):
        p = tuple(float(v) for v in self.position)
        a = np.asarray(self.optical_axis, dtype=float)
        n = np.linalg.norm(a)
        if n == 0:
            raise ValueError("optical axis must be nonzero")
        object.__setattr__(self, "position", p)
        object.__setattr__(self, "optical_axis", tuple(float(v) for v in a / n))

    @classmethod
    def aimed_at(cls, position, target) -> "EePose":
        position = np.asarray(position, dtype=float)
        target = np.asarray(target, dtype=float)
        if target.shape == (2,):
            target = np.append(target, 0.0)
        return cls(tuple(position), tuple(target - position))

    @property
    def pos(self) -> np.ndarray:
        return np.array(self.position)

    @property
    def axis(self) -> np.ndarray:
        return np.array(self.optical_axis)


@dataclass(frozen=True, eq=False)
class Homography:
    matrix: np.ndarray
    inverse: np.ndarray = field(repr=False)


@dataclass(frozen=True)
class GroundFootprint:
    corners: tuple[tuple[float, float], ...]

    @property
    def array(self) -> np.ndarray:
        return np.array(self.corners)

    @property
    def area(self) -> float:
        return polygon_area(self.array)


def camera_rotation(axis) -> np.ndarray:
    """World-to-camera rotation; rows are the camera x, y, z axes in world coordinates."""
    return camera_rotations(np.asarray(axis, dtype=float)[None, :])[0]


def camera_rotations(axes: np.ndarray) -> np.ndarray:
    """Batched :func:`camera_rotation` for an (N, 3) array of unit boresights."""
    z = axes / np.linalg.norm(axes, axis=1, keepdims=True)
    down = np.array([0.0, 0.0, -1.0])
    y = down - (z @ down)[:, None] * z
    ny = np.linalg.norm(y, axis=1)
    vertical = ny < 1e-9
    y = np.divide(y, ny[:, None], out=np.zeros_like(y), where=~vertical[:, None])
    x = np.cross(y, z)
    if vertical.any():
        ex = np.array([1.0, 0.0, 0.0])
        zv = z[vertical]
        xv = ex - (zv @ ex)[:, None] * zv
        xv /= np.linalg.norm(xv, axis=1, keepdims=True)
        x[vertical] = xv
        y[vertical] = np.cross(zv, xv)
    return np.stack([x, y, z], axis=1)


def homography_from_ee(ee: EePose, cam: CameraModel) -> Homography:
    pos, axis = ee.pos, ee.axis
    if pos[2] <= 0:
        raise DegenerateView(f"camera height {pos[2]} is not above the ground plane")
    if abs(axis[2]) < AXIS_Z_FLOOR:
        raise DegenerateView("boresight is parallel to the ground plane")
    R = camera_rotation(axis)
    M = np.column_stack([R[:, 0], R[:, 1], -R @ pos])
    H = cam.K @ M
    if abs(np.linalg.det(H)) < DET_FLOOR:
        raise DegenerateView("homography is singular")
    return Homography(H, np.linalg.inv(H))


def project_ground_point(h: Homography, X) -> np.ndarray:
    q = h.matrix @ np.array([X[0], X[1], 1.0])
    if abs(q[2]) < W_FLOOR:
        raise AtInfinity(f"ground point {tuple(X)} projects to infinity")
    return q[:2] / q[2]


def backproject_pixel(h: Homography, p) -> np.ndarray:
    X = h.inverse @ np.array([p[0], p[1], 1.0])
    # X ~ lambda * [x, y, 1] with depth 1 / lambda
    if X[2] <= W_FLOOR:
        raise BehindCamera(f"pixel {tuple(p)} does not see the ground in front of the camera")
    return X[:2] / X[2]


def polygon_area(pts: np.ndarray) -> float:
    """Signed shoelace area; positive for counterclockwise vertex order."""
    x, y = pts[:, 0], pts[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def fov_footprint(ee: EePose, cam: CameraModel) -> GroundFootprint:
    h = homography_from_ee(ee, cam)
    try:
        pts = np.array([backproject_pixel(h, c) for c in cam.corners])
    except BehindCamera as exc:
        raise HorizonInView("an image corner looks at or above the horizon") from exc
    if polygon_area(pts) < 0:
        pts = pts[::-1]
    return GroundFootprint(tuple(map(tuple, pts)))


def disc_boundary(center, radius: float, n: int = DEFAULT_BOUNDARY_SAMPLES) -> np.ndarray:
    t = np.arange(n) * (2.0 * math.pi / n)
    return np.column_stack([center[0] + radius * np.cos(t), center[1] + radius * np.sin(t)])


def troi_area_ratio(
    ee: EePose, cam: CameraModel, troi: Troi, n_boundary: int = DEFAULT_BOUNDARY_SAMPLES
) -> float:
    """Projected area of the TROI ground disc over the image area (unclipped)."""
    if troi.radius == 0:
        return 0.0
    h = homography_from_ee(ee, cam)
    pts = disc_boundary(troi.center, troi.radius, n_boundary)
    q = np.column_stack([pts, np.ones(len(pts))]) @ h.matrix.T
    if np.any(q[:, 2] <= W_FLOOR):
        raise DegenerateView("part of the TROI disc is behind the camera")
    img = q[:, :2] / q[:, 2:3]
    return abs(polygon_area(img)) / cam.area


def project_discs_batch(
    positions: np.ndarray,
    axes: np.ndarray,
    cam: CameraModel,
    points: np.ndarray,
) -> tuple[np.ndarray, np.ndarray]:
    """Project ground points for many camera poses at once.

    ``positions``/``axes`` are (N, 3); ``points`` is (M, 2) on the ground.
    Returns pixel coordinates (N, M, 2) and camera-frame depths (N, M).
    """
    R = camera_rotations(axes)
    rel = np.concatenate([points, np.zeros((len(points), 1))], axis=1)[None, :, :] - positions[:, None, :]
    pc = np.einsum("nij,nmj->nmi", R, rel)
    depth = pc[..., 2]
    safe = np.where(np.abs(depth) < W_FLOOR, W_FLOOR, depth)
    u = cam.focal_u * pc[..., 0] / safe + cam.center_u
    v = cam.focal_v * pc[..., 1] / safe + cam.center_v
    return np.stack([u, v], axis=-1), depth


def corners_hit_ground(positions: np.ndarray, axes: np.ndarray, cam: CameraModel) -> np.ndarray:
    """True where all four image-corner rays meet the ground in front of the camera."""
    R = camera_rotations(axes)
    rays_cam = np.column_stack([cam.corners, np.ones(4)]) @ cam.K_inv.T  # (4, 3)
    rays_world_z = np.einsum("nji,kj->nki", R, rays_cam)[..., 2]  # R^T applied
    return (positions[:, 2] > 0) & np.all(rays_world_z < 0, axis=1)
