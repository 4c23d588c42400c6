"""Binary task constraints: view coverage, NSV, EPMC and MTC."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import GeometryError
from .geom import (
    DEFAULT_BOUNDARY_SAMPLES,
    CameraModel,
    EePose,
    Mpoi,
    Troi,
    corners_hit_ground,
    disc_boundary,
    fov_footprint,
    project_discs_batch,
    troi_area_ratio,
)

__all__ = [
    "Mpoi",
    "TaskParams",
    "Troi",
    "coverage_indicator",
    "epmc_indicator",
    "mtc_check",
    "nsv_batch",
    "nsv_indicator",
]

CONTAIN_TOL = 1e-9


@dataclass(frozen=True)
class TaskParams:
    delta: float = 0.05
    eps_min: float = 0.05
    eps_max: float = 0.10
    xi: int = 3
    aim_tol_deg: float = 2.0

    def __post_init__(self):
        if not 0 < self.delta < 1:
            raise ValueError(f"delta must lie in (0, 1), got {self.delta}")
        if not 0 <= self.eps_min < self.eps_max:
            raise ValueError("need 0 <= eps_min < eps_max")
        if self.xi < 1:
            raise ValueError("xi must be at least 1")
        if self.aim_tol_deg < 0:
            raise ValueError("aim tolerance must be non-negative")


def _inside_convex(poly: np.ndarray, pts: np.ndarray) -> np.ndarray:
    """Inclusive containment for a counterclockwise convex polygon."""
    a = poly
    b = np.roll(poly, -1, axis=0)
    edge = b - a  # (E, 2)
    rel = pts[:, None, :] - a[None, :, :]  # (P, E, 2)
    cross = edge[None, :, 0] * rel[..., 1] - edge[None, :, 1] * rel[..., 0]
    scale = np.linalg.norm(edge, axis=1)[None, :]
    return np.all(cross >= -CONTAIN_TOL * scale, axis=1)


def coverage_indicator(
    ee: EePose, cam: CameraModel, troi: Troi, n_boundary: int = DEFAULT_BOUNDARY_SAMPLES
) -> int:
    try:
        footprint = fov_footprint(ee, cam)
    except GeometryError:
        return 0
    pts = np.vstack([disc_boundary(troi.center, troi.radius, n_boundary), troi.xy[None, :]])
    return int(_inside_convex(footprint.array, pts).all())


def nsv_indicator(
    ee: EePose,
    cam: CameraModel,
    troi: Troi,
    params: TaskParams,
    n_boundary: int = DEFAULT_BOUNDARY_SAMPLES,
) -> int:
    if not coverage_indicator(ee, cam, troi, n_boundary):
        return 0
    try:
        ratio = troi_area_ratio(ee, cam, troi, n_boundary)
    except GeometryError:
        return 0
    return int(ratio >= params.delta)


def nsv_batch(
    positions: np.ndarray,
    axes: np.ndarray,
    cam: CameraModel,
    troi: Troi,
    params: TaskParams,
    n_boundary: int = DEFAULT_BOUNDARY_SAMPLES,
) -> np.ndarray:
    """Vectorized NSV over (N, 3) camera poses.

    Coverage is tested in the image (every projected sample inside the pixel
    rectangle) instead of on the back-projected footprint; the two agree
    whenever the footprint exists and the samples are in front of the camera.
    """
    positions = np.asarray(positions, dtype=float)
    axes = np.asarray(axes, dtype=float)
    axes = axes / np.linalg.norm(axes, axis=1, keepdims=True)
    ok = (positions[:, 2] > 0) & (np.abs(axes[:, 2]) >= 1e-6)
    ok &= corners_hit_ground(positions, axes, cam)
    boundary = disc_boundary(troi.center, troi.radius, n_boundary)
    pts = np.vstack([boundary, troi.xy[None, :]])
    pix, depth = project_discs_batch(positions, axes, cam, pts)
    ok &= np.all(depth > 1e-12, axis=1)
    tol = 1e-7
    u, v = pix[..., 0], pix[..., 1]
    inside = (u >= -tol) & (u <= cam.width + tol) & (v >= -tol) & (v <= cam.height + tol)
    ok &= inside.all(axis=1)
    ring = pix[:, :n_boundary, :]
    x, y = ring[..., 0], ring[..., 1]
    area = 0.5 * np.abs(
        np.sum(x * np.roll(y, -1, axis=1) - np.roll(x, -1, axis=1) * y, axis=1)
    )
    ok &= area / cam.area >= params.delta
    return ok


def aim_error_deg(ee: EePose, target) -> float:
    target = np.asarray(target, dtype=float)
    if target.shape == (2,):
        target = np.append(target, 0.0)
    d = target - ee.pos
    n = np.linalg.norm(d)
    if n == 0:
        return 0.0
    c = float(np.clip(ee.axis @ d / n, -1.0, 1.0))
    return math.degrees(math.acos(c))


def epmc_indicator(ee: EePose, mpoi: Mpoi, params: TaskParams, check_aim: bool = True) -> int:
    """Squared EE-to-MPOI distance inside [eps_min, eps_max], tool axis aimed at the MPOI.

    ``check_aim=False`` evaluates the distance band alone.
    """
    d = ee.pos - mpoi.xyz
    d2 = float(d @ d)
    if not params.eps_min <= d2 <= params.eps_max:
        return 0
    if check_aim and aim_error_deg(ee, mpoi.xyz) > params.aim_tol_deg:
        return 0
    return 1


def mtc_check(hold_ticks: int, epmc_held: bool, params: TaskParams) -> int:
    if hold_ticks < 0:
        raise ValueError("hold_ticks must be non-negative")
    return int(bool(epmc_held) and hold_ticks >= params.xi)

