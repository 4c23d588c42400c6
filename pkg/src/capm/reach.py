"""Shell arm model, inverse-reachability annuli and problem-type classification.

The arm reaches any end-effector position whose distance from the shoulder
lies in ``[reach_min, reach_max]``, in any orientation. Under that model the
set of body positions that admit a valid observation (R_o) or manipulation
(R_m) pose is rotationally symmetric about the target, so each region is
found by a 1-D scan over the planar body-to-target distance.

End-effector candidates live in the vertical plane through the body and the
target: ``standoff`` is the horizontal distance of the EE from the target,
measured toward the body, and ``height`` is its height above ground. The EE
is always aimed at the target.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace

import numpy as np

from .constraints import TaskParams, nsv_batch
from .errors import NonIntervalFeasibility, Unclassifiable
from .geom import CameraModel, Troi

DEFAULT_BODY_HEIGHT = 0.8


def _wrap_yaw(yaw: float) -> float:
    w = math.atan2(math.sin(yaw), math.cos(yaw))
    return math.pi if w == -math.pi else w


@dataclass(frozen=True)
class BodyPose:
    x: float
    y: float
    yaw: float = 0.0
    body_height: float = DEFAULT_BODY_HEIGHT

    def __post_init__(self):
        if not self.body_height > 0:
            raise ValueError("body_height must be positive")
        object.__setattr__(self, "x", float(self.x))
        object.__setattr__(self, "y", float(self.y))
        object.__setattr__(self, "yaw", _wrap_yaw(float(self.yaw)))

    @property
    def xy(self) -> np.ndarray:
        return np.array([self.x, self.y])

    def moved(self, xy, yaw: float | None = None) -> "BodyPose":
        return replace(self, x=float(xy[0]), y=float(xy[1]), yaw=self.yaw if yaw is None else yaw)


@dataclass(frozen=True)
class ArmModel:
    shoulder_offset: tuple[float, float, float] = (0.0, 0.0, 0.0)
    reach_min: float = 0.15
    reach_max: float = 0.74

    def __post_init__(self):
        if not 0 <= self.reach_min < self.reach_max:
            raise ValueError("need 0 <= reach_min < reach_max")
        object.__setattr__(self, "shoulder_offset", tuple(float(v) for v in self.shoulder_offset))


def shoulder(body: BodyPose, arm: ArmModel) -> np.ndarray:
    ox, oy, oz = arm.shoulder_offset
    c, s = math.cos(body.yaw), math.sin(body.yaw)
    return np.array([body.x + c * ox - s * oy, body.y + s * ox + c * oy, body.body_height + oz])


def ee_reachable(body: BodyPose, ee_position, arm: ArmModel) -> bool:
    d = float(np.linalg.norm(np.asarray(ee_position, dtype=float) - shoulder(body, arm)))
    return arm.reach_min <= d <= arm.reach_max


@dataclass(frozen=True)
class Annulus:
    center: tuple[float, float]
    r_inner: float
    r_outer: float
    empty: bool = False

    def __post_init__(self):
        object.__setattr__(self, "center", (float(self.center[0]), float(self.center[1])))
        if not self.empty and not 0 <= self.r_inner < self.r_outer:
            raise ValueError(f"invalid annulus radii [{self.r_inner}, {self.r_outer}]")

    @classmethod
    def empty_at(cls, center) -> "Annulus":
        return cls(center, 0.0, 0.0, empty=True)

    @property
    def xy(self) -> np.ndarray:
        return np.array(self.center)

    @property
    def area(self) -> float:
        return 0.0 if self.empty else math.pi * (self.r_outer**2 - self.r_inner**2)

    def at(self, center) -> "Annulus":
        """Same shape translated to a new center."""
        return replace(self, center=(float(center[0]), float(center[1])))

    def contains(self, points) -> np.ndarray | bool:
        pts = np.asarray(points, dtype=float)
        if self.empty:
            return np.zeros(pts.shape[:-1], dtype=bool) if pts.ndim > 1 else False
        d = np.hypot(pts[..., 0] - self.center[0], pts[..., 1] - self.center[1])
        inside = (d >= self.r_inner) & (d <= self.r_outer)
        return inside if pts.ndim > 1 else bool(inside)


class ProblemType(enum.Enum):
    TypeI = "TypeI"
    TypeII = "TypeII"
    TypeIII = "TypeIII"
    TypeIV = "TypeIV"


@dataclass(frozen=True)
class SearchGrid:
    n_standoff: int = 32
    n_height: int = 24
    n_radial: int = 256
    refine_factor: int = 4
    refine_levels: int = 2
    standoff_max: float = 2.0

    @property
    def refined_fraction(self) -> float:
        return 1.0 / self.refine_factor**self.refine_levels


def _scan_range(arm: ArmModel, grid: SearchGrid) -> float:
    # no candidate EE lies farther than standoff_max from the target
    return arm.reach_max + grid.standoff_max


def radial_step(arm: ArmModel, grid: SearchGrid) -> float:
    """Coarse radial scan spacing."""
    return _scan_range(arm, grid) / (grid.n_radial - 1)


def refined_step(arm: ArmModel, grid: SearchGrid) -> float:
    return radial_step(arm, grid) * grid.refined_fraction


@dataclass(frozen=True, eq=False)
class EeCandidates:
    """Valid EE candidates (standoff, height) for one target; task constraint already applied."""

    standoff: np.ndarray
    height: np.ndarray

    def __len__(self) -> int:
        return len(self.standoff)

    def reachable(self, rho: np.ndarray, body_height: float, arm: ArmModel) -> np.ndarray:
        """(R, C) reachability of each candidate from a body at planar distance rho.

        The body faces the target, so a forward shoulder offset moves the
        shoulder toward it; the lateral offset component is ignored.
        """
        ox, _, oz = arm.shoulder_offset
        rho = np.atleast_1d(np.asarray(rho, dtype=float))
        dx = (rho - ox)[:, None] - self.standoff[None, :]
        dz = (self.height - body_height - oz)[None, :]
        dist = np.sqrt(dx * dx + dz * dz)
        return (dist >= arm.reach_min) & (dist <= arm.reach_max)

    def feasible(self, rho, body_height: float, arm: ArmModel) -> np.ndarray:
        if len(self) == 0:
            return np.zeros(np.atleast_1d(rho).shape, dtype=bool)
        return self.reachable(rho, body_height, arm).any(axis=1)


def _height_grid(top: float, n: int) -> np.ndarray:
    return top * np.arange(1, n + 1) / n


def observation_candidates(
    troi: Troi, cam: CameraModel, params: TaskParams, grid: SearchGrid, arm: ArmModel, body_height: float
) -> EeCandidates:
    s = np.linspace(0.0, grid.standoff_max, grid.n_standoff)
    h = _height_grid(body_height + arm.reach_max + arm.shoulder_offset[2], grid.n_height)
    S, Hh = np.meshgrid(s, h, indexing="ij")
    S, Hh = S.ravel(), Hh.ravel()
    # body direction is +x in a frame centred on the TROI
    c = troi.xy
    pos = np.column_stack([c[0] + S, np.full_like(S, c[1]), Hh])
    axes = np.column_stack([-S, np.zeros_like(S), -Hh])
    ok = nsv_batch(pos, axes, cam, troi, params)
    return EeCandidates(S[ok], Hh[ok])


def manipulation_candidates(params: TaskParams, grid: SearchGrid, arm: ArmModel, body_height: float) -> EeCandidates:
    top = arm.reach_max if math.isinf(params.eps_max) else min(math.sqrt(params.eps_max), arm.reach_max)
    s = np.linspace(0.0, top, grid.n_standoff)
    h = _height_grid(min(math.sqrt(params.eps_max), body_height + arm.reach_max + arm.shoulder_offset[2]), grid.n_height)
    S, Hh = np.meshgrid(s, h, indexing="ij")
    S, Hh = S.ravel(), Hh.ravel()
    d2 = S * S + Hh * Hh
    ok = (d2 >= params.eps_min) & (d2 <= params.eps_max)
    return EeCandidates(S[ok], Hh[ok])


def _runs(mask: np.ndarray) -> list[tuple[int, int]]:
    runs = []
    start = None
    for i, m in enumerate(mask):
        if m and start is None:
            start = i
        elif not m and start is not None:
            runs.append((start, i - 1))
            start = None
    if start is not None:
        runs.append((start, len(mask) - 1))
    return runs


def _refine_edge(pred, lo: float, hi: float, lo_feasible: bool, grid: SearchGrid) -> float:
    """Narrow a feasibility edge between lo and hi; returns the outermost feasible sample."""
    for _ in range(grid.refine_levels):
        xs = np.linspace(lo, hi, grid.refine_factor + 1)
        f = pred(xs)
        if lo_feasible:
            m = int(np.argmin(f)) if not f.all() else len(xs) - 1
        else:
            m = int(np.argmax(f)) if f.any() else len(xs) - 1
        m = max(m, 1)
        lo, hi = xs[m - 1], xs[m]
    return lo if lo_feasible else hi


def scan_annulus(center, pred, arm: ArmModel, grid: SearchGrid) -> "Annulus":
    """Annulus of body distances where ``pred`` holds, by 1-D scan plus edge refinement."""
    rho = np.linspace(0.0, _scan_range(arm, grid), grid.n_radial)
    feas = pred(rho)
    runs = _runs(feas)
    if not runs:
        return Annulus.empty_at(center)
    if len(runs) > 1:
        raise NonIntervalFeasibility([(rho[a], rho[b]) for a, b in runs])
    i, j = runs[0]
    r_in = rho[i] if i == 0 else _refine_edge(pred, rho[i - 1], rho[i], False, grid)
    r_out = rho[j] if j == len(rho) - 1 else _refine_edge(pred, rho[j], rho[j + 1], True, grid)
    if r_out <= r_in:
        # a single feasible sample; widen by nothing but keep the annulus well-formed
        r_out = r_in + 1e-12
    return Annulus(center, float(r_in), float(r_out))


def ro_predicate(troi, arm, cam, params, grid, body_height=DEFAULT_BODY_HEIGHT):
    cands = observation_candidates(troi, cam, params, grid, arm, body_height)
    return lambda rho: cands.feasible(rho, body_height, arm)


def rm_predicate(arm, params, grid, body_height=DEFAULT_BODY_HEIGHT):
    cands = manipulation_candidates(params, grid, arm, body_height)
    return lambda rho: cands.feasible(rho, body_height, arm)


def compute_ro(
    troi: Troi,
    arm: ArmModel,
    cam: CameraModel,
    params: TaskParams,
    grid: SearchGrid = SearchGrid(),
    body_height: float = DEFAULT_BODY_HEIGHT,
) -> Annulus:
    pred = ro_predicate(troi, arm, cam, params, grid, body_height)
    return scan_annulus(troi.center, pred, arm, grid)


def compute_rm(
    center,
    arm: ArmModel,
    params: TaskParams,
    grid: SearchGrid = SearchGrid(),
    body_height: float = DEFAULT_BODY_HEIGHT,
) -> Annulus:
    pred = rm_predicate(arm, params, grid, body_height)
    return scan_annulus(tuple(np.asarray(center, dtype=float)[:2]), pred, arm, grid)


def _lens_area(r1: float, r2: float, d: float) -> float:
    """Intersection area of two discs."""
    if r1 <= 0 or r2 <= 0:
        return 0.0
    if d >= r1 + r2:
        return 0.0
    if d <= abs(r1 - r2) + 1e-15 * max(r1, r2):
        return math.pi * min(r1, r2) ** 2
    # chord half-length y, and its foot at x from the first centre; atan2 stays accurate near tangency
    x = (d * d + r1 * r1 - r2 * r2) / (2 * d)
    y = math.sqrt(max(0.0, (-d + r1 + r2) * (d + r1 - r2) * (d - r1 + r2) * (d + r1 + r2))) / (2 * d)
    area = r1 * r1 * math.atan2(y, x) + r2 * r2 * math.atan2(y, d - x) - d * y
    return min(max(area, 0.0), math.pi * min(r1, r2) ** 2)


def intersection_area(a: Annulus, b: Annulus) -> float:
    if a.empty or b.empty:
        return 0.0
    d = float(np.hypot(*(a.xy - b.xy)))
    return (
        _lens_area(a.r_outer, b.r_outer, d)
        - _lens_area(a.r_inner, b.r_outer, d)
        - _lens_area(a.r_outer, b.r_inner, d)
        + _lens_area(a.r_inner, b.r_inner, d)
    )


def _inside_hole(inner: Annulus, outer: Annulus) -> bool:
    d = float(np.hypot(*(inner.xy - outer.xy)))
    return d + inner.r_outer <= outer.r_inner


OVERLAP_FRACTION = 0.01
AREA_TOL = 1e-12


def classify_problem_type(ro: Annulus, rm: Annulus, mpoi_in_troi: bool) -> ProblemType:
    if ro.empty or rm.empty:
        raise Unclassifiable("an empty region cannot be classified")
    inter = intersection_area(ro, rm)
    disjoint = inter <= AREA_TOL * max(ro.area, rm.area, 1.0)
    if disjoint and not mpoi_in_troi:
        return ProblemType.TypeIV
    if disjoint and _inside_hole(rm, ro):
        return ProblemType.TypeI
    if disjoint and _inside_hole(ro, rm):
        return ProblemType.TypeIII
    if not disjoint:
        rel = AREA_TOL + 1e-9
        ro_in_rm = inter >= ro.area * (1 - rel)
        rm_in_ro = inter >= rm.area * (1 - rel)
        if ro_in_rm or rm_in_ro:
            raise Unclassifiable("one region encloses the other")
        if inter >= OVERLAP_FRACTION * min(ro.area, rm.area):
            return ProblemType.TypeII
        raise Unclassifiable(f"overlap {inter:.3g} m^2 is below the significance threshold")
    raise Unclassifiable("disjoint regions without enclosure")
