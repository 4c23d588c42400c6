"""Key-state planners and single-trial execution.

Three planners choose the body key states of one trial:

* ``a`` (deterministic) treats the TROI center as the MPOI and visits one
  manipulation pose in R_m(X_w) on the way from start to end.
* ``b`` (decoupled) observes from R_o and always repositions into R_m
  before manipulating.
* ``c`` (CAPM) observes from the R_o pose that minimizes the expected cost
  ``c0 + p * c_u + (1 - p) * c_l`` where ``p`` is the probability that the
  observation pose already admits manipulation.

Every continuous choice is made on a deterministic polar grid over the
relevant annulus followed by one local refinement pass around the incumbent.
Ties resolve to the lowest candidate index.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .constraints import TaskParams, epmc_indicator, mtc_check, nsv_indicator
from .energy import EnergyParams, energy_cost, sequence_cost, transition_costs
from .errors import InfeasibleRegion, ObservationFailed
from .geom import CameraModel, EePose, Mpoi, Troi
from .reach import (
    DEFAULT_BODY_HEIGHT,
    Annulus,
    ArmModel,
    BodyPose,
    EeCandidates,
    SearchGrid,
    compute_rm,
    manipulation_candidates,
    observation_candidates,
    scan_annulus,
    shoulder,
)
from .uncertainty import MpoiDistribution, RngStream, membership_fraction, sample_mpoi_batch


class Kind(enum.Enum):
    BODY_MOVE = "BodyMove"
    ARM_PERCEIVE = "ArmPerceive"
    ARM_MANIPULATE = "ArmManipulate"
    ARM_HOLD = "ArmHold"


class TaskLabel(enum.Enum):
    ACTIVE_PERCEPTION = "ActivePerception"
    MANIPULATION = "Manipulation"
    TRANSIT = "Transit"


class Branch(enum.Enum):
    UPPER = "Upper"
    LOWER = "Lower"
    NO_OBSERVATION = "NoObservation"


@dataclass(frozen=True)
class KeyState:
    time_index: int
    kind: Kind
    body: BodyPose
    ee: EePose | None
    task_label: TaskLabel


@dataclass
class Plan:
    states: list[KeyState]
    branch: Branch
    expected_cost: float
    realized_cost: float | None = None
    success: bool | None = None
    p_upper: float | None = None
    fallback: BodyPose | None = None

    @property
    def body_states(self) -> list[BodyPose]:
        return [s.body for s in self.states if s.kind is Kind.BODY_MOVE]

    @property
    def body_moves(self) -> int:
        return sum(1 for s in self.states[1:] if s.kind is Kind.BODY_MOVE)

    def pose_after(self, label: TaskLabel) -> BodyPose | None:
        for s in self.states[1:]:
            if s.kind is Kind.BODY_MOVE and s.task_label is label:
                return s.body
        return None


@dataclass(frozen=True)
class TrialScene:
    start: BodyPose
    end: BodyPose
    troi: Troi
    mpoi: Mpoi


@dataclass(frozen=True)
class PlanGrid:
    n_theta: int = 64
    n_radial: int = 16
    refine: int = 4


@dataclass(frozen=True)
class PlannerConfig:
    energy: EnergyParams = EnergyParams()
    task: TaskParams = TaskParams()
    arm: ArmModel = ArmModel()
    camera: CameraModel = CameraModel()
    search: SearchGrid = SearchGrid()
    grid: PlanGrid = PlanGrid()
    mc_samples: int = 2000
    body_height: float = DEFAULT_BODY_HEIGHT
    sigma_exponent: int = 1
    truncate: bool = True

    def prior(self, troi: Troi) -> MpoiDistribution:
        return MpoiDistribution.from_troi(troi, self.sigma_exponent, self.truncate)


# ----------------------------------------------------------------------------
# grids


@dataclass(frozen=True, eq=False)
class PolarGrid:
    annulus: Annulus
    radii: np.ndarray
    thetas: np.ndarray

    @property
    def points(self) -> np.ndarray:
        R, T = np.meshgrid(self.radii, self.thetas, indexing="ij")
        c = self.annulus.xy
        return np.column_stack([c[0] + (R * np.cos(T)).ravel(), c[1] + (R * np.sin(T)).ravel()])

    def polar_of(self, idx: int) -> tuple[float, float]:
        i, j = divmod(int(idx), len(self.thetas))
        return float(self.radii[i]), float(self.thetas[j])

    @property
    def dr(self) -> float:
        return float(self.radii[1] - self.radii[0]) if len(self.radii) > 1 else 0.0

    @property
    def dtheta(self) -> float:
        return float(self.thetas[1] - self.thetas[0]) if len(self.thetas) > 1 else 0.0

    @property
    def spacing(self) -> float:
        """Largest distance from any annulus point to its nearest grid node."""
        return math.hypot(0.5 * self.dr, 0.5 * self.annulus.r_outer * self.dtheta)


def polar_grid(annulus: Annulus, n_theta: int, n_radial: int) -> PolarGrid:
    if annulus.empty:
        raise InfeasibleRegion("cannot search an empty region")
    radii = np.linspace(annulus.r_inner, annulus.r_outer, n_radial)
    thetas = np.arange(n_theta) * (2 * math.pi / n_theta)
    return PolarGrid(annulus, radii, thetas)


def local_grid(coarse: PolarGrid, idx: int, refine: int) -> PolarGrid:
    """Finer grid spanning one coarse cell on each side of node ``idx``."""
    r0, t0 = coarse.polar_of(idx)
    a = coarse.annulus
    k = 2 * refine + 1
    lo = max(a.r_inner, r0 - coarse.dr)
    hi = min(a.r_outer, r0 + coarse.dr)
    radii = np.linspace(lo, hi, k) if hi > lo else np.array([r0])
    thetas = t0 + np.linspace(-coarse.dtheta, coarse.dtheta, k)
    return PolarGrid(a, radii, thetas)


def grid_tolerance(grid: PolarGrid, lipschitz: float) -> float:
    """One-grid-step objective bound for a function with the given Lipschitz constant."""
    return lipschitz * grid.spacing


# ----------------------------------------------------------------------------
# cost helpers


def _headings(a: np.ndarray, b: np.ndarray, yaw_a) -> np.ndarray:
    d = b - a
    moved = (d[..., 0] != 0) | (d[..., 1] != 0)
    h = np.arctan2(d[..., 1], d[..., 0])
    return np.where(moved, h, yaw_a)


def hop_costs(a: np.ndarray, b: np.ndarray, energy: EnergyParams, yaw_a=0.0, forced: bool = False):
    """Cost of moving a -> b (broadcasting), the body arriving with the heading of the move.

    Returns (cost, arrival_yaw). ``forced`` rules out staying put: a
    zero-length move costs infinity. Headings only enter the cost through ``beta``; with
    ``beta = 0`` the returned yaws are zeros.
    """
    if energy.beta:
        yaw_b = _headings(a, b, yaw_a)
        cost = transition_costs(a, b, energy, yaw_a, yaw_b)
    else:
        cost = transition_costs(a, b, energy)
        yaw_b = np.zeros(np.shape(cost))
    if forced:
        cost = np.where(cost == 0, np.inf, cost)
    return cost, yaw_b


def final_costs(x: np.ndarray, yaw_x, end: BodyPose, energy: EnergyParams) -> np.ndarray:
    return transition_costs(x, end.xy, energy, yaw_x, end.yaw)


def objective_lipschitz(points_span: float, energy: EnergyParams, hops: int) -> float:
    """Bound on |grad| of a sum of ``hops`` transition costs whose lengths stay below ``points_span``."""
    per_hop = energy.gamma * (2 * points_span if energy.distance_exponent == 2 else 1.0)
    return hops * per_hop


def _point_index(pts: np.ndarray) -> dict[tuple[float, float], list[int]]:
    where: dict[tuple[float, float], list[int]] = {}
    for j, p in enumerate(map(tuple, pts.tolist())):
        where.setdefault(p, []).append(j)
    return where


def _coincident(x1: np.ndarray, where: dict) -> dict[int, list[int]]:
    """Rows of ``x1`` that coincide exactly with indexed points, mapped to the matching columns."""
    return {i: where[p] for i, p in enumerate(map(tuple, x1.tolist())) if p in where}


# ----------------------------------------------------------------------------
# per-scene search


@dataclass(frozen=True)
class BodySolution:
    x1: BodyPose
    x3: BodyPose | None
    objective: float
    p_upper: float | None = None


class ScenePlanner:
    """Shared candidate grids and cost tables for the three planners on one scene."""

    def __init__(self, start: BodyPose, end: BodyPose, troi: Troi, ro: Annulus | None, rm_shape: Annulus, cfg: PlannerConfig):
        self.start, self.end, self.troi = start, end, troi
        self.ro = ro.at(troi.center) if ro is not None else None
        self.rm = rm_shape.at(troi.center)
        self.cfg = cfg
        self.energy = cfg.energy

    # grids -----------------------------------------------------------------
    @cached_property
    def g1(self) -> PolarGrid:
        if self.ro is None:
            raise InfeasibleRegion("observation region not supplied")
        return polar_grid(self.ro, self.cfg.grid.n_theta, self.cfg.grid.n_radial)

    @cached_property
    def g3(self) -> PolarGrid:
        return polar_grid(self.rm, self.cfg.grid.n_theta, self.cfg.grid.n_radial)

    @cached_property
    def X1(self) -> np.ndarray:
        return self.g1.points

    @cached_property
    def X3(self) -> np.ndarray:
        return self.g3.points

    @cached_property
    def _x3_index(self):
        return _point_index(self.X3)

    @cached_property
    def _first_leg(self):
        return hop_costs(self.start.xy, self.X1, self.energy, self.start.yaw)

    @cached_property
    def _upper_leg(self):
        c0, yaw1 = self._first_leg
        return final_costs(self.X1, yaw1, self.end, self.energy)

    def _lower_tail(self, x1: np.ndarray, yaw1: np.ndarray, x3: np.ndarray, forced: bool):
        """(N1, N3) lower-branch cost c(x1, x3) + c(x3, end)."""
        hop, yaw3 = hop_costs(x1[:, None, :], x3[None, :, :], self.energy, yaw1[:, None], forced)
        return hop + final_costs(x3[None, :, :], yaw3, self.end, self.energy)

    def _terms_of(self, x3: np.ndarray):
        o = x3.mean(axis=0)
        b = x3 - o
        return o, -2.0 * b.T, np.einsum("ij,ij->i", b, b), final_costs(x3, 0.0, self.end, self.energy)

    @cached_property
    def _x3_terms(self):
        return self._terms_of(self.X3)

    def _lower_mins(self, x1: np.ndarray, yaw1: np.ndarray, x3: np.ndarray):
        """Row minima of the lower-branch tail over ``x3``: {forced: (vals, idx), free: (vals, idx)}."""
        e = self.energy
        if e.beta:
            free = self._lower_tail(x1, yaw1, x3, forced=False)
            forced = self._lower_tail(x1, yaw1, x3, forced=True)
            rows = np.arange(len(x1))
            jf, jd = np.argmin(free, axis=1), np.argmin(forced, axis=1)
            return {False: (free[rows, jf], jf), True: (forced[rows, jd], jd)}
        o, m2bT, bsq, f = self._x3_terms if x3 is self.X3 else self._terms_of(x3)
        # squared distances via one matrix product; exact coincidences handled separately
        a = x1 - o
        D = a @ m2bT
        D += bsq
        D += np.einsum("ij,ij->i", a, a)[:, None]
        np.maximum(D, 0.0, out=D)
        if e.distance_exponent == 1:
            np.sqrt(D, out=D)
        D *= e.gamma
        D += e.alpha
        D += f
        rows = np.arange(len(x1))
        jd = np.argmin(D, axis=1)
        forced = (D[rows, jd], jd)
        where = self._x3_index if x3 is self.X3 else _point_index(x3)
        pairs = _coincident(x1, where)
        if not pairs:
            return {False: forced, True: forced}
        vf, jf = forced[0].copy(), jd.copy()
        vd, jd = forced[0].copy(), jd.copy()
        for i, js in pairs.items():
            row = D[i].copy()
            row[js] = np.inf
            jd[i] = int(np.argmin(row))
            vd[i] = row[jd[i]]
            row[js] = f[js]
            jf[i] = int(np.argmin(row))
            vf[i] = row[jf[i]]
        return {False: (vf, jf), True: (vd, jd)}

    @cached_property
    def _tail_bound(self) -> np.ndarray:
        """Lower bound on the lower-branch tail of every coarse x1, from the triangle inequality."""
        e = self.energy
        d = np.hypot(*(self.X1 - self.end.xy).T)
        g = d if e.distance_exponent == 1 else 0.5 * d * d
        return np.where(d > 0, e.alpha, 0.0) + e.gamma * g

    def _coarse_best(self, base: np.ndarray, weight: np.ndarray, forced: bool, chunk: int = 128):
        """argmin over coarse x1 of ``base + weight * tail(x1)``, evaluating tails best-bound first.

        Rows whose bound already exceeds the incumbent are never evaluated; ties keep the lowest index.
        """
        yaw1 = self._first_leg[1]
        bound = base + weight * self._tail_bound
        order = np.argsort(bound, kind="stable")
        best = (math.inf, -1, -1)
        for lo in range(0, len(order), chunk):
            rows = order[lo:lo + chunk]
            if bound[rows[0]] > best[0]:
                break
            vals, idx = self._lower_mins(self.X1[rows], yaw1[rows], self.X3)[forced]
            J = base[rows] + weight[rows] * vals
            k = int(np.argmin(J))
            cand = (float(J[k]), int(rows[J == J[k]].min()), 0)
            if cand[0] < best[0] or (cand[0] == best[0] and cand[1] < best[1]):
                i = cand[1]
                best = (cand[0], i, int(idx[np.flatnonzero(rows == i)[0]]))
        return best

    # planners -----------------------------------------------------------------
    def deterministic(self) -> BodySolution:
        def J(pts):
            c0, yaw = hop_costs(self.start.xy, pts, self.energy, self.start.yaw)
            return c0 + final_costs(pts, yaw, self.end, self.energy)

        x, val = self._minimize(self.g3, J)
        return BodySolution(self._pose(x, self.start), None, val)

    def _minimize(self, grid: PolarGrid, J):
        pts = grid.points
        vals = J(pts)
        i = int(np.argmin(vals))
        best_x, best_v = pts[i], float(vals[i])
        fine = local_grid(grid, i, self.cfg.grid.refine)
        fp = fine.points
        fv = J(fp)
        k = int(np.argmin(fv))
        if fv[k] < best_v:
            best_x, best_v = fp[k], float(fv[k])
        return best_x, best_v

    def _pose(self, xy, prev: BodyPose) -> BodyPose:
        d = np.asarray(xy) - prev.xy
        yaw = math.atan2(d[1], d[0]) if (d[0] or d[1]) else prev.yaw
        return BodyPose(float(xy[0]), float(xy[1]), yaw, self.cfg.body_height)

    def _best_x3(self, x1: np.ndarray, yaw1: float, j0: int, forced: bool) -> tuple[np.ndarray, float]:
        def J(pts):
            return self._lower_tail(x1[None, :], np.array([yaw1]), pts, forced)[0]

        pts = self.X3
        best_x = pts[j0]
        best_v = float(J(best_x[None, :])[0])
        fine = local_grid(self.g3, j0, self.cfg.grid.refine)
        fv = J(fine.points)
        k = int(np.argmin(fv))
        if fv[k] < best_v:
            best_x, best_v = fine.points[k], float(fv[k])
        return best_x, best_v

    def _two_stage(self, p: np.ndarray | None, forced: bool, p_of=None) -> BodySolution:
        c0, yaw1 = self._first_leg
        cu = self._upper_leg
        if p is None:
            val, i, j = self._coarse_best(c0, np.ones_like(c0), forced)
        else:
            val, i, j = self._coarse_best(c0 + p * cu, 1 - p, forced)
        best = (val, self.X1[i], float(yaw1[i]), j, None if p is None else float(p[i]))

        # refine x1 around the incumbent, inner minimum over the coarse R_m grid
        fine = local_grid(self.g1, i, self.cfg.grid.refine)
        fx = fine.points
        f_c0, f_yaw = hop_costs(self.start.xy, fx, self.energy, self.start.yaw)
        f_cu = final_costs(fx, f_yaw, self.end, self.energy)
        f_cl, f_j = self._lower_mins(fx, f_yaw, self.X3)[forced]
        if p is None:
            fJ = f_c0 + f_cl
            f_p = None
        else:
            f_p = p_of(fx)
            fJ = f_c0 + f_p * f_cu + (1 - f_p) * f_cl
        k = int(np.argmin(fJ))
        if fJ[k] < best[0]:
            best = (float(fJ[k]), fx[k], float(f_yaw[k]), int(f_j[k]), None if f_p is None else float(f_p[k]))

        _, x1, y1, j, p1 = best
        x3, cl1 = self._best_x3(x1, y1, j, forced)
        c0_1 = float(hop_costs(self.start.xy, x1, self.energy, self.start.yaw)[0])
        if p1 is None:
            obj = c0_1 + cl1
        else:
            cu1 = float(final_costs(x1, y1, self.end, self.energy))
            obj = c0_1 + p1 * cu1 + (1 - p1) * cl1
        pose1 = self._pose(x1, self.start)
        return BodySolution(pose1, self._pose(x3, pose1), obj, p1)

    def decoupled(self) -> BodySolution:
        return self._two_stage(None, forced=True)

    def capm(self, samples: np.ndarray) -> BodySolution:
        shape = self.rm
        p = membership_fraction(self.X1, samples, shape)
        return self._two_stage(p, forced=False, p_of=lambda pts: membership_fraction(pts, samples, shape))


def expected_two_stage_cost(
    start: BodyPose, end: BodyPose, x1: BodyPose, x3: BodyPose, samples: np.ndarray, rm_shape: Annulus, energy: EnergyParams
) -> float:
    """Expected two-stage cost of an (observation, fallback) pose pair."""
    p = float(membership_fraction(x1.xy[None, :], samples, rm_shape)[0])
    x1_ = BodyPose(x1.x, x1.y, _heading(start, x1), x1.body_height)
    x3_ = BodyPose(x3.x, x3.y, _heading(x1_, x3), x3.body_height)
    c0 = energy_cost(start, x1_, energy)
    cu = energy_cost(x1_, end, energy)
    cl = energy_cost(x1_, x3_, energy) + energy_cost(x3_, end, energy)
    return c0 + p * cu + (1 - p) * cl


def _heading(a: BodyPose, b: BodyPose) -> float:
    dx, dy = b.x - a.x, b.y - a.y
    return math.atan2(dy, dx) if (dx or dy) else a.yaw


# ----------------------------------------------------------------------------
# arm key states


def _stow_point(body: BodyPose, arm: ArmModel) -> np.ndarray:
    return shoulder(body, arm)


def _candidate_world(target_xy: np.ndarray, body: BodyPose, s: np.ndarray, h: np.ndarray) -> np.ndarray:
    u = body.xy - target_xy
    n = np.hypot(*u)
    u = u / n if n > 0 else np.array([1.0, 0.0])
    return np.column_stack([target_xy[0] + s * u[0], target_xy[1] + s * u[1], h])


def _ranked_candidates(target_xy, body: BodyPose, cands: EeCandidates, cfg: PlannerConfig) -> np.ndarray:
    """World EE positions reachable from ``body``, closest to the stow point first."""
    if len(cands) == 0:
        return np.empty((0, 3))
    rho = float(np.hypot(*(body.xy - target_xy)))
    ok = cands.reachable(np.array([rho]), body.body_height, cfg.arm)[0]
    if not ok.any():
        return np.empty((0, 3))
    pts = _candidate_world(np.asarray(target_xy), body, cands.standoff[ok], cands.height[ok])
    d = np.linalg.norm(pts - _stow_point(body, cfg.arm), axis=1)
    return pts[np.argsort(d, kind="stable")]


def observation_pose(body: BodyPose, troi: Troi, cands: EeCandidates, cfg: PlannerConfig) -> EePose:
    for pos in _ranked_candidates(troi.xy, body, cands, cfg):
        ee = EePose.aimed_at(pos, troi.xy)
        if nsv_indicator(ee, cfg.camera, troi, cfg.task):
            return ee
    raise ObservationFailed(f"no reachable next-sufficient view from body at ({body.x:.3f}, {body.y:.3f})")


def manipulation_pose(body: BodyPose, target_xy, cands: EeCandidates, cfg: PlannerConfig) -> EePose | None:
    target_xy = np.asarray(target_xy, dtype=float)
    for pos in _ranked_candidates(target_xy, body, cands, cfg):
        return EePose.aimed_at(pos, target_xy)
    return None


def blind_manipulation_pose(body: BodyPose, target_xy, cands: EeCandidates, cfg: PlannerConfig, n_elev: int = 64) -> EePose:
    """EE aimed at ``target_xy`` at the middle of the EPMC band, or as close to it as reachable."""
    target_xy = np.asarray(target_xy, dtype=float)
    mid = 0.5 * (cfg.task.eps_min + cfg.task.eps_max)
    phi = np.linspace(0.0, math.pi / 2, n_elev + 1)[1:]
    ring = EeCandidates(math.sqrt(mid) * np.cos(phi), math.sqrt(mid) * np.sin(phi))
    pts = _ranked_candidates(target_xy, body, ring, cfg)
    if len(pts) == 0:
        pts = _ranked_candidates(target_xy, body, cands, cfg)
        if len(pts) == 0:
            raise InfeasibleRegion("no EPMC pose reachable from the planned body pose")
        d2 = np.sum((pts - np.append(target_xy, 0.0)) ** 2, axis=1)
        pts = pts[[int(np.argmin(np.abs(d2 - mid)))]]
    return EePose.aimed_at(pts[0], target_xy)


# ----------------------------------------------------------------------------
# plan assembly


def _assemble(
    start: BodyPose,
    x1: BodyPose,
    x1_label: TaskLabel,
    obs_ee: EePose | None,
    x3: BodyPose | None,
    manip_ee: EePose | None,
    end: BodyPose,
    xi: int,
) -> list[KeyState]:
    states = [KeyState(0, Kind.BODY_MOVE, start, None, TaskLabel.TRANSIT)]

    def add(kind, body, ee, label):
        states.append(KeyState(len(states), kind, body, ee, label))

    add(Kind.BODY_MOVE, x1, None, x1_label)
    if obs_ee is not None:
        add(Kind.ARM_PERCEIVE, x1, obs_ee, TaskLabel.ACTIVE_PERCEPTION)
    base = x1
    if x3 is not None:
        add(Kind.BODY_MOVE, x3, None, TaskLabel.MANIPULATION)
        base = x3
    add(Kind.ARM_MANIPULATE, base, manip_ee, TaskLabel.MANIPULATION)
    for _ in range(xi):
        add(Kind.ARM_HOLD, base, manip_ee, TaskLabel.MANIPULATION)
    add(Kind.BODY_MOVE, end, None, TaskLabel.TRANSIT)
    return states


def hold_ticks(states: list[KeyState]) -> int:
    return sum(1 for s in states if s.kind is Kind.ARM_HOLD)


@dataclass
class SceneRegions:
    """Regions and EE candidate sets needed to plan and execute one scene."""

    ro: Annulus
    rm_shape: Annulus
    obs_cands: EeCandidates = field(repr=False)
    manip_cands: EeCandidates = field(repr=False)

    @classmethod
    def compute(cls, troi: Troi, cfg: PlannerConfig, rm_shape: Annulus | None = None, manip_cands=None) -> "SceneRegions":
        obs = observation_candidates(troi, cfg.camera, cfg.task, cfg.search, cfg.arm, cfg.body_height)
        ro = scan_annulus(troi.center, lambda rho: obs.feasible(rho, cfg.body_height, cfg.arm), cfg.arm, cfg.search)
        if rm_shape is None:
            rm_shape = compute_rm((0.0, 0.0), cfg.arm, cfg.task, cfg.search, cfg.body_height)
        if manip_cands is None:
            manip_cands = manipulation_candidates(cfg.task, cfg.search, cfg.arm, cfg.body_height)
        return cls(ro, rm_shape, obs, manip_cands)


def plan_deterministic(start: BodyPose, end: BodyPose, troi: Troi, rm: Annulus, cfg: PlannerConfig,
                       manip_cands: EeCandidates | None = None) -> Plan:
    if rm.empty:
        raise InfeasibleRegion("R_m(X_w) is empty")
    sol = ScenePlanner(start, end, troi, None, rm, cfg).deterministic()
    return _deterministic_plan(sol, start, end, troi, cfg, manip_cands)


def _deterministic_plan(sol, start, end, troi, cfg, manip_cands=None) -> Plan:
    if manip_cands is None:
        manip_cands = manipulation_candidates(cfg.task, cfg.search, cfg.arm, cfg.body_height)
    ee = blind_manipulation_pose(sol.x1, troi.xy, manip_cands, cfg)
    states = _assemble(start, sol.x1, TaskLabel.MANIPULATION, None, None, ee, end, cfg.task.xi)
    return Plan(states, Branch.NO_OBSERVATION, sol.objective)


def _two_stage_plan(sol: BodySolution, start, end, troi, cfg, obs_cands, manip_cands, upper: bool) -> Plan:
    obs = observation_pose(sol.x1, troi, obs_cands, cfg)
    if upper:
        ee = manipulation_pose(sol.x1, troi.xy, manip_cands, cfg)
        states = _assemble(start, sol.x1, TaskLabel.ACTIVE_PERCEPTION, obs, None, ee, end, cfg.task.xi)
        branch = Branch.UPPER
    else:
        ee = manipulation_pose(sol.x3, troi.xy, manip_cands, cfg)
        states = _assemble(start, sol.x1, TaskLabel.ACTIVE_PERCEPTION, obs, sol.x3, ee, end, cfg.task.xi)
        branch = Branch.LOWER
    return Plan(states, branch, sol.objective, p_upper=sol.p_upper, fallback=sol.x3)


def plan_decoupled(start: BodyPose, end: BodyPose, troi: Troi, ro: Annulus, rm: Annulus, cfg: PlannerConfig,
                   regions: SceneRegions | None = None) -> Plan:
    if ro.empty or rm.empty:
        raise InfeasibleRegion("R_o or R_m is empty")
    regions = regions or SceneRegions.compute(troi, cfg, rm)
    sol = ScenePlanner(start, end, troi, ro, rm, cfg).decoupled()
    return _two_stage_plan(sol, start, end, troi, cfg, regions.obs_cands, regions.manip_cands, upper=False)


def plan_capm(start: BodyPose, end: BodyPose, troi: Troi, ro: Annulus, rm_shape: Annulus, dist: MpoiDistribution,
              cfg: PlannerConfig, rng: RngStream | np.ndarray, regions: SceneRegions | None = None) -> Plan:
    """``rng`` is either a stream or an already drawn (n, 2) sample set shared across candidates."""
    if ro.empty or rm_shape.empty:
        raise InfeasibleRegion("R_o or R_m is empty")
    regions = regions or SceneRegions.compute(troi, cfg, rm_shape)
    samples = rng if isinstance(rng, np.ndarray) else sample_mpoi_batch(dist, troi, rng, cfg.mc_samples)
    sol = ScenePlanner(start, end, troi, ro, rm_shape, cfg).capm(samples)
    return _two_stage_plan(sol, start, end, troi, cfg, regions.obs_cands, regions.manip_cands,
                           upper=sol.p_upper >= 0.5)


def replan_manipulation(x_current: BodyPose, end: BodyPose, mpoi: Mpoi, rm_shape: Annulus, cfg: PlannerConfig,
                        allow_stay: bool = True) -> BodyPose:
    """Cheapest R_m(mpoi) pose on the way to ``end``.

    With ``allow_stay`` the current pose is returned when it already admits
    manipulation; otherwise the body always moves (decoupled behaviour).
    """
    rm = rm_shape.at(mpoi.point)
    if rm.empty:
        raise InfeasibleRegion("R_m(MPOI) is empty")
    if allow_stay and rm.contains(x_current.xy):
        return x_current
    grid = polar_grid(rm, cfg.grid.n_theta, cfg.grid.n_radial)

    def J(pts):
        hop, yaw = hop_costs(x_current.xy, pts, cfg.energy, x_current.yaw, forced=not allow_stay)
        return hop + final_costs(pts, yaw, end, cfg.energy)

    pts = grid.points
    vals = J(pts)
    i = int(np.argmin(vals))
    best_x, best_v = pts[i], float(vals[i])
    fine = local_grid(grid, i, cfg.grid.refine)
    fv = J(fine.points)
    k = int(np.argmin(fv))
    if fv[k] < best_v:
        best_x = fine.points[k]
    d = best_x - x_current.xy
    yaw = math.atan2(d[1], d[0]) if (d[0] or d[1]) else x_current.yaw
    return BodyPose(float(best_x[0]), float(best_x[1]), yaw, x_current.body_height)


# ----------------------------------------------------------------------------
# execution


PLANNERS = ("a", "b", "c")


def _finish(plan: Plan, cfg: PlannerConfig, mpoi: Mpoi, check_aim: bool) -> Plan:
    plan.realized_cost = sequence_cost(plan.body_states, cfg.energy)
    manip = next(s for s in plan.states if s.kind is Kind.ARM_MANIPULATE)
    held = manip.ee is not None and bool(epmc_indicator(manip.ee, mpoi, cfg.task, check_aim=check_aim))
    plan.success = bool(mtc_check(hold_ticks(plan.states), held, cfg.task))
    return plan


def execute_trial(planner: str, scene: TrialScene, cfg: PlannerConfig, rng: RngStream | np.ndarray | None = None,
                  regions: SceneRegions | None = None, scene_planner: ScenePlanner | None = None) -> Plan:
    """Plan with one of the planners and simulate the resulting key-state sequence."""
    if planner not in PLANNERS:
        raise ValueError(f"unknown planner {planner!r}")
    troi, mpoi = scene.troi, scene.mpoi
    regions = regions or SceneRegions.compute(troi, cfg)
    sp = scene_planner or ScenePlanner(scene.start, scene.end, troi, regions.ro, regions.rm_shape, cfg)

    if planner == "a":
        sol = sp.deterministic()
        plan = _deterministic_plan(sol, scene.start, scene.end, troi, cfg, regions.manip_cands)
        # blind aim at X_w: success judged on the distance band alone
        return _finish(plan, cfg, mpoi, check_aim=False)

    if planner == "b":
        sol = sp.decoupled()
    else:
        if rng is None:
            raise ValueError("planner c needs a random stream or sample set")
        samples = rng if isinstance(rng, np.ndarray) else sample_mpoi_batch(cfg.prior(troi), troi, rng, cfg.mc_samples)
        sol = sp.capm(samples)

    x1 = sol.x1
    obs = observation_pose(x1, troi, regions.obs_cands, cfg)
    rm_true = regions.rm_shape.at(mpoi.point)
    if planner == "c" and rm_true.contains(x1.xy):
        ee = manipulation_pose(x1, mpoi.xy, regions.manip_cands, cfg)
        states = _assemble(scene.start, x1, TaskLabel.ACTIVE_PERCEPTION, obs, None, ee, scene.end, cfg.task.xi)
        branch = Branch.UPPER
    else:
        x3 = replan_manipulation(x1, scene.end, mpoi, regions.rm_shape, cfg, allow_stay=False)
        ee = manipulation_pose(x3, mpoi.xy, regions.manip_cands, cfg)
        states = _assemble(scene.start, x1, TaskLabel.ACTIVE_PERCEPTION, obs, x3, ee, scene.end, cfg.task.xi)
        branch = Branch.LOWER
    plan = Plan(states, branch, sol.objective, p_upper=sol.p_upper, fallback=sol.x3)
    return _finish(plan, cfg, mpoi, check_aim=True)
