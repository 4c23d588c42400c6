"""Seeded Monte Carlo harness: scene generation, batch execution and metrics."""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .constraints import TaskParams
from .energy import EnergyParams
from .errors import CapmError
from .geom import CameraModel, Mpoi, Troi
from .planner import (
    PLANNERS,
    Branch,
    PlanGrid,
    PlannerConfig,
    SceneRegions,
    ScenePlanner,
    TrialScene,
    execute_trial,
)
from .reach import DEFAULT_BODY_HEIGHT, ArmModel, BodyPose, SearchGrid, compute_rm, manipulation_candidates
from .uncertainty import RngStream, mix_stream, sample_mpoi_batch

log = logging.getLogger(__name__)

SIGMA_MODES = {"linear": 1, "squared": 2}

# stream tags
_TROI, _MPOI, _SAA = 1, 2, 3


@dataclass(frozen=True)
class ExperimentConfig:
    n_trials: int = 1000
    workspace: float = 3.0
    r_w_range: tuple[float, float] = (0.2, 0.3)
    path_lengths: tuple[float, ...] = (2.75, 3.25, 3.75, 4.25, 4.75)
    sigma_mode: str = "linear"
    truncate: bool = True
    energy: EnergyParams = EnergyParams(distance_exponent=1)
    task: TaskParams = TaskParams()
    camera: CameraModel = CameraModel()
    arm: ArmModel = ArmModel()
    master_seed: int = 20240101
    mc_samples: int = 2000
    body_height: float = DEFAULT_BODY_HEIGHT
    search: SearchGrid = SearchGrid()
    plan_grid: PlanGrid = PlanGrid()

    def __post_init__(self):
        object.__setattr__(self, "r_w_range", tuple(float(v) for v in self.r_w_range))
        object.__setattr__(self, "path_lengths", tuple(float(v) for v in self.path_lengths))
        if self.n_trials < 1:
            raise ValueError("n_trials must be at least 1")
        if not self.workspace > 0:
            raise ValueError("workspace side must be positive")
        lo, hi = self.r_w_range
        if not 0 < lo <= hi:
            raise ValueError("r_w_range must be ordered and positive")
        if not self.path_lengths or any(L <= 0 for L in self.path_lengths):
            raise ValueError("path_lengths must be a nonempty list of positive lengths")
        if self.sigma_mode not in SIGMA_MODES:
            raise ValueError(f"sigma_mode must be one of {sorted(SIGMA_MODES)}")
        if self.mc_samples < 1:
            raise ValueError("mc_samples must be at least 1")

    def planner_config(self) -> PlannerConfig:
        return PlannerConfig(
            energy=self.energy,
            task=self.task,
            arm=self.arm,
            camera=self.camera,
            search=self.search,
            grid=self.plan_grid,
            mc_samples=self.mc_samples,
            body_height=self.body_height,
            sigma_exponent=SIGMA_MODES[self.sigma_mode],
            truncate=self.truncate,
        )


@dataclass(frozen=True)
class TrialRecord:
    trial_id: int
    path_length: float
    planner: str
    branch: str
    success: bool
    expected_cost: float
    realized_cost: float
    troi_x: float
    troi_y: float
    r_w: float
    mpoi_x: float
    mpoi_y: float
    x1: tuple[float, float] | None
    x3: tuple[float, float] | None
    error: str | None = None


@dataclass
class MetricsTable:
    path_lengths: tuple[float, ...]
    success_rate: dict[tuple[str, float], float]
    avg_cost: dict[tuple[str, float], float]
    eta_bc: dict[float, float]
    pooled_success: dict[str, float]
    failures: list[tuple[int, float, str]] = field(default_factory=list)
    trials: list[TrialRecord] = field(default_factory=list, repr=False)


def compute_eta(avg_b: float, avg_c: float) -> float:
    if avg_c == 0:
        raise ZeroDivisionError("avg_c must be non-zero")
    return (avg_b - avg_c) / avg_c


# ----------------------------------------------------------------------------
# scenes


def trial_troi(cfg: ExperimentConfig, trial: int) -> Troi:
    g = RngStream(cfg.master_seed, mix_stream(trial, _TROI)).generator()
    half = cfg.workspace / 2
    c = g.uniform(-half, half, 2)
    r = g.uniform(*cfg.r_w_range)
    return Troi((float(c[0]), float(c[1])), float(r))


def trial_mpoi(cfg: ExperimentConfig, trial: int, troi: Troi) -> Mpoi:
    pc = cfg.planner_config()
    pt = sample_mpoi_batch(pc.prior(troi), troi, RngStream(cfg.master_seed, mix_stream(trial, _MPOI)), 1)[0]
    return Mpoi((float(pt[0]), float(pt[1])))


def saa_stream(cfg: ExperimentConfig, trial: int, path_index: int) -> RngStream:
    return RngStream(cfg.master_seed, mix_stream(trial, path_index, _SAA))


def path_endpoints(L: float) -> tuple[BodyPose, BodyPose]:
    return BodyPose(-L / 2, 0.0, 0.0), BodyPose(L / 2, 0.0, 0.0)


def generate_trials(cfg: ExperimentConfig) -> list[TrialScene]:
    """N x |path_lengths| scenes, trial-major. TROI and MPOI are shared across the path lengths of a trial."""
    scenes = []
    for t in range(cfg.n_trials):
        troi = trial_troi(cfg, t)
        mpoi = trial_mpoi(cfg, t, troi)
        for L in cfg.path_lengths:
            start, end = path_endpoints(L)
            scenes.append(TrialScene(start, end, troi, mpoi))
    return scenes


# ----------------------------------------------------------------------------
# execution


def _record(t, L, planner, scene, plan=None, error=None) -> TrialRecord:
    troi, mpoi = scene.troi, scene.mpoi
    x1 = x3 = None
    if plan is not None:
        mids = plan.body_states[1:-1]
        x1 = (mids[0].x, mids[0].y) if mids else None
        x3 = (mids[1].x, mids[1].y) if len(mids) > 1 else None
    return TrialRecord(
        trial_id=t,
        path_length=L,
        planner=planner,
        branch=plan.branch.value if plan else "",
        success=bool(plan.success) if plan else False,
        expected_cost=plan.expected_cost if plan else math.nan,
        realized_cost=plan.realized_cost if plan else math.nan,
        troi_x=troi.center[0],
        troi_y=troi.center[1],
        r_w=troi.radius,
        mpoi_x=mpoi.point[0],
        mpoi_y=mpoi.point[1],
        x1=x1,
        x3=x3,
        error=error,
    )


def run_trial(cfg: ExperimentConfig, t: int, shared=None) -> list[TrialRecord]:
    """All path lengths and planners of trial ``t``; errors become failed records."""
    pc = cfg.planner_config()
    if shared is None:
        shared = _shared(cfg)
    rm_shape, mcands = shared
    troi = trial_troi(cfg, t)
    mpoi = trial_mpoi(cfg, t, troi)
    out = []
    try:
        regions = SceneRegions.compute(troi, pc, rm_shape, mcands)
    except CapmError as exc:
        log.warning("trial %d: region computation failed: %s", t, exc)
        for L in cfg.path_lengths:
            s, e = path_endpoints(L)
            out += [_record(t, L, p, TrialScene(s, e, troi, mpoi), error=repr(exc)) for p in PLANNERS]
        return out
    prior = pc.prior(troi)
    for k, L in enumerate(cfg.path_lengths):
        start, end = path_endpoints(L)
        scene = TrialScene(start, end, troi, mpoi)
        sp = ScenePlanner(start, end, troi, regions.ro, regions.rm_shape, pc)
        samples = None
        for p in PLANNERS:
            try:
                if p == "c" and samples is None:
                    samples = sample_mpoi_batch(prior, troi, saa_stream(cfg, t, k), pc.mc_samples)
                plan = execute_trial(p, scene, pc, samples, regions, sp)
                out.append(_record(t, L, p, scene, plan))
            except CapmError as exc:
                log.warning("trial %d, L=%g, planner %s failed: %s", t, L, p, exc)
                out.append(_record(t, L, p, scene, error=repr(exc)))
    return out


def _shared(cfg: ExperimentConfig):
    pc = cfg.planner_config()
    rm_shape = compute_rm((0.0, 0.0), pc.arm, pc.task, pc.search, pc.body_height)
    mcands = manipulation_candidates(pc.task, pc.search, pc.arm, pc.body_height)
    return rm_shape, mcands


def _run_chunk(args) -> list[TrialRecord]:
    cfg, lo, hi = args
    shared = _shared(cfg)
    out = []
    for t in range(lo, hi):
        out += run_trial(cfg, t, shared)
    return out


def run_trials(cfg: ExperimentConfig, workers: int = 1) -> list[TrialRecord]:
    """Records in (trial, path length, planner) order regardless of ``workers``."""
    n = cfg.n_trials
    if workers <= 1:
        return _run_chunk((cfg, 0, n))
    bounds = np.linspace(0, n, min(n, 4 * workers) + 1).astype(int)
    jobs = [(cfg, int(a), int(b)) for a, b in zip(bounds, bounds[1:]) if b > a]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        parts = list(pool.map(_run_chunk, jobs))
    return [r for part in parts for r in part]


def aggregate(records: list[TrialRecord], path_lengths) -> MetricsTable:
    """Success percentages and mean realized costs; sums run in record order."""
    path_lengths = tuple(path_lengths)
    success, avg, pooled = {}, {}, {}
    failures = [(r.trial_id, r.path_length, r.planner) for r in records if r.error]
    for p in PLANNERS:
        mine = [r for r in records if r.planner == p]
        pooled[p] = 100.0 * float(np.sum([r.success for r in mine], dtype=float)) / len(mine) if mine else math.nan
        for L in path_lengths:
            rows = [r for r in mine if r.path_length == L]
            ok = [r.success for r in rows]
            costs = np.array([r.realized_cost for r in rows if not r.error], dtype=float)
            success[(p, L)] = 100.0 * float(np.sum(ok, dtype=float)) / len(rows) if rows else math.nan
            avg[(p, L)] = float(np.sum(costs)) / len(costs) if len(costs) else math.nan
    eta = {L: compute_eta(avg[("b", L)], avg[("c", L)]) for L in path_lengths}
    return MetricsTable(path_lengths, success, avg, eta, pooled, failures, list(records))


def run_experiment(cfg: ExperimentConfig, workers: int = 1) -> MetricsTable:
    records = run_trials(cfg, workers)
    table = aggregate(records, cfg.path_lengths)
    if table.failures:
        log.warning("%d planner runs failed: %s", len(table.failures), table.failures[:10])
    return table


def format_table(table: MetricsTable) -> str:
    """Fixed-width summary: one row per planner plus the eta row."""
    Ls = table.path_lengths
    head = f"{'planner':<8}{'success%':>10}" + "".join(f"{L:>9.2f}" for L in Ls)
    lines = [head]
    for p in PLANNERS:
        lines.append(f"{p:<8}{table.pooled_success[p]:>10.1f}" + "".join(f"{table.avg_cost[(p, L)]:>9.2f}" for L in Ls))
    lines.append(f"{'eta_bc':<8}{'':>10}" + "".join(f"{table.eta_bc[L]:>9.3f}" for L in Ls))
    return "\n".join(lines)


__all__ = [
    "Branch",
    "ExperimentConfig",
    "MetricsTable",
    "TrialRecord",
    "aggregate",
    "compute_eta",
    "format_table",
    "generate_trials",
    "run_experiment",
    "run_trials",
]
