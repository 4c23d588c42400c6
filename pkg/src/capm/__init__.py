"""Coupled active perception and manipulation planning for a mobile manipulator."""

from .constraints import TaskParams, coverage_indicator, epmc_indicator, mtc_check, nsv_indicator
from .energy import EnergyParams, energy_cost, sequence_cost, state_distance
from .geom import CameraModel, EePose, Mpoi, Troi, fov_footprint, homography_from_ee, troi_area_ratio
from .planner import (
    Plan,
    PlannerConfig,
    TrialScene,
    execute_trial,
    plan_capm,
    plan_decoupled,
    plan_deterministic,
    replan_manipulation,
)
from .reach import Annulus, ArmModel, BodyPose, ProblemType, SearchGrid, classify_problem_type, compute_rm, compute_ro
from .sim import ExperimentConfig, MetricsTable, compute_eta, generate_trials, run_experiment
from .uncertainty import MpoiDistribution, RngStream, p_feasible, sample_mpoi

__version__ = "0.1.0"
