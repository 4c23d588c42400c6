"""Body-motion energy: state distance, move indicator and transition cost.

A transition between key states costs ``alpha * move + gamma * d`` where
``move`` is 1 when the body changes state at all and ``d`` is the state
distance. With ``distance_exponent = 2`` the positional part of ``d`` is the
squared planar distance; with ``distance_exponent = 1`` it is the plain
Euclidean distance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class EnergyParams:
    alpha: float = 1.0
    gamma: float = 2.0
    beta: float = 0.0
    distance_exponent: int = 2

    def __post_init__(self):
        if self.alpha < 0 or self.beta < 0:
            raise ValueError("alpha and beta must be non-negative")
        if not self.gamma > 0:
            raise ValueError("gamma must be positive")
        if self.distance_exponent not in (1, 2):
            raise ValueError("distance_exponent must be 1 or 2")


def _planar(dx: np.ndarray | float, dy: np.ndarray | float, exponent: int):
    sq = dx * dx + dy * dy
    return sq if exponent == 2 else np.sqrt(sq)


def _orientation_term(yaw_a, yaw_b):
    # planar yaw quaternions: |q_a . q_b| = |cos(dyaw / 2)|
    return 1.0 - np.abs(np.cos(0.5 * (np.asarray(yaw_b) - np.asarray(yaw_a))))


def state_distance(a, b, params: EnergyParams) -> float:
    d = _planar(b.x - a.x, b.y - a.y, params.distance_exponent)
    if params.beta:
        d += params.beta * float(_orientation_term(a.yaw, b.yaw))
    return float(d)


def energy_cost(a, b, params: EnergyParams) -> float:
    d = state_distance(a, b, params)
    if d == 0:
        return 0.0
    return params.alpha + params.gamma * d


def transition_costs(xy_a, xy_b, params: EnergyParams, yaw_a=None, yaw_b=None) -> np.ndarray:
    """Broadcasting energy cost between arrays of planar positions (..., 2)."""
    xy_a = np.asarray(xy_a, dtype=float)
    xy_b = np.asarray(xy_b, dtype=float)
    diff = xy_b - xy_a
    d = _planar(diff[..., 0], diff[..., 1], params.distance_exponent)
    if params.beta and yaw_a is not None and yaw_b is not None:
        d = d + params.beta * _orientation_term(yaw_a, yaw_b)
    return np.where(d > 0, params.alpha + params.gamma * d, 0.0)


def sequence_cost(states, params: EnergyParams) -> float:
    """Sum of transition costs along consecutive body states."""
    return math.fsum(energy_cost(a, b, params) for a, b in zip(states, states[1:]))
