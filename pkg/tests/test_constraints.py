import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from capm.constraints import (
    TaskParams,
    aim_error_deg,
    coverage_indicator,
    epmc_indicator,
    mtc_check,
    nsv_batch,
    nsv_indicator,
)
from capm.geom import CameraModel, EePose, Mpoi, Troi

CAM = CameraModel()
NADIR = EePose((0.0, 0.0, 1.0), (0.0, 0.0, -1.0))


@pytest.mark.parametrize("radius, expect", [(0.25, 1), (0.5, 0), (0.4, 1), (0.41, 0)])
def test_nadir_coverage(radius, expect):
    # image circle radius 600 r px against the 240 px half-height
    assert coverage_indicator(NADIR, CAM, Troi((0.0, 0.0), radius)) == expect


def test_coverage_tangent_counts():
    assert coverage_indicator(NADIR, CAM, Troi((0.0, 0.0), 0.4)) == 1


def test_coverage_horizon_is_zero():
    ee = EePose((0.0, 0.0, 1.0), (math.cos(0.2), 0.0, -math.sin(0.2)))
    assert coverage_indicator(ee, CAM, Troi((2.0, 0.0), 0.1)) == 0


@pytest.mark.parametrize(
    "radius, delta, expect",
    [(0.25, 0.05, 1), (0.25, 0.25, 0), (0.5, 0.05, 0), (0.5, 0.01, 0)],
)
def test_nadir_nsv(radius, delta, expect):
    assert nsv_indicator(NADIR, CAM, Troi((0.0, 0.0), radius), TaskParams(delta=delta)) == expect


@pytest.mark.parametrize("d2, expect", [(0.07, 1), (0.04, 0), (0.10, 1), (0.1000001, 0)])
def test_epmc_band(d2, expect):
    mpoi = Mpoi((0.3, -0.2))
    h = math.sqrt(d2)
    ee = EePose.aimed_at((0.3, -0.2, h), mpoi.xyz)
    assert epmc_indicator(ee, mpoi, TaskParams()) == expect


@pytest.mark.parametrize("h, expect", [(0.25, 1), (0.5, 1), (0.2499, 0), (0.5001, 0)])
def test_epmc_inclusive_edges(h, expect):
    # squared distances 0.0625 and 0.25 are exact in binary
    ee = EePose.aimed_at((0.0, 0.0, h), (0.0, 0.0, 0.0))
    assert epmc_indicator(ee, Mpoi((0.0, 0.0)), TaskParams(eps_min=0.0625, eps_max=0.25)) == expect


def test_epmc_aim():
    mpoi = Mpoi((0.0, 0.0))
    pos = (0.2, 0.0, 0.15)
    good = EePose.aimed_at(pos, mpoi.xyz)
    off = EePose(pos, good.axis + np.array([0.0, 0.06, 0.0]))
    assert epmc_indicator(good, mpoi, TaskParams()) == 1
    assert epmc_indicator(off, mpoi, TaskParams()) == 0
    assert epmc_indicator(off, mpoi, TaskParams(), check_aim=False) == 1


@pytest.mark.parametrize("ticks, held, expect", [(3, True, 1), (2, True, 0), (5, False, 0), (0, False, 0), (4, True, 1)])
def test_mtc(ticks, held, expect):
    assert mtc_check(ticks, held, TaskParams(xi=3)) == expect


@pytest.mark.parametrize(
    "kwargs",
    [dict(delta=0.0), dict(delta=1.0), dict(eps_min=0.2, eps_max=0.1), dict(eps_min=-0.1), dict(xi=0)],
)
def test_task_params_validation(kwargs):
    with pytest.raises(ValueError):
        TaskParams(**kwargs)


def test_batch_nsv_agrees_with_scalar():
    rng = np.random.default_rng(11)
    troi = Troi((0.4, -0.3), 0.25)
    s = rng.uniform(0.0, 2.0, 400)
    h = rng.uniform(0.05, 1.6, 400)
    ang = rng.uniform(0, 2 * math.pi, 400)
    pos = np.column_stack([troi.center[0] + s * np.cos(ang), troi.center[1] + s * np.sin(ang), h])
    axes = np.column_stack([troi.xy - pos[:, :2], -h])
    batch = nsv_batch(pos, axes, CAM, troi, TaskParams())
    scalar = np.array([nsv_indicator(EePose(p, a), CAM, troi, TaskParams()) for p, a in zip(pos, axes)])
    assert batch.sum() > 50
    assert np.array_equal(batch.astype(int), scalar)


# --- properties -------------------------------------------------------------

pose = st.tuples(st.floats(0.0, 1.5), st.floats(0.0, 2 * math.pi), st.floats(0.1, 1.5), st.floats(-0.3, 0.3))


def _ee(p, troi):
    s, ang, h, jitter = p
    pos = (troi.center[0] + s * math.cos(ang), troi.center[1] + s * math.sin(ang), h)
    axis = (-s * math.cos(ang + jitter), -s * math.sin(ang + jitter), -h)
    return EePose(pos, axis)


@settings(max_examples=1000, deadline=None)
@given(pose, st.floats(0.05, 0.4))
def test_nsv_implies_coverage(p, r):
    troi = Troi((0.0, 0.0), r)
    ee = _ee(p, troi)
    assert nsv_indicator(ee, CAM, troi, TaskParams()) <= coverage_indicator(ee, CAM, troi)


@settings(max_examples=1000, deadline=None)
@given(pose, st.floats(0.01, 0.5), st.floats(0.01, 0.5))
def test_nsv_monotone_in_delta(p, d1, d2):
    troi = Troi((0.0, 0.0), 0.25)
    ee = _ee(p, troi)
    lo, hi = sorted((d1, d2))
    assert nsv_indicator(ee, CAM, troi, TaskParams(delta=hi)) <= nsv_indicator(ee, CAM, troi, TaskParams(delta=lo))


@settings(max_examples=1000, deadline=None)
@given(
    st.floats(-1, 1), st.floats(-1, 1), st.floats(0.0, 0.4), st.floats(0.0, 2 * math.pi),
    st.floats(0.05, 0.4), st.floats(0.0, 2 * math.pi), st.floats(-0.05, 0.05),
)
def test_epmc_rotation_invariance(mx, my, s, ang, h, rot, jitter):
    mpoi = Mpoi((mx, my))
    pos = np.array([mx + s * math.cos(ang), my + s * math.sin(ang), h])
    axis = mpoi.xyz - pos + np.array([jitter, 0.0, 0.0])
    c, sn = math.cos(rot), math.sin(rot)
    Rz = np.array([[c, -sn, 0.0], [sn, c, 0.0], [0.0, 0.0, 1.0]])
    pos2 = mpoi.xyz + Rz @ (pos - mpoi.xyz)
    a = epmc_indicator(EePose(pos, axis), mpoi, TaskParams())
    b = epmc_indicator(EePose(pos2, Rz @ axis), mpoi, TaskParams())
    d2 = float((pos - mpoi.xyz) @ (pos - mpoi.xyz))
    near_edge = min(abs(d2 - 0.05), abs(d2 - 0.10)) < 1e-12
    near_edge |= abs(aim_error_deg(EePose(pos, axis), mpoi.xyz) - 2.0) < 1e-9
    if not near_edge:
        assert a == b


@settings(max_examples=1000, deadline=None)
@given(st.integers(0, 20), st.integers(0, 20), st.booleans(), st.integers(1, 10))
def test_mtc_monotone(t1, t2, held, xi):
    lo, hi = sorted((t1, t2))
    assert mtc_check(lo, held, TaskParams(xi=xi)) <= mtc_check(hi, held, TaskParams(xi=xi))
