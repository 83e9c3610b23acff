import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from saclo.compliance import (
    YAW_FORCE_DEADBAND,
    CcpTarget,
    capture_point,
    ccp_target,
    desired_velocity,
    target_yaw,
)
from saclo.core import Command, TaskMode, wrap_angle


def _cmd(vx=0.0, vy=0.0, wz=0.0, k=0.0):
    return Command(mode=TaskMode.COMPLIANT, vx=vx, vy=vy, wz=wz, k=k)


# ------------------------------------------------------------ velocity target


def test_desired_velocity_zero_gain_identity():
    assert desired_velocity(_cmd(vx=1.2, vy=-0.4), (500.0, -300.0)) == (1.2, -0.4)


def test_desired_velocity_example_lateral():
    # gain 0.01 with a 100 N lateral push adds exactly 1 m/s sideways
    vx, vy = desired_velocity(_cmd(vx=0.5, k=0.01), (0.0, 100.0))
    assert vx == pytest.approx(0.5, abs=1e-12)
    assert vy == pytest.approx(1.0, abs=1e-12)


def test_desired_velocity_example_backward():
    vx, vy = desired_velocity(_cmd(k=0.02), (-50.0, 0.0))
    assert vx == pytest.approx(-1.0, abs=1e-12)
    assert vy == pytest.approx(0.0, abs=1e-12)


def test_desired_velocity_rejects_nonfinite():
    with pytest.raises(ValueError):
        desired_velocity(_cmd(k=0.01), (math.nan, 0.0))


def test_desired_velocity_rejects_safe_command():
    with pytest.raises(ValueError):
        desired_velocity(Command(mode=TaskMode.SAFE), (0.0, 0.0))


@given(st.floats(-400, 400), st.floats(-400, 400), st.floats(0, 0.02))
def test_desired_velocity_affine_in_force(fx, fy, k):
    c = _cmd(vx=0.3, vy=-0.1, k=k)
    v1 = desired_velocity(c, (fx, fy))
    v2 = desired_velocity(c, (2 * fx, 2 * fy))
    # doubling F doubles the offset from the commanded velocity exactly
    assert v2[0] - 0.3 == pytest.approx(2 * (v1[0] - 0.3), abs=1e-9)
    assert v2[1] + 0.1 == pytest.approx(2 * (v1[1] + 0.1), abs=1e-9)


# -------------------------------------------------------------- capture point


def test_capture_point_equilibrium():
    assert capture_point((0.0, 0.0), (0.0, 0.0), 0.3, 15.0, 9.81) == (0.0, 0.0)


def test_capture_point_hand_example():
    dx, dy = capture_point((1.0, 0.0), (150.0, 0.0), 0.3, 15.0, 9.81)
    # sqrt(0.3/9.81)*1 + 150*0.3/(15*9.81) = 0.174875 + 0.305810
    assert dx == pytest.approx(0.4806847517, abs=1e-9)
    assert dy == 0.0


def test_capture_point_velocity_only():
    _, dy = capture_point((0.0, -0.5), (0.0, 0.0), 0.3, 15.0, 9.81)
    assert dy == pytest.approx(-0.0874376, abs=1e-6)


@pytest.mark.parametrize("bad", [dict(z_h=0.0), dict(mass=-1.0), dict(g=0.0)])
def test_capture_point_domain_errors(bad):
    kw = dict(z_h=0.3, mass=15.0, g=9.81)
    kw.update(bad)
    with pytest.raises(ValueError):
        capture_point((0.0, 0.0), (0.0, 0.0), **kw)


@given(st.floats(-3, 3), st.floats(-3, 3), st.floats(-500, 500), st.floats(-500, 500))
def test_capture_point_superposition(vx, vy, fx, fy):
    z, m, g = 0.3, 15.0, 9.81
    a = capture_point((vx, vy), (0.0, 0.0), z, m, g)
    b = capture_point((0.0, 0.0), (fx, fy), z, m, g)
    c = capture_point((vx, vy), (fx, fy), z, m, g)
    assert c[0] == pytest.approx(a[0] + b[0], abs=1e-12)
    assert c[1] == pytest.approx(a[1] + b[1], abs=1e-12)


# ----------------------------------------------------------------- yaw target


def test_target_yaw_quadrant():
    assert target_yaw((100.0, 100.0)) == pytest.approx(math.pi / 4, abs=1e-12)


def test_target_yaw_tail_alignment():
    # force straight backward: tail alignment, no rotation requested
    assert target_yaw((-100.0, 0.0)) == pytest.approx(0.0, abs=1e-12)


def test_target_yaw_boundary_zero_fx():
    assert target_yaw((0.0, 50.0)) == pytest.approx(math.pi / 2, abs=1e-12)


def test_target_yaw_deadband():
    assert target_yaw((1.0, 1.0)) is None
    assert target_yaw((YAW_FORCE_DEADBAND + 1e-6, 0.0)) == pytest.approx(0.0)


@given(st.floats(-700, 700), st.floats(-700, 700))
def test_target_yaw_head_tail_symmetry(fx, fy):
    if math.hypot(fx, fy) < YAW_FORCE_DEADBAND:
        return
    a = target_yaw((fx, fy))
    b = target_yaw((-fx, -fy))
    diff = abs(wrap_angle(a - b))
    # the body x-axis line is identical under force reversal
    assert min(diff, abs(diff - math.pi)) < 1e-9


@pytest.mark.parametrize("angle_deg", range(0, 360, 15))
def test_target_yaw_never_requests_more_than_quarter_turn(angle_deg):
    # the branch on F_x keeps the requested body rotation within a quarter
    # turn for every body-frame force direction
    a = math.radians(angle_deg)
    f = (200.0 * math.cos(a), 200.0 * math.sin(a))
    rot = target_yaw(f)
    assert abs(rot) <= math.pi / 2 + 1e-12


def test_ccp_target_composes():
    t = ccp_target((1.0, 0.0), (150.0, 0.0), 0.3, 15.0, 9.81, current_yaw=0.4)
    assert isinstance(t, CcpTarget)
    assert t.dx == pytest.approx(0.4806847517, abs=1e-9)
    # force along the body x-axis: already aligned, keep the heading
    assert t.yaw == pytest.approx(0.4)


def test_ccp_target_deadband_keeps_current_yaw():
    t = ccp_target((0.1, 0.0), (0.0, 0.0), 0.3, 15.0, 9.81, current_yaw=0.7)
    assert t.yaw == pytest.approx(0.7)


def test_ccp_target_validation():
    with pytest.raises(ValueError):
        CcpTarget(math.nan, 0.0, 0.0)
    with pytest.raises(ValueError):
        CcpTarget(0.0, 0.0, 4.0)
