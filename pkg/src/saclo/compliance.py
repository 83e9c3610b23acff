"""Closed-form control math: admittance velocity generation and the
corrected-capture-point target with force-aligned yaw.

All functions are pure. Forces are interpreted in the robot body frame;
the vertical force component never enters these formulas.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

from .core import Command, TaskMode, wrap_angle

# Below this horizontal force magnitude no yaw alignment is requested:
# the alignment direction is numerically undefined near zero force.
YAW_FORCE_DEADBAND = 5.0  # N


@dataclass(frozen=True)
class CcpTarget:
    """Position offset (m, body frame) and yaw target the robot must reach
    to arrest its momentum under the current push."""

    dx: float
    dy: float
    yaw: float

    def __post_init__(self):
        if not (math.isfinite(self.dx) and math.isfinite(self.dy) and math.isfinite(self.yaw)):
            raise ValueError("capture target components must be finite")
        if not (-math.pi < self.yaw <= math.pi):
            raise ValueError("capture target yaw must lie in (-pi, pi]")


def desired_velocity(cmd: Command, force_xy: tuple[float, float]) -> tuple[float, float]:
    """Admittance velocity target: v* = v' + k * F, componentwise in x and y.

    The yaw-rate command passes through untouched and is not returned here.
    """
    if cmd.mode is not TaskMode.COMPLIANT:
        raise ValueError("desired_velocity requires a compliant command")
    fx, fy = force_xy
    if not (math.isfinite(fx) and math.isfinite(fy)):
        raise ValueError("force components must be finite")
    return cmd.vx + cmd.k * fx, cmd.vy + cmd.k * fy


def capture_point(
    vel_xy: tuple[float, float],
    force_xy: tuple[float, float],
    z_h: float,
    mass: float,
    g: float,
) -> tuple[float, float]:
    """Position offset where support must be placed to restore balance:
    sqrt(z_h/g) * v + F * z_h / (m * g), per axis."""
    if z_h <= 0.0 or mass <= 0.0 or g <= 0.0:
        raise ValueError("z_h, mass and g must all be positive")
    c_v = math.sqrt(z_h / g)
    c_f = z_h / (mass * g)
    return c_v * vel_xy[0] + c_f * force_xy[0], c_v * vel_xy[1] + c_f * force_xy[1]


def target_yaw(force_xy: tuple[float, float]) -> float | None:
    """Body rotation aligning the x-axis line with a body-frame force.

    Head alignment for forces toward the front (F_x >= 0), tail alignment
    otherwise, so the requested rotation never exceeds a quarter turn.
    Returns None inside the force dead-band: no rotation is requested.
    The result is relative to the current heading; add the current yaw for
    an absolute target.
    """
    fx, fy = force_xy
    if not (math.isfinite(fx) and math.isfinite(fy)):
        raise ValueError("force components must be finite")
    if math.hypot(fx, fy) < YAW_FORCE_DEADBAND:
        return None
    psi = math.atan2(fy, fx)
    if fx < 0.0:
        psi = wrap_angle(psi + math.pi)
    return wrap_angle(psi)


def ccp_target(
    vel_xy: tuple[float, float],
    force_xy: tuple[float, float],
    z_h: float,
    mass: float,
    g: float,
    current_yaw: float,
) -> CcpTarget:
    """Full capture target from the instantaneous body-frame velocity and
    push; the yaw field is absolute (current heading plus the alignment
    rotation)."""
    dx, dy = capture_point(vel_xy, force_xy, z_h, mass, g)
    rot = target_yaw(force_xy)
    yaw = wrap_angle(current_yaw) if rot is None else wrap_angle(current_yaw + rot)
    return CcpTarget(dx, dy, yaw)
