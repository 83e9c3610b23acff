"""Reward terms for the velocity-tracking task, the position-recovery task,
and the regularizers shared by both, each with its fixed weight.

Every function returns a named breakdown so training telemetry and tests can
inspect raw values, weights and weighted values per term.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import NUM_JOINTS, wrap_angle

# term name -> weight
COMPLIANT_WEIGHTS = {
    "lin_vel_tracking": 1.0,
    "ang_vel_tracking": 0.5,
}
SAFE_WEIGHTS = {
    "pos_tracking_soft": 20.0,
    "pos_tracking_tight": 20.0,
    "yaw_tracking": 20.0,
    "vel_direction": 40.0,
    "yaw_rate_direction": 20.0,
    "stand_still": 20.0,
}
REGULARIZER_WEIGHTS = {
    "base_height": -0.5,
    "ang_vel_penalty": -0.05,
    "torques": -0.0005,
    "joint_velocities": -0.0001,
    "joint_accelerations": -2.5e-7,
    "action_rate": -0.01,
    "joint_angle_limit": -10.0,
    "joint_velocity_limit": -5.0,
    "joint_torque_limit": -5.0,
    "feet_air_time": 2.0,
    "collision": -10.0,
}

BASE_HEIGHT_TARGET = 0.25      # m
STAND_STILL_MIN_HEIGHT = 0.26  # m; intentionally above the height target
STAND_STILL_MAX_SPEED = 0.5    # m/s
STAND_STILL_MAX_YAW_RATE = 0.1  # rad/s
# Fraction of each limit beyond which the one-sided limit penalties engage.
ANGLE_LIMIT_FRACTION = 0.9
VELOCITY_LIMIT_FRACTION = 0.9
TORQUE_LIMIT_FRACTION = 0.85
# "Reached" predicate for the recovery target.
REACHED_POS_TOL = 0.1   # m
REACHED_YAW_TOL = 0.2   # rad


@dataclass(frozen=True)
class JointLimits:
    """Per-joint absolute limits used by the one-sided limit penalties."""

    angle: np.ndarray     # (12,) rad
    velocity: np.ndarray  # (12,) rad/s
    torque: np.ndarray    # (12,) N*m

    def __post_init__(self):
        for name in ("angle", "velocity", "torque"):
            if getattr(self, name).shape != (NUM_JOINTS,):
                raise ValueError(f"{name} limits must have {NUM_JOINTS} entries")


@dataclass
class RewardBreakdown:
    """term name -> (raw value, weight, weighted value), plus the total."""

    terms: dict[str, tuple[float, float, float]] = field(default_factory=dict)

    def add(self, name: str, raw: float, weight: float) -> None:
        self.terms[name] = (raw, weight, raw * weight)

    def merge(self, other: "RewardBreakdown") -> "RewardBreakdown":
        out = RewardBreakdown(dict(self.terms))
        out.terms.update(other.terms)
        return out

    @property
    def total(self) -> float:
        return sum(w for _, _, w in self.terms.values())

    def weighted(self) -> dict[str, float]:
        return {k: w for k, (_, _, w) in self.terms.items()}


def breakdown_csv_header(breakdown: "RewardBreakdown") -> str:
    """Column header for per-step reward streaming."""
    names = list(breakdown.terms)
    return ",".join(["step"] + [f"{n}_raw" for n in names]
                    + [f"{n}_weighted" for n in names] + ["total"])


def breakdown_csv_row(step: int, breakdown: "RewardBreakdown") -> str:
    vals = breakdown.terms.values()
    return ",".join([str(step)] + [f"{raw:.9g}" for raw, _, _ in vals]
                    + [f"{w:.9g}" for _, _, w in vals]
                    + [f"{breakdown.total:.9g}"])


def compliant_rewards(
    v_star_xy: tuple[float, float],
    v_xy: tuple[float, float],
    wz_cmd: float,
    wz: float,
) -> RewardBreakdown:
    """Velocity-tracking terms toward the admittance target."""
    out = RewardBreakdown()
    err2 = (v_star_xy[0] - v_xy[0]) ** 2 + (v_star_xy[1] - v_xy[1]) ** 2
    out.add("lin_vel_tracking", math.exp(-err2 / 0.25), COMPLIANT_WEIGHTS["lin_vel_tracking"])
    out.add(
        "ang_vel_tracking",
        math.exp(-((wz_cmd - wz) ** 2) / 0.25),
        COMPLIANT_WEIGHTS["ang_vel_tracking"],
    )
    return out


def safe_rewards(
    remaining_xy: tuple[float, float],
    yaw: float,
    yaw_target: float,
    v_xy: tuple[float, float],
    yaw_rate: float,
    height: float,
    reached: bool,
) -> RewardBreakdown:
    """Position/yaw reaching terms; `remaining_xy` is the offset still to
    cover, treated as the Euclidean offset vector (never a scalar sum)."""
    out = RewardBreakdown()
    dx, dy = remaining_xy
    d2 = dx * dx + dy * dy
    out.add("pos_tracking_soft", 1.0 / (1.0 + d2), SAFE_WEIGHTS["pos_tracking_soft"])
    out.add("pos_tracking_tight", 1.0 / (1.0 + d2 / 0.25), SAFE_WEIGHTS["pos_tracking_tight"])
    yaw_err = wrap_angle(yaw - yaw_target)
    out.add("yaw_tracking", 1.0 / (1.0 + (yaw_err / 0.5) ** 2), SAFE_WEIGHTS["yaw_tracking"])
    dist = math.sqrt(d2)
    if dist == 0.0:
        vel_dir = 0.0  # direction undefined at the target; no credit, no penalty
    else:
        vel_dir = max(0.0, (v_xy[0] * dx + v_xy[1] * dy) / dist)
    out.add("vel_direction", vel_dir, SAFE_WEIGHTS["vel_direction"])
    err_to_target = wrap_angle(yaw_target - yaw)
    sign = 0.0 if err_to_target == 0.0 else math.copysign(1.0, err_to_target)
    out.add("yaw_rate_direction", yaw_rate * sign, SAFE_WEIGHTS["yaw_rate_direction"])
    still = (
        math.hypot(*v_xy) < STAND_STILL_MAX_SPEED
        and abs(yaw_rate) < STAND_STILL_MAX_YAW_RATE
        and height > STAND_STILL_MIN_HEIGHT
        and reached
    )
    out.add("stand_still", 1.0 if still else 0.0, SAFE_WEIGHTS["stand_still"])
    return out


def reached_predicate(remaining_xy: tuple[float, float], yaw: float, yaw_target: float) -> bool:
    return (
        math.hypot(*remaining_xy) < REACHED_POS_TOL
        and abs(wrap_angle(yaw_target - yaw)) < REACHED_YAW_TOL
    )


def shared_regularizers(
    height: float,
    ang_vel_xy: tuple[float, float],
    joint_pos: np.ndarray,
    joint_vel: np.ndarray,
    prev_joint_vel: np.ndarray,
    joint_torque: np.ndarray,
    action: np.ndarray,
    prev_action: np.ndarray,
    dt: float,
    limits: JointLimits,
    touchdown_air_time: np.ndarray,
    collision: bool,
) -> RewardBreakdown:
    """Posture/smoothness regularizers applied to both tasks.

    Limit terms are one-sided: zero anywhere strictly inside 90% (angles,
    velocities) or 85% (torques) of the limit, so staying clear of limits is
    never rewarded outright. Feet air time is the swing duration credited at
    the step a foot touches down.
    """
    out = RewardBreakdown()
    out.add("base_height", (height - BASE_HEIGHT_TARGET) ** 2, REGULARIZER_WEIGHTS["base_height"])
    out.add(
        "ang_vel_penalty",
        ang_vel_xy[0] ** 2 + ang_vel_xy[1] ** 2,
        REGULARIZER_WEIGHTS["ang_vel_penalty"],
    )
    out.add("torques", float(np.dot(joint_torque, joint_torque)), REGULARIZER_WEIGHTS["torques"])
    out.add(
        "joint_velocities",
        float(np.dot(joint_vel, joint_vel)),
        REGULARIZER_WEIGHTS["joint_velocities"],
    )
    accel = (prev_joint_vel - joint_vel) / dt
    out.add(
        "joint_accelerations",
        float(np.dot(accel, accel)),
        REGULARIZER_WEIGHTS["joint_accelerations"],
    )
    # Action rate is the plain squared step difference; dividing by the
    # control period would scale this term 2500x past every task term at
    # 50 Hz and freeze training.
    rate = prev_action - action
    out.add("action_rate", float(np.dot(rate, rate)), REGULARIZER_WEIGHTS["action_rate"])

    angle_excess = np.maximum(0.0, np.abs(joint_pos) - ANGLE_LIMIT_FRACTION * limits.angle)
    out.add("joint_angle_limit", float(np.sum(angle_excess)), REGULARIZER_WEIGHTS["joint_angle_limit"])
    vel_excess = np.maximum(0.0, np.abs(joint_vel) - VELOCITY_LIMIT_FRACTION * limits.velocity)
    out.add(
        "joint_velocity_limit", float(np.sum(vel_excess)), REGULARIZER_WEIGHTS["joint_velocity_limit"]
    )
    torque_excess = np.maximum(0.0, np.abs(joint_torque) - TORQUE_LIMIT_FRACTION * limits.torque)
    out.add(
        "joint_torque_limit", float(np.sum(torque_excess)), REGULARIZER_WEIGHTS["joint_torque_limit"]
    )
    out.add("feet_air_time", float(np.sum(touchdown_air_time)), REGULARIZER_WEIGHTS["feet_air_time"])
    out.add("collision", 1.0 if collision else 0.0, REGULARIZER_WEIGHTS["collision"])
    return out
