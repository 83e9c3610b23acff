"""Shared domain types, dimensional constants, angle math and seeded RNG.

Every dimensional constant used anywhere in the package lives here; no
other module re-declares them.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

# Fixed dimensional contracts.
NUM_JOINTS = 12
NUM_FEET = 4
HISTORY_LEN = 20

# Joint ordering: (front-left, front-right, rear-left, rear-right) x
# (hip, thigh, calf).  Index = leg * 3 + joint, with legs FL=0, FR=1,
# RL=2, RR=3 and joints hip=0, thigh=1, calf=2.
LEG_NAMES = ("FL", "FR", "RL", "RR")
JOINT_TYPE_NAMES = ("hip", "thigh", "calf")
JOINT_NAMES = tuple(f"{leg}_{j}" for leg in LEG_NAMES for j in JOINT_TYPE_NAMES)

# Observable state x_t = [gravity(3), ang_vel(3), q(12), qd(12),
# prev_action(12), command(4)].
OBS_X_DIM = 3 + 3 + NUM_JOINTS + NUM_JOINTS + NUM_JOINTS + 4
# Privileged extension appends orientation quat(4), base velocity(3),
# external force(3), external torque(3).
PRIV_EXTRA_DIM = 4 + 3 + 3 + 3
PRIV_OBS_DIM = OBS_X_DIM + PRIV_EXTRA_DIM
STACKED_OBS_DIM = HISTORY_LEN * OBS_X_DIM

TWO_PI = 2.0 * math.pi


def wrap_angle(a: float) -> float:
    """Wrap an angle to (-pi, pi]."""
    if not math.isfinite(a):
        raise ValueError(f"wrap_angle requires a finite angle, got {a!r}")
    r = math.fmod(a, TWO_PI)
    if r <= -math.pi:
        r += TWO_PI
    elif r > math.pi:
        r -= TWO_PI
    return r


@dataclass(frozen=True)
class Quat:
    """Unit quaternion (w, x, y, z) for base orientation."""

    w: float
    x: float
    y: float
    z: float

    def norm(self) -> float:
        return math.sqrt(self.w * self.w + self.x * self.x + self.y * self.y + self.z * self.z)

    def normalized(self) -> "Quat":
        n = self.norm()
        if n == 0.0 or not math.isfinite(n):
            raise ValueError("cannot normalize a zero or non-finite quaternion")
        return Quat(self.w / n, self.x / n, self.y / n, self.z / n)

    def rotate_inverse(self, v: np.ndarray) -> np.ndarray:
        """Rotate a world-frame vector into the body frame (q^-1 * v * q)."""
        w, x, y, z = self.w, self.x, self.y, self.z
        vx, vy, vz = float(v[0]), float(v[1]), float(v[2])
        # R^T v, with R the rotation matrix of this quaternion.
        rx = (1 - 2 * (y * y + z * z)) * vx + 2 * (x * y + w * z) * vy + 2 * (x * z - w * y) * vz
        ry = 2 * (x * y - w * z) * vx + (1 - 2 * (x * x + z * z)) * vy + 2 * (y * z + w * x) * vz
        rz = 2 * (x * z + w * y) * vx + 2 * (y * z - w * x) * vy + (1 - 2 * (x * x + y * y)) * vz
        return np.array([rx, ry, rz])

    @staticmethod
    def from_euler(roll: float, pitch: float, yaw: float) -> "Quat":
        """Build from intrinsic z-y-x (yaw, pitch, roll) Euler angles."""
        cr, sr = math.cos(roll / 2), math.sin(roll / 2)
        cp, sp = math.cos(pitch / 2), math.sin(pitch / 2)
        cy, sy = math.cos(yaw / 2), math.sin(yaw / 2)
        return Quat(
            cr * cp * cy + sr * sp * sy,
            sr * cp * cy - cr * sp * sy,
            cr * sp * cy + sr * cp * sy,
            cr * cp * sy - sr * sp * cy,
        )


def projected_gravity(q: Quat) -> np.ndarray:
    """World gravity direction (0, 0, -1) expressed in the body frame."""
    if abs(q.norm() - 1.0) > 1e-6:
        raise ValueError(f"projected_gravity requires a unit quaternion, norm={q.norm():.6g}")
    return q.rotate_inverse(np.array([0.0, 0.0, -1.0]))


class TaskMode(enum.Enum):
    COMPLIANT = "compliant"
    SAFE = "safe"


@dataclass(frozen=True)
class Command:
    """Task command: velocity tracking with a compliance gain, or a
    position-offset/yaw target for the recovery task.

    Exactly one payload is meaningful per mode; the other stays zeroed.
    """

    mode: TaskMode
    # Compliant payload: commanded body-frame velocities and admittance gain.
    vx: float = 0.0
    vy: float = 0.0
    wz: float = 0.0
    k: float = 0.0
    # Safe payload: position offset (m, body frame at issue time) and yaw target.
    dx: float = 0.0
    dy: float = 0.0
    yaw_target: float = 0.0

    def __post_init__(self):
        if self.mode is TaskMode.COMPLIANT:
            if self.k < 0.0:
                raise ValueError("compliance gain k must be >= 0")
            if self.dx or self.dy or self.yaw_target:
                raise ValueError("compliant command must not carry a safe payload")
        else:
            if self.vx or self.vy or self.wz or self.k:
                raise ValueError("safe command must not carry a compliant payload")
            if not (-math.pi < self.yaw_target <= math.pi):
                raise ValueError("yaw target must lie in (-pi, pi]")

    def as_obs_slot(self) -> np.ndarray:
        """4-wide command block of the observable state vector."""
        if self.mode is TaskMode.COMPLIANT:
            return np.array([self.vx, self.vy, self.wz, self.k])
        return np.array([self.dx, self.dy, self.yaw_target, 0.0])


@dataclass(frozen=True)
class RobotState:
    """Full simulator truth for one robot at one instant."""

    base_pos: np.ndarray          # (3,) world frame, m
    orientation: Quat
    base_lin_vel: np.ndarray      # (3,) body frame, m/s
    base_ang_vel: np.ndarray      # (3,) body frame, rad/s
    height: float                 # m
    joint_pos: np.ndarray         # (12,) rad
    joint_vel: np.ndarray         # (12,) rad/s
    joint_torque: np.ndarray      # (12,) N*m
    foot_contact: np.ndarray      # (4,) bool
    foot_air_time: np.ndarray     # (4,) s
    ext_force: np.ndarray         # (3,) N, world frame
    ext_torque: np.ndarray        # (3,) N*m, world frame
    sim_time: float               # s

    def __post_init__(self):
        if self.height < 0.0:
            raise ValueError("base height must be non-negative")
        for name in ("joint_pos", "joint_vel", "joint_torque"):
            if getattr(self, name).shape != (NUM_JOINTS,):
                raise ValueError(f"{name} must have exactly {NUM_JOINTS} entries")
        if self.foot_contact.shape != (NUM_FEET,) or self.foot_air_time.shape != (NUM_FEET,):
            raise ValueError(f"foot arrays must have exactly {NUM_FEET} entries")
        if np.any(self.foot_air_time[self.foot_contact.astype(bool)] != 0.0):
            raise ValueError("a foot in contact must have zero accumulated air time")


def seeded_rng(seed: int) -> np.random.Generator:
    """Deterministic, platform-stable random stream."""
    return np.random.Generator(np.random.PCG64(seed))


def spawn_rngs(seed: int, n: int) -> list[np.random.Generator]:
    """Independent per-worker streams derived from one root seed."""
    seq = np.random.SeedSequence(seed)
    return [np.random.Generator(np.random.PCG64(s)) for s in seq.spawn(n)]


@dataclass
class RunningStat:
    """Streaming mean/std accumulator (Welford)."""

    count: int = 0
    mean: float = 0.0
    _m2: float = field(default=0.0, repr=False)

    def push(self, x: float) -> None:
        self.count += 1
        d = x - self.mean
        self.mean += d / self.count
        self._m2 += d * (x - self.mean)

    @property
    def std(self) -> float:
        return math.sqrt(self._m2 / self.count) if self.count > 1 else 0.0
