"""Quadruped-surrogate environment: flat ground, domain randomization,
disturbance scheduling, per-task rewards and failure detection.

The per-step physics lives in the kernel backends (``saclo._kernel``); this
module owns episode state, randomization draws, observation assembly and
reward evaluation.
"""
from __future__ import annotations

import io
import math
from dataclasses import dataclass, field

import numpy as np

from . import rewards as rw
from ._kernel import kernel_step, layout as L
from .compliance import YAW_FORCE_DEADBAND, ccp_target, desired_velocity
from .core import (
    NUM_FEET,
    NUM_JOINTS,
    OBS_X_DIM,
    Command,
    Quat,
    RobotState,
    TaskMode,
    wrap_angle,
)


@dataclass(frozen=True)
class EnvConfig:
    """Environment constants plus domain-randomization ranges.

    `rand_*` fields mirror the randomization table: each is the half-width
    (or explicit low/high pair) of a uniform draw around the nominal value,
    scaled by the curriculum level at reset time.
    """

    control_hz: float = 50.0
    substeps: int = 4
    episode_s: float = 10.0
    mass: float = 15.0
    gravity: float = 9.81
    kp: float = 20.0
    kd: float = 0.5
    friction: float = 0.75
    action_scale: float = 0.5   # rad of joint-target offset per unit action
    action_clip: float = 1.0
    gait_enabled: bool = True
    noise_enabled: bool = True

    # Surrogate dynamics constants (documented effective parameters, not
    # literal robot geometry).
    inertia_z: float = 0.8
    inertia_att: float = 4.0
    k_gait: float = 16.0
    k_gait_yaw: float = 6.0
    c_drag: float = 0.15
    c_yaw_drag: float = 0.5
    k_height: float = 400.0
    c_height: float = 30.0
    c_att: float = 30.0
    support_x: float = 0.45     # longitudinal effective support half-length
    support_y: float = 0.35     # lateral; smaller => lateral pushes tip sooner
    k_lean: float = 25.0
    k_lean_yaw: float = 18.0
    v_leg_max: float = 3.5
    w_leg_max: float = 3.0
    trot_freq: float = 2.5
    lift_amp: float = 0.25
    joint_inertia: float = 0.015
    torque_limit: float = 24.0
    joint_vel_limit: float = 30.0
    load_gain: float = 0.03
    fail_height: float = 0.12
    fail_tilt: float = 1.2
    l_thigh: float = 0.213
    l_calf: float = 0.213
    roll_scale: float = 0.15
    stand_hip: float = 0.0
    stand_thigh: float = 0.85
    stand_calf: float = -1.6
    coll_height: float = 0.16
    coll_tilt: float = 0.7
    angle_limit_hip: float = 1.0
    angle_limit_thigh: float = 2.8
    angle_limit_calf: float = 2.6
    ext_torque_scale: float = 0.25
    shoulder_x: float = 0.19
    shoulder_y: float = 0.12
    yaw_lever: float = 0.15
    slip_tol_x: float = 4.0
    slip_tol_y: float = 2.5
    slip_cap: float = 3.0       # longitudinal slip-stress saturation
    slip_cap_y: float = 12.0    # lateral slip stress keeps growing much longer
    k_slip: float = 9.0
    z_air_max: float = 0.45

    # Randomization ranges at full curriculum.
    rand_mass_low: float = 12.75
    rand_mass_high: float = 17.25
    rand_friction_low: float = -0.5
    rand_friction_high: float = 2.0
    rand_kp_low: float = 19.0
    rand_kp_high: float = 21.0
    rand_kd_low: float = 0.48
    rand_kd_high: float = 0.52
    erfi_amp: float = 0.78
    rand_joint_bias: float = 0.08
    noise_ang_vel: float = 0.25
    noise_gravity: float = 0.1
    noise_joint_pos: float = 0.015
    noise_joint_vel: float = 1.5
    force_cap: float = 700.0
    # Force ceiling during compliant-policy training; beyond ~250 N many
    # surrogate pushes are unsurvivable for a non-rotating policy and only
    # inject return noise. Harvesting and evaluation use the full cap.
    train_force_cap: float = 250.0
    force_z_cap: float = 50.0
    torque_xy_cap: float = 50.0
    torque_z_cap: float = 20.0
    impact_min_s: float = 0.5
    impact_max_s: float = 3.0
    cmd_vx_cap: float = 2.5
    cmd_vy_cap: float = 2.0
    cmd_wz_cap: float = 1.5
    cmd_k_cap: float = 0.02
    safe_offset_cap: float = 1.0

    def __post_init__(self):
        if self.control_hz <= 0:
            raise ValueError("control rate must be positive")
        if self.substeps < 1:
            raise ValueError("substeps must be >= 1")
        for lo, hi, name in (
            (self.rand_mass_low, self.rand_mass_high, "mass"),
            (self.rand_friction_low, self.rand_friction_high, "friction"),
            (self.rand_kp_low, self.rand_kp_high, "kp"),
            (self.rand_kd_low, self.rand_kd_high, "kd"),
            (self.impact_min_s, self.impact_max_s, "impact duration"),
        ):
            if lo > hi:
                raise ValueError(f"randomization range for {name} has low > high")

    @property
    def dt(self) -> float:
        return 1.0 / self.control_hz

    @property
    def episode_steps(self) -> int:
        return int(round(self.episode_s * self.control_hz))

    @property
    def stand_pose(self) -> np.ndarray:
        return np.tile([self.stand_hip, self.stand_thigh, self.stand_calf], NUM_FEET)

    @property
    def nominal_height(self) -> float:
        """Kinematic stance height of the nominal stand pose."""
        return self.l_thigh * math.cos(self.stand_thigh) + self.l_calf * math.cos(
            self.stand_thigh + self.stand_calf
        )

    def joint_limits(self) -> rw.JointLimits:
        angle = np.tile(
            [self.angle_limit_hip, self.angle_limit_thigh, self.angle_limit_calf], NUM_FEET
        )
        return rw.JointLimits(
            angle=angle,
            velocity=np.full(NUM_JOINTS, self.joint_vel_limit),
            torque=np.full(NUM_JOINTS, self.torque_limit),
        )


@dataclass(frozen=True)
class DisturbanceEvent:
    start: float
    duration: float
    force: np.ndarray   # (3,) N, world frame
    torque: np.ndarray  # (3,) N*m, world frame


@dataclass
class DisturbanceSchedule:
    events: list[DisturbanceEvent] = field(default_factory=list)

    def __post_init__(self):
        es = sorted(self.events, key=lambda e: e.start)
        for a, b in zip(es, es[1:]):
            if a.start + a.duration > b.start + 1e-12:
                raise ValueError("disturbance events must not overlap")
        self.events = es

    def wrench_at(self, t: float) -> np.ndarray:
        """(fx, fy, fz, tx, ty, tz) active at time t."""
        for e in self.events:
            if e.start <= t < e.start + e.duration:
                return np.concatenate([e.force, e.torque])
        return np.zeros(6)

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("start_s,duration_s,fx_n,fy_n,fz_n,tx_nm,ty_nm,tz_nm\n")
        for e in self.events:
            vals = [e.start, e.duration, *e.force, *e.torque]
            buf.write(",".join(repr(float(v)) for v in vals) + "\n")
        return buf.getvalue()

    @staticmethod
    def from_csv(text: str) -> "DisturbanceSchedule":
        lines = [ln for ln in text.strip().splitlines() if ln.strip()]
        events = []
        for ln in lines[1:]:
            vals = [float(v) for v in ln.split(",")]
            if len(vals) != 8:
                raise ValueError(f"schedule row needs 8 columns, got {len(vals)}")
            events.append(
                DisturbanceEvent(vals[0], vals[1], np.array(vals[2:5]), np.array(vals[5:8]))
            )
        return DisturbanceSchedule(events)


@dataclass
class StepResult:
    state: RobotState
    reward_terms: rw.RewardBreakdown
    total_reward: float
    failed: bool
    done: bool


@dataclass
class EnvSnapshot:
    """Everything needed to restart the environment bit-identically."""

    kernel_state: np.ndarray
    kernel_params: np.ndarray
    command: Command
    safe_refresh: bool
    safe_target_world: np.ndarray  # (3,) x, y, yaw (fixed-target mode)
    ccp_frozen: np.ndarray | None  # (3,) post-push anchored capture target
    prev_action: np.ndarray
    prev_joint_vel: np.ndarray
    erfi_bias: np.ndarray
    erfi_amp: float
    joint_bias: np.ndarray
    curriculum: float
    step_idx: int
    schedule_events: list[DisturbanceEvent]

    def state_hash(self) -> str:
        import hashlib

        m = hashlib.sha256()
        for a in (self.kernel_state, self.kernel_params, self.prev_action,
                  self.prev_joint_vel, self.erfi_bias, self.joint_bias):
            m.update(np.ascontiguousarray(a, dtype=np.float64).tobytes())
        if self.ccp_frozen is not None:
            m.update(np.ascontiguousarray(self.ccp_frozen, dtype=np.float64).tobytes())
        m.update(np.float64(self.erfi_amp).tobytes())
        m.update(np.int64(self.step_idx).tobytes())
        return m.hexdigest()


def sample_command(
    rng: np.random.Generator, mode: TaskMode, curriculum: float, cfg: EnvConfig
) -> Command:
    """Draw a task command with all magnitudes scaled by the curriculum."""
    c = float(np.clip(curriculum, 0.0, 1.0))
    if mode is TaskMode.COMPLIANT:
        # The compliance gain reaches its full range by mid-curriculum so the
        # policy trains against the whole gain span early.
        return Command(
            mode=TaskMode.COMPLIANT,
            vx=float(rng.uniform(-cfg.cmd_vx_cap, cfg.cmd_vx_cap)) * c,
            vy=float(rng.uniform(-cfg.cmd_vy_cap, cfg.cmd_vy_cap)) * c,
            wz=float(rng.uniform(-cfg.cmd_wz_cap, cfg.cmd_wz_cap)) * c,
            k=float(rng.uniform(0.0, cfg.cmd_k_cap)) * min(1.0, 2.0 * c),
        )
    dx = float(rng.uniform(-cfg.safe_offset_cap, cfg.safe_offset_cap)) * c
    dy = float(rng.uniform(-cfg.safe_offset_cap, cfg.safe_offset_cap)) * c
    yaw = wrap_angle(float(rng.uniform(-math.pi, math.pi)) * c)
    return Command(mode=TaskMode.SAFE, dx=dx, dy=dy, yaw_target=yaw)


def sample_disturbance(
    rng: np.random.Generator,
    curriculum: float,
    cfg: EnvConfig,
    force_cap: float | None = None,
    n_events: int = 1,
) -> DisturbanceSchedule:
    """Draw push events: horizontal force uniform within the cap, smaller
    vertical/torque components, impact lengths within the configured range."""
    c = float(np.clip(curriculum, 0.0, 1.0))
    cap = cfg.force_cap if force_cap is None else min(force_cap, cfg.force_cap)
    events = []
    t_cursor = 0.0
    for _ in range(n_events):
        start = t_cursor + float(rng.uniform(0.5, 2.0))
        duration = float(rng.uniform(cfg.impact_min_s, cfg.impact_max_s))
        force = np.array(
            [
                rng.uniform(-cap, cap) * c,
                rng.uniform(-cap, cap) * c,
                rng.uniform(-cfg.force_z_cap, cfg.force_z_cap) * c,
            ]
        )
        torque = np.array(
            [
                rng.uniform(-cfg.torque_xy_cap, cfg.torque_xy_cap) * c,
                rng.uniform(-cfg.torque_xy_cap, cfg.torque_xy_cap) * c,
                rng.uniform(-cfg.torque_z_cap, cfg.torque_z_cap) * c,
            ]
        )
        events.append(DisturbanceEvent(start, duration, force, torque))
        t_cursor = start + duration
    return DisturbanceSchedule(events)


def apply_observation_noise(
    x: np.ndarray, rng: np.random.Generator, cfg: EnvConfig
) -> np.ndarray:
    """Additive uniform sensor noise on gravity, angular velocity and joint
    channels; the command block is never noised."""
    out = x.copy()
    out[0:3] += rng.uniform(-cfg.noise_gravity, cfg.noise_gravity, 3)
    out[3:6] += rng.uniform(-cfg.noise_ang_vel, cfg.noise_ang_vel, 3)
    out[6:18] += rng.uniform(-cfg.noise_joint_pos, cfg.noise_joint_pos, NUM_JOINTS)
    out[18:30] += rng.uniform(-cfg.noise_joint_vel, cfg.noise_joint_vel, NUM_JOINTS)
    return out


def obs_normalizer(cfg: EnvConfig) -> tuple[np.ndarray, np.ndarray]:
    """Per-channel (offset, scale) applied to x_t at the policy boundary.

    Joint positions are re-centered on the stand pose; each block is scaled
    to roughly unit range so no channel drowns the others. The raw physical
    observation (and its noise model) is unaffected.
    """
    offset = np.zeros(OBS_X_DIM)
    offset[6:18] = cfg.stand_pose
    scale = np.ones(OBS_X_DIM)
    scale[3:6] = 0.25                    # angular velocity
    scale[18:30] = 0.05                  # joint velocities
    scale[42:46] = [0.5, 0.5, 0.5, 50.0]  # command block; k lives in [0, 0.02]
    return offset, scale


def priv_extra_normalizer() -> np.ndarray:
    """Scale for the privileged extension (quat, base vel, force, torque)."""
    scale = np.ones(13)
    scale[4:7] = 0.25      # base velocity
    scale[7:10] = 1.0 / 250.0   # external force
    scale[10:13] = 1.0 / 50.0   # external torque
    return scale


def _gravity_body(roll: float, pitch: float) -> np.ndarray:
    return np.array(
        [
            math.sin(pitch),
            -math.sin(roll) * math.cos(pitch),
            -math.cos(roll) * math.cos(pitch),
        ]
    )


class QuadrupedEnv:
    """One independent environment instance; owns its state and RNG."""

    def __init__(self, cfg: EnvConfig, seed: int = 0):
        self.cfg = cfg
        # Separate streams so a replay that never reads observations still
        # consumes the dynamics stream identically (bit-exact replays).
        _reset_ss, _dyn_ss, _noise_ss = np.random.SeedSequence(seed).spawn(3)
        self.rng_reset = np.random.Generator(np.random.PCG64(_reset_ss))
        self.rng_dyn = np.random.Generator(np.random.PCG64(_dyn_ss))
        self.rng_noise = np.random.Generator(np.random.PCG64(_noise_ss))
        self.kernel_state = np.zeros(L.STATE_SIZE)
        self.kernel_params = np.zeros(L.PARAM_SIZE)
        self.command: Command = Command(mode=TaskMode.COMPLIANT)
        self.safe_refresh = False
        self.safe_target_world = np.zeros(3)
        self.ccp_frozen: np.ndarray | None = None
        self.schedule = DisturbanceSchedule([])
        self.prev_action = np.zeros(NUM_JOINTS)
        self.prev_joint_vel = np.zeros(NUM_JOINTS)
        self.joint_bias = np.zeros(NUM_JOINTS)
        self.erfi_bias = np.zeros(NUM_JOINTS)
        self.erfi_amp = 0.0
        self.curriculum = 1.0
        self.step_idx = 0
        self.done = True
        self._limits = cfg.joint_limits()

    # ------------------------------------------------------------------ setup

    def _nominal_params(self) -> np.ndarray:
        cfg = self.cfg
        p = np.zeros(L.PARAM_SIZE)
        p[L.P_MASS] = cfg.mass
        p[L.P_IZ] = cfg.inertia_z
        p[L.P_IATT] = cfg.inertia_att
        p[L.P_MU] = cfg.friction
        p[L.P_KP] = cfg.kp
        p[L.P_KD] = cfg.kd
        p[L.P_GRAV] = cfg.gravity
        p[L.P_KGAIT] = cfg.k_gait
        p[L.P_KGYAW] = cfg.k_gait_yaw
        p[L.P_CDRAG] = cfg.c_drag
        p[L.P_CYAWDRAG] = cfg.c_yaw_drag
        p[L.P_KZ] = cfg.k_height
        p[L.P_CZ] = cfg.c_height
        p[L.P_CATT] = cfg.c_att
        p[L.P_DX] = cfg.support_x
        p[L.P_DY] = cfg.support_y
        p[L.P_KLEAN] = cfg.k_lean
        p[L.P_KLEANYAW] = cfg.k_lean_yaw
        p[L.P_VLEGMAX] = cfg.v_leg_max
        p[L.P_WLEGMAX] = cfg.w_leg_max
        p[L.P_TROTFREQ] = cfg.trot_freq
        p[L.P_LIFTAMP] = cfg.lift_amp
        p[L.P_JINERTIA] = cfg.joint_inertia
        p[L.P_TAULIM] = cfg.torque_limit
        p[L.P_QDLIM] = cfg.joint_vel_limit
        p[L.P_LOADGAIN] = cfg.load_gain
        p[L.P_FAILZ] = cfg.fail_height
        p[L.P_FAILTILT] = cfg.fail_tilt
        p[L.P_LTHIGH] = cfg.l_thigh
        p[L.P_LCALF] = cfg.l_calf
        p[L.P_ROLLSCALE] = cfg.roll_scale
        p[L.P_QSTAND_HIP] = cfg.stand_hip
        p[L.P_QSTAND_THIGH] = cfg.stand_thigh
        p[L.P_QSTAND_CALF] = cfg.stand_calf
        p[L.P_COLLZ] = cfg.coll_height
        p[L.P_COLLTILT] = cfg.coll_tilt
        p[L.P_QLIM_HIP] = cfg.angle_limit_hip
        p[L.P_QLIM_THIGH] = cfg.angle_limit_thigh
        p[L.P_QLIM_CALF] = cfg.angle_limit_calf
        p[L.P_TAUEXT_SCALE] = cfg.ext_torque_scale
        p[L.P_SHOULDER_X] = cfg.shoulder_x
        p[L.P_SHOULDER_Y] = cfg.shoulder_y
        p[L.P_YAWLEVER] = cfg.yaw_lever
        p[L.P_SLIPTOLX] = cfg.slip_tol_x
        p[L.P_SLIPTOLY] = cfg.slip_tol_y
        p[L.P_SLIPCAP] = cfg.slip_cap
        p[L.P_SLIPCAPY] = cfg.slip_cap_y
        p[L.P_KSLIP] = cfg.k_slip
        p[L.P_ZAIRMAX] = cfg.z_air_max
        return p

    def _randomize_params(self, curriculum: float) -> None:
        """Uniform draws centered on nominal, widths scaled by curriculum."""
        cfg = self.cfg
        c = float(np.clip(curriculum, 0.0, 1.0))
        p = self._nominal_params()
        rng = self.rng_reset

        def drawn(lo: float, hi: float, center: float) -> float:
            return center + (float(rng.uniform(lo, hi)) - center) * c

        mass = drawn(cfg.rand_mass_low, cfg.rand_mass_high, cfg.mass)
        p[L.P_MASS] = mass
        # Attitude/yaw inertias track the drawn mass.
        p[L.P_IATT] = cfg.inertia_att * mass / cfg.mass
        p[L.P_IZ] = cfg.inertia_z * mass / cfg.mass
        mu = drawn(cfg.rand_friction_low, cfg.rand_friction_high, cfg.friction)
        p[L.P_MU] = max(mu, 0.05)  # the physical surrogate needs some grip
        p[L.P_KP] = drawn(cfg.rand_kp_low, cfg.rand_kp_high, cfg.kp)
        p[L.P_KD] = drawn(cfg.rand_kd_low, cfg.rand_kd_high, cfg.kd)
        self.kernel_params = p
        self.joint_bias = rng.uniform(-cfg.rand_joint_bias, cfg.rand_joint_bias, NUM_JOINTS) * c
        self.erfi_amp = cfg.erfi_amp * c
        self.erfi_bias = rng.uniform(-self.erfi_amp, self.erfi_amp, NUM_JOINTS)

    def reset(
        self,
        curriculum: float = 1.0,
        init: EnvSnapshot | None = None,
        schedule: DisturbanceSchedule | None = None,
        command: Command | None = None,
    ) -> RobotState:
        """Randomized nominal reset, or an exact restart from a snapshot."""
        if init is not None:
            limits = self.cfg.joint_limits()
            q = init.kernel_state[L.Q0 : L.Q0 + NUM_JOINTS]
            if np.any(np.abs(q) > limits.angle + 1e-9):
                raise ValueError("snapshot joint positions violate joint limits")
            self.kernel_state = init.kernel_state.copy()
            self.kernel_params = init.kernel_params.copy()
            self.command = init.command
            self.safe_refresh = init.safe_refresh
            self.safe_target_world = init.safe_target_world.copy()
            self.ccp_frozen = None if init.ccp_frozen is None else init.ccp_frozen.copy()
            self.prev_action = init.prev_action.copy()
            self.prev_joint_vel = init.prev_joint_vel.copy()
            self.erfi_bias = init.erfi_bias.copy()
            self.erfi_amp = init.erfi_amp
            self.joint_bias = init.joint_bias.copy()
            self.curriculum = init.curriculum
            self.step_idx = init.step_idx
            self.schedule = DisturbanceSchedule(list(init.schedule_events))
            self.done = False
            return self.robot_state()

        self.curriculum = float(np.clip(curriculum, 0.0, 1.0))
        self._randomize_params(self.curriculum)
        s = np.zeros(L.STATE_SIZE)
        s[L.PZ] = self.cfg.nominal_height
        s[L.Q0 : L.Q0 + NUM_JOINTS] = self.stand_targets()
        s[L.CONTACT0 : L.CONTACT0 + NUM_FEET] = 1.0
        self.kernel_state = s
        self.prev_action = np.zeros(NUM_JOINTS)
        self.prev_joint_vel = np.zeros(NUM_JOINTS)
        self.step_idx = 0
        self.done = False
        self.schedule = schedule if schedule is not None else DisturbanceSchedule([])
        self.safe_refresh = False
        self.safe_target_world = np.zeros(3)
        self.ccp_frozen = None
        if command is not None:
            self.set_command(command)
        else:
            self.command = Command(mode=TaskMode.COMPLIANT)
        return self.robot_state()

    def stand_targets(self) -> np.ndarray:
        return self.cfg.stand_pose + self.joint_bias

    # --------------------------------------------------------------- commands

    def set_command(self, command: Command, refresh_ccp: bool = False) -> None:
        """Install a task command. For the safe task, `refresh_ccp` recomputes
        the capture target from the live state every step; otherwise the
        offset is anchored in world coordinates at call time."""
        self.command = command
        self.safe_refresh = bool(refresh_ccp) and command.mode is TaskMode.SAFE
        self.ccp_frozen = None
        if command.mode is TaskMode.SAFE and not self.safe_refresh:
            s = self.kernel_state
            cy, sy = math.cos(s[L.YAW]), math.sin(s[L.YAW])
            tx = s[L.PX] + cy * command.dx - sy * command.dy
            ty = s[L.PY] + sy * command.dx + cy * command.dy
            self.safe_target_world = np.array([tx, ty, command.yaw_target])

    def safe_remaining(self) -> tuple[float, float, float]:
        """Remaining (dx, dy, yaw_err) to the safe-task target, body frame.

        While a push is active the capture target is recomputed每 step from
        the live velocity and force. Once the force drops below the
        dead-band the target is anchored in world coordinates: a target that
        kept receding with the robot's own velocity would reward running
        forever and stopping could never pay.
        """
        s = self.kernel_state
        if self.safe_refresh:
            f_body = self.ext_force_body()
            if math.hypot(f_body[0], f_body[1]) >= YAW_FORCE_DEADBAND:
                self.ccp_frozen = None
                tgt = self._live_ccp()
                return tgt.dx, tgt.dy, wrap_angle(tgt.yaw - s[L.YAW])
            if self.ccp_frozen is None:
                tgt = self._live_ccp()
                cy, sy = math.cos(s[L.YAW]), math.sin(s[L.YAW])
                self.ccp_frozen = np.array([
                    s[L.PX] + cy * tgt.dx - sy * tgt.dy,
                    s[L.PY] + sy * tgt.dx + cy * tgt.dy,
                    tgt.yaw,
                ])
            target = self.ccp_frozen
        else:
            target = self.safe_target_world
        dxw = target[0] - s[L.PX]
        dyw = target[1] - s[L.PY]
        cy, sy = math.cos(s[L.YAW]), math.sin(s[L.YAW])
        return (
            cy * dxw + sy * dyw,
            -sy * dxw + cy * dyw,
            wrap_angle(target[2] - s[L.YAW]),
        )

    def _live_ccp(self):
        s = self.kernel_state
        f_body = self.ext_force_body()
        v_body = self.base_vel_body()
        return ccp_target(
            (v_body[0], v_body[1]),
            (f_body[0], f_body[1]),
            max(s[L.PZ], 0.05),
            self.kernel_params[L.P_MASS],
            self.cfg.gravity,
            s[L.YAW],
        )

    # ------------------------------------------------------------ observation

    def base_vel_body(self) -> np.ndarray:
        s = self.kernel_state
        cy, sy = math.cos(s[L.YAW]), math.sin(s[L.YAW])
        return np.array(
            [cy * s[L.VX] + sy * s[L.VY], -sy * s[L.VX] + cy * s[L.VY], s[L.VZ]]
        )

    def ext_force_body(self) -> np.ndarray:
        """Active external force rotated into the horizontal body frame."""
        w = self.schedule.wrench_at(self.kernel_state[L.TIME])
        s = self.kernel_state
        cy, sy = math.cos(s[L.YAW]), math.sin(s[L.YAW])
        return np.array([cy * w[0] + sy * w[1], -sy * w[0] + cy * w[1], w[2]])

    def ext_torque_body(self) -> np.ndarray:
        w = self.schedule.wrench_at(self.kernel_state[L.TIME])
        s = self.kernel_state
        cy, sy = math.cos(s[L.YAW]), math.sin(s[L.YAW])
        return np.array([cy * w[3] + sy * w[4], -sy * w[3] + cy * w[4], w[5]])

    def command_slot(self) -> np.ndarray:
        if self.command.mode is TaskMode.COMPLIANT:
            return self.command.as_obs_slot()
        dx, dy, yaw_err = self.safe_remaining()
        return np.array([dx, dy, yaw_err, 0.0])

    def observe_x(self, noisy: bool | None = None) -> np.ndarray:
        """Observable state vector x_t (gravity, gyro, joints, previous
        action, command block)."""
        s = self.kernel_state
        x = np.concatenate(
            [
                _gravity_body(s[L.ROLL], s[L.PITCH]),
                s[L.WX : L.WZ + 1],
                s[L.Q0 : L.Q0 + NUM_JOINTS],
                s[L.QD0 : L.QD0 + NUM_JOINTS],
                self.prev_action,
                self.command_slot(),
            ]
        )
        use_noise = self.cfg.noise_enabled if noisy is None else noisy
        if use_noise:
            x = apply_observation_noise(x, self.rng_noise, self.cfg)
        return x

    def priv_extras(self) -> np.ndarray:
        """Privileged extension: orientation, base velocity, external wrench."""
        s = self.kernel_state
        quat = Quat.from_euler(s[L.ROLL], s[L.PITCH], s[L.YAW])
        return np.concatenate(
            [
                [quat.w, quat.x, quat.y, quat.z],
                self.base_vel_body(),
                self.ext_force_body(),
                self.ext_torque_body(),
            ]
        )

    def observe_privileged(self, x: np.ndarray) -> np.ndarray:
        """x_t extended with orientation, base velocity and external wrench."""
        return np.concatenate([x, self.priv_extras()])

    def robot_state(self) -> RobotState:
        s = self.kernel_state
        contact = s[L.CONTACT0 : L.CONTACT0 + NUM_FEET] > 0.5
        w = self.schedule.wrench_at(s[L.TIME])
        return RobotState(
            base_pos=np.array([s[L.PX], s[L.PY], s[L.PZ]]),
            orientation=Quat.from_euler(s[L.ROLL], s[L.PITCH], s[L.YAW]),
            base_lin_vel=self.base_vel_body(),
            base_ang_vel=s[L.WX : L.WZ + 1].copy(),
            height=float(s[L.PZ]),
            joint_pos=s[L.Q0 : L.Q0 + NUM_JOINTS].copy(),
            joint_vel=s[L.QD0 : L.QD0 + NUM_JOINTS].copy(),
            joint_torque=s[L.TAU0 : L.TAU0 + NUM_JOINTS].copy(),
            foot_contact=contact,
            foot_air_time=s[L.AIR0 : L.AIR0 + NUM_FEET].copy(),
            ext_force=w[0:3].copy(),
            ext_torque=w[3:6].copy(),
            sim_time=float(s[L.TIME]),
        )

    # ------------------------------------------------------------------- step

    def step(self, action: np.ndarray) -> StepResult:
        """Advance one control period under the current command/schedule."""
        if self.done:
            raise RuntimeError("step() called on a finished episode; reset first")
        action = np.asarray(action, dtype=np.float64)
        if action.shape != (NUM_JOINTS,) or not np.all(np.isfinite(action)):
            raise ValueError("action must be 12 finite joint-target offsets")

        cfg = self.cfg
        clipped = np.clip(action, -cfg.action_clip, cfg.action_clip)
        q_target = self.stand_targets() + cfg.action_scale * clipped

        # Actuator noise: a bias vector during the first episode half,
        # fresh per-step noise during the second half.
        if self.step_idx < self.cfg.episode_steps // 2:
            erfi = self.erfi_bias
        else:
            erfi = self.rng_dyn.uniform(-self.erfi_amp, self.erfi_amp, NUM_JOINTS)

        wrench = self.schedule.wrench_at(self.kernel_state[L.TIME])
        kernel_step(
            self.kernel_state,
            self.kernel_params,
            q_target,
            erfi,
            wrench,
            cfg.gait_enabled,
            cfg.dt,
            cfg.substeps,
        )
        self.step_idx += 1

        terms = self._evaluate_rewards(clipped)
        failed = self.kernel_state[L.FAIL] > 0.5
        done = failed or self.step_idx >= cfg.episode_steps
        self.done = bool(done)
        self.prev_action = clipped
        self.prev_joint_vel = self.kernel_state[L.QD0 : L.QD0 + NUM_JOINTS].copy()
        total = terms.total
        if not math.isfinite(total):
            raise FloatingPointError("non-finite reward; surrogate state diverged")
        return StepResult(self.robot_state(), terms, total, bool(failed), bool(done))

    def _evaluate_rewards(self, action: np.ndarray) -> rw.RewardBreakdown:
        s = self.kernel_state
        v_body = self.base_vel_body()
        if self.command.mode is TaskMode.COMPLIANT:
            f_body = self.ext_force_body()
            v_star = desired_velocity(self.command, (f_body[0], f_body[1]))
            task = rw.compliant_rewards(
                v_star, (v_body[0], v_body[1]), self.command.wz, s[L.WZ]
            )
        else:
            dx, dy, yaw_err = self.safe_remaining()
            yaw_target = wrap_angle(s[L.YAW] + yaw_err)
            reached = rw.reached_predicate((dx, dy), s[L.YAW], yaw_target)
            task = rw.safe_rewards(
                (dx, dy),
                s[L.YAW],
                yaw_target,
                (v_body[0], v_body[1]),
                s[L.WZ],
                s[L.PZ],
                reached,
            )
        reg = rw.shared_regularizers(
            height=float(s[L.PZ]),
            ang_vel_xy=(float(s[L.WX]), float(s[L.WY])),
            joint_pos=s[L.Q0 : L.Q0 + NUM_JOINTS],
            joint_vel=s[L.QD0 : L.QD0 + NUM_JOINTS],
            prev_joint_vel=self.prev_joint_vel,
            joint_torque=s[L.TAU0 : L.TAU0 + NUM_JOINTS],
            action=action,
            prev_action=self.prev_action,
            dt=self.cfg.dt,
            limits=self._limits,
            touchdown_air_time=s[L.TDCRED0 : L.TDCRED0 + NUM_FEET],
            collision=bool(s[L.COLL] > 0.5),
        )
        return task.merge(reg)

    def desired_velocity_now(self) -> tuple[float, float]:
        """Ground-truth admittance target for metrics/telemetry."""
        f_body = self.ext_force_body()
        return desired_velocity(self.command, (f_body[0], f_body[1]))

    # --------------------------------------------------------------- snapshot

    def snapshot(self) -> EnvSnapshot:
        remaining = [
            e
            for e in self.schedule.events
            if e.start + e.duration > self.kernel_state[L.TIME]
        ]
        return EnvSnapshot(
            kernel_state=self.kernel_state.copy(),
            kernel_params=self.kernel_params.copy(),
            command=self.command,
            safe_refresh=self.safe_refresh,
            safe_target_world=self.safe_target_world.copy(),
            ccp_frozen=None if self.ccp_frozen is None else self.ccp_frozen.copy(),
            prev_action=self.prev_action.copy(),
            prev_joint_vel=self.prev_joint_vel.copy(),
            erfi_bias=self.erfi_bias.copy(),
            erfi_amp=self.erfi_amp,
            joint_bias=self.joint_bias.copy(),
            curriculum=self.curriculum,
            step_idx=self.step_idx,
            schedule_events=list(self.schedule.events),
        )
