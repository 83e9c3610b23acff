"""Deployed control loop: history stacking, recoverability monitoring,
threshold switching with hysteresis, per-step capture-target refresh, and
episode rollout logging.
"""
from __future__ import annotations

import csv
import io
import math
import os
import time
from dataclasses import dataclass, field

import numpy as np

from .artifacts import load_policy, load_value_net, save_policy, save_value_net
from .compliance import YAW_FORCE_DEADBAND, ccp_target
from .core import NUM_JOINTS, OBS_X_DIM, Command, TaskMode, wrap_angle
from .distill import HistoryStack
from .env import DisturbanceSchedule, EnvConfig, QuadrupedEnv, obs_normalizer
from .netlib import GaussianPolicy, MlpSpec, forward
from .recover import SwitchState, switch_decide
from .rewards import (
    STAND_STILL_MAX_SPEED,
    STAND_STILL_MAX_YAW_RATE,
    STAND_STILL_MIN_HEIGHT,
)

BUNDLE_FILES = {
    "comply": "comply_student.ckpt",
    "safe": "safe_student.ckpt",
    "recover": "recover_net.ckpt",
}


@dataclass
class ControllerBundle:
    """Everything the deployed controller needs, loaded once."""

    comply: GaussianPolicy
    safe: GaussianPolicy
    recover_spec: MlpSpec
    recover_params: np.ndarray
    env_cfg: EnvConfig
    switch: SwitchState = field(default_factory=SwitchState)

    def __post_init__(self):
        expected = HistoryStack(OBS_X_DIM).out_dim
        for name, pol in (("comply", self.comply), ("safe", self.safe)):
            if pol.spec.in_dim != expected:
                raise ValueError(
                    f"{name} policy expects input {pol.spec.in_dim}, "
                    f"but the stacked observation is {expected}"
                )
        if self.recover_spec.in_dim != expected:
            raise ValueError("recoverability net input does not match the stack")

    @staticmethod
    def load(directory: str, env_cfg: EnvConfig, switch: SwitchState | None = None):
        comply, _ = load_policy(os.path.join(directory, BUNDLE_FILES["comply"]))
        safe, _ = load_policy(os.path.join(directory, BUNDLE_FILES["safe"]))
        spec, params, _ = load_value_net(
            os.path.join(directory, BUNDLE_FILES["recover"]), expect_kind="recover_net"
        )
        return ControllerBundle(comply, safe, spec, params, env_cfg,
                                switch or SwitchState())

    def save(self, directory: str) -> list[str]:
        os.makedirs(directory, exist_ok=True)
        paths = []
        p = os.path.join(directory, BUNDLE_FILES["comply"])
        save_policy(p, self.comply, {"task": "compliant", "phase": "student"})
        paths.append(p)
        p = os.path.join(directory, BUNDLE_FILES["safe"])
        save_policy(p, self.safe, {"task": "safe", "phase": "student"})
        paths.append(p)
        p = os.path.join(directory, BUNDLE_FILES["recover"])
        save_value_net(p, self.recover_spec, self.recover_params, {"kind": "recover_net"})
        paths.append(p)
        return paths


@dataclass
class ControlInfo:
    v_recover: float
    active: str
    switched: bool
    safe_stop: bool
    command_slot: np.ndarray


class SwitchedController:
    """Stateful 50 Hz controller: one `step` call per control period.

    The compliant student never receives the estimated force; the force
    enters only through the capture-target computation for the safe policy
    and through the recoverability score's learned history features.
    """

    def __init__(self, bundle: ControllerBundle, warmup_steps: int | None = None):
        self.bundle = bundle
        self.cfg = bundle.env_cfg
        self.x_offset, self.x_scale = obs_normalizer(self.cfg)
        self.stack = HistoryStack(OBS_X_DIM)
        self.switch = bundle.switch
        self.prev_action = np.zeros(NUM_JOINTS)
        self.reached_latched = False
        self._started = False
        # The recoverability score is defined on a genuinely populated
        # history; until the ring buffer has cycled once, its pre-filled
        # emission is out of distribution and switching stays disarmed.
        self.warmup_steps = HistoryStack(OBS_X_DIM).length if warmup_steps is None else warmup_steps
        self._steps = 0
        self._frozen_target = None  # world (x, y, yaw) once the push has ended

    def reset(self, switch: SwitchState | None = None) -> None:
        self.stack = HistoryStack(OBS_X_DIM)
        self.switch = switch or self.bundle.switch
        self.prev_action = np.zeros(NUM_JOINTS)
        self.reached_latched = False
        self._started = False
        self._steps = 0
        self._frozen_target = None

    def _safe_stop(self, slot: np.ndarray) -> tuple[np.ndarray, ControlInfo]:
        return np.zeros(NUM_JOINTS), ControlInfo(
            v_recover=float("nan"), active=self.switch.active,
            switched=False, safe_stop=True, command_slot=slot,
        )

    def step(
        self,
        gravity: np.ndarray,
        ang_vel: np.ndarray,
        joint_pos: np.ndarray,
        joint_vel: np.ndarray,
        user_cmd: Command,
        force_est: np.ndarray,
        vel_est: np.ndarray,
        height_est: float,
        yaw_est: float = 0.0,
        pos_est: np.ndarray | None = None,
    ) -> tuple[np.ndarray, ControlInfo]:
        """One control period: returns 12 joint-target offsets.

        In simulation the force/velocity estimates are ground truth; on
        hardware they would come from an estimator. Non-finite sensor input
        yields a hold-nominal action with the safe-stop flag set.
        """
        sensors = np.concatenate([gravity, ang_vel, joint_pos, joint_vel])
        if not (np.all(np.isfinite(sensors)) and np.all(np.isfinite(force_est))
                and np.all(np.isfinite(vel_est)) and math.isfinite(height_est)):
            return self._safe_stop(np.zeros(4))

        if self.switch.active == "safe":
            slot = self._safe_slot(force_est, vel_est, height_est, yaw_est, pos_est)
        else:
            slot = user_cmd.as_obs_slot()
            self._frozen_target = None
        x = np.concatenate([sensors, self.prev_action, slot])
        xn = (x - self.x_offset) * self.x_scale
        stacked = self.stack.push(xn) if self._started else self.stack.reset(xn)
        self._started = True

        v = float(
            forward(self.bundle.recover_spec, self.bundle.recover_params, stacked[None, :])[0, 0]
        )
        still = (
            float(np.hypot(vel_est[0], vel_est[1])) < STAND_STILL_MAX_SPEED
            and abs(float(ang_vel[2])) < STAND_STILL_MAX_YAW_RATE
            and height_est > STAND_STILL_MIN_HEIGHT
        )
        prev_active = self.switch.active
        self._steps += 1
        if self._steps > self.warmup_steps:
            self.switch = switch_decide(v, self.switch, stand_still=still and self.reached_latched)
        if self.switch.active != prev_active:
            self.reached_latched = False

        if self.switch.active == "safe":
            pol = self.bundle.safe
            # Once the robot has arrested its motion, freeze the target so the
            # stance does not chatter around the shrinking capture offset.
            if still:
                self.reached_latched = True
        else:
            pol = self.bundle.comply
        action = pol.mean(stacked[None, :])[0]
        # Track the applied (clipped) action, matching the training-time
        # previous-action channel.
        self.prev_action = np.clip(action, -self.cfg.action_clip, self.cfg.action_clip)
        return action, ControlInfo(
            v_recover=v, active=self.switch.active,
            switched=self.switch.active != prev_active,
            safe_stop=False, command_slot=slot,
        )

    def _safe_slot(self, force_est, vel_est, height_est, yaw_est, pos_est) -> np.ndarray:
        if self.reached_latched:
            return np.array([0.0, 0.0, 0.0, 0.0])
        pushing = math.hypot(float(force_est[0]), float(force_est[1])) >= YAW_FORCE_DEADBAND
        if pushing or pos_est is None:
            # Live capture target while the push lasts (or without odometry).
            self._frozen_target = None
            tgt = ccp_target(
                (float(vel_est[0]), float(vel_est[1])),
                (float(force_est[0]), float(force_est[1])),
                max(height_est, 0.05),
                self.cfg.mass,
                self.cfg.gravity,
                yaw_est,
            )
            return np.array([tgt.dx, tgt.dy, wrap_angle(tgt.yaw - yaw_est), 0.0])
        # Push over: anchor the target in world coordinates so arriving there
        # actually ends the approach.
        if self._frozen_target is None:
            tgt = ccp_target(
                (float(vel_est[0]), float(vel_est[1])), (0.0, 0.0),
                max(height_est, 0.05), self.cfg.mass, self.cfg.gravity, yaw_est,
            )
            cy, sy = math.cos(yaw_est), math.sin(yaw_est)
            self._frozen_target = np.array([
                float(pos_est[0]) + cy * tgt.dx - sy * tgt.dy,
                float(pos_est[1]) + sy * tgt.dx + cy * tgt.dy,
                tgt.yaw,
            ])
        dxw = self._frozen_target[0] - float(pos_est[0])
        dyw = self._frozen_target[1] - float(pos_est[1])
        cy, sy = math.cos(yaw_est), math.sin(yaw_est)
        return np.array([
            cy * dxw + sy * dyw,
            -sy * dxw + cy * dyw,
            wrap_angle(self._frozen_target[2] - yaw_est),
            0.0,
        ])


TRAJECTORY_COLUMNS = [
    "step", "time_s", "px", "py", "height", "yaw", "roll", "pitch",
    "vx_body", "vy_body", "yaw_rate", "fx_body", "fy_body",
    "v_recover", "active_policy", "switched",
    "vstar_x", "vstar_y", "reward_total", "failed",
] + [f"action_{i}" for i in range(NUM_JOINTS)] + [
    f"joint_torque_{i}" for i in range(NUM_JOINTS)
] + [f"joint_vel_{i}" for i in range(NUM_JOINTS)]


@dataclass
class TrajectoryLog:
    rows: list[list] = field(default_factory=list)
    truncated_by_failure: bool = False

    def to_csv(self, path: str | None = None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf)
        w.writerow(TRAJECTORY_COLUMNS)
        w.writerows(self.rows)
        text = buf.getvalue()
        if path:
            with open(path, "w", newline="") as f:
                f.write(text)
        return text

    def column(self, name: str) -> np.ndarray:
        i = TRAJECTORY_COLUMNS.index(name)
        vals = [r[i] for r in self.rows]
        if name == "active_policy":
            return np.array(vals)
        return np.array([float(v) for v in vals])


def run_episode(
    bundle: ControllerBundle,
    env: QuadrupedEnv,
    schedule: DisturbanceSchedule,
    user_cmd: Command,
    switch: SwitchState | None = None,
    max_steps: int | None = None,
    curriculum: float = 0.0,
    controller: SwitchedController | None = None,
) -> TrajectoryLog:
    """Closed-loop rollout of the switched controller in the surrogate.

    The environment command mirrors the controller's active policy so the
    logged rewards and admittance targets stay meaningful.
    """
    ctl = controller or SwitchedController(bundle)
    ctl.reset(switch)
    env.reset(curriculum=curriculum)
    env.schedule = schedule
    env.set_command(user_cmd)
    log = TrajectoryLog()
    steps = max_steps if max_steps is not None else env.cfg.episode_steps
    active_prev = "comply"
    for t in range(steps):
        x_raw = env.observe_x()
        f_body = env.ext_force_body()
        v_body = env.base_vel_body()
        s = env.kernel_state
        action, info = ctl.step(
            gravity=x_raw[0:3],
            ang_vel=x_raw[3:6],
            joint_pos=x_raw[6:18],
            joint_vel=x_raw[18:30],
            user_cmd=user_cmd,
            force_est=f_body,
            vel_est=v_body,
            height_est=float(s[2]),
            yaw_est=float(s[3]),
            pos_est=np.array([float(s[0]), float(s[1])]),
        )
        if info.active != active_prev:
            if info.active == "safe":
                env.set_command(Command(mode=TaskMode.SAFE), refresh_ccp=True)
            else:
                env.set_command(user_cmd)
            active_prev = info.active
        res = env.step(action)
        vstar = (
            env.desired_velocity_now()
            if env.command.mode is TaskMode.COMPLIANT
            else (float("nan"), float("nan"))
        )
        st = res.state
        log.rows.append(
            [t, st.sim_time, st.base_pos[0], st.base_pos[1], st.height,
             float(s[3]), float(s[4]), float(s[5]),
             st.base_lin_vel[0], st.base_lin_vel[1], st.base_ang_vel[2],
             f_body[0], f_body[1],
             info.v_recover, info.active, int(info.switched),
             vstar[0], vstar[1], res.total_reward, int(res.failed)]
            + [float(a) for a in action]
            + [float(v) for v in st.joint_torque]
            + [float(v) for v in st.joint_vel]
        )
        if res.failed:
            log.truncated_by_failure = True
            break
        if res.done:
            break
    return log


def measure_control_latency(bundle: ControllerBundle, n_steps: int = 500) -> float:
    """Mean wall-clock seconds per control_step on this machine."""
    ctl = SwitchedController(bundle)
    cmd = Command(mode=TaskMode.COMPLIANT, vx=0.5)
    g = np.array([0.0, 0.0, -1.0])
    w = np.zeros(3)
    q = bundle.env_cfg.stand_pose
    qd = np.zeros(NUM_JOINTS)
    f = np.zeros(3)
    v = np.zeros(3)
    ctl.step(g, w, q, qd, cmd, f, v, 0.3)  # warm-up / stack fill
    t0 = time.perf_counter()
    for _ in range(n_steps):
        ctl.step(g, w, q, qd, cmd, f, v, 0.3)
    return (time.perf_counter() - t0) / n_steps


class HardwareInterface:
    """Interface a robot driver would implement; simulation never uses it.

    read_sensors() -> (gravity, ang_vel, joint_pos, joint_vel)
    apply_targets(q_target_offsets) -> None
    """

    def read_sensors(self):
        raise NotImplementedError

    def apply_targets(self, q_target_offsets: np.ndarray) -> None:
        raise NotImplementedError
