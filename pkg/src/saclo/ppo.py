"""On-policy trainer: vectorized rollout collection, generalized advantage
estimation, clipped-surrogate updates with an asymmetric critic, curriculum
scheduling, and the teacher / distillation training loops.
"""
from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass, field

import numpy as np

from . import netlib
from .core import (
    NUM_JOINTS,
    OBS_X_DIM,
    PRIV_OBS_DIM,
    STACKED_OBS_DIM,
    Command,
    TaskMode,
    spawn_rngs,
)
from .distill import DistillConfig, HistoryStack, alignment_rewards
from .env import (
    EnvConfig,
    QuadrupedEnv,
    obs_normalizer,
    priv_extra_normalizer,
    sample_command,
    sample_disturbance,
)
from .netlib import Adam, GaussianPolicy, MlpSpec, forward, forward_cached, gradient


@dataclass(frozen=True)
class PpoConfig:
    """Optimization hyperparameters; all counts are desk-scale configurable."""

    clip_ratio: float = 0.2
    gae_lambda: float = 0.95
    gamma: float = 0.99
    epochs: int = 4
    minibatches: int = 4
    entropy_coef: float = 0.003
    value_coef: float = 1.0
    learning_rate: float = 3e-4
    horizon: int = 64
    n_envs: int = 64
    iterations: int = 300
    kl_threshold: float = 0.03
    kl_adaptive_lr: bool = True  # rescale lr to hold KL near the threshold
    max_grad_norm: float = 1.0
    # Curriculum promotion: level rises by `step` whenever the tracked metric
    # beats `threshold`, and never decreases.
    curriculum_start: float = 0.3
    curriculum_step: float = 0.05
    curriculum_threshold: float = 0.45
    curriculum_cooldown: int = 15  # iterations between promotions
    curriculum_max: float = 1.0
    seed: int = 0
    policy_hidden: tuple[int, ...] = (256, 256, 256)
    critic_hidden: tuple[int, ...] = (256, 256, 256)
    log_std_init: float = -1.0
    entropy_decay: bool = True      # scale the entropy bonus linearly to zero
    cmd_resample_s: float = 2.5     # mid-episode command refresh (compliant task)
    checkpoint_every: int = 0   # 0 = only final

    def __post_init__(self):
        if not (0.0 < self.clip_ratio < 1.0):
            raise ValueError("clip ratio must lie in (0, 1)")
        if not (0.0 < self.gamma <= 1.0 and 0.0 <= self.gae_lambda <= 1.0):
            raise ValueError("gamma in (0,1], lambda in [0,1]")


@dataclass
class RolloutBuffer:
    """Fixed-shape on-policy storage, time-major (horizon, n_envs, ...)."""

    horizon: int
    n_envs: int
    obs_dim: int
    priv_dim: int
    act_dim: int = NUM_JOINTS
    store_teacher: bool = False

    def __post_init__(self):
        t, n = self.horizon, self.n_envs
        self.obs = np.zeros((t, n, self.obs_dim))
        self.obs_priv = np.zeros((t, n, self.priv_dim))
        self.actions = np.zeros((t, n, self.act_dim))
        self.mus = np.zeros((t, n, self.act_dim))
        self.log_std_old = np.zeros(self.act_dim)
        self.log_probs = np.zeros((t, n))
        self.rewards = np.zeros((t, n))
        self.values = np.zeros((t + 1, n))
        self.dones = np.zeros((t, n))
        self.teacher_actions = np.zeros((t, n, self.act_dim)) if self.store_teacher else None

    @property
    def capacity(self) -> int:
        return self.horizon * self.n_envs

    def flat(self, arr: np.ndarray) -> np.ndarray:
        return arr.reshape(self.horizon * self.n_envs, *arr.shape[2:])


def gae(
    rewards: np.ndarray,
    values: np.ndarray,
    dones: np.ndarray,
    gamma: float,
    lam: float,
) -> tuple[np.ndarray, np.ndarray]:
    """Standard recursive advantage estimation.

    `values` carries one extra trailing entry per env (the bootstrap value);
    `dones` zeroes the bootstrap across episode ends. Returns raw advantages
    and returns; normalization happens at update time.
    """
    rewards = np.asarray(rewards, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    dones = np.asarray(dones, dtype=np.float64)
    t_len = rewards.shape[0]
    if values.shape[0] != t_len + 1 or dones.shape[0] != t_len:
        raise ValueError("values needs len T+1 and dones len T")
    adv = np.zeros_like(rewards)
    running = np.zeros_like(rewards[0] if rewards.ndim > 1 else np.zeros(()))
    for t in range(t_len - 1, -1, -1):
        nonterminal = 1.0 - dones[t]
        delta = rewards[t] + gamma * values[t + 1] * nonterminal - values[t]
        running = delta + gamma * lam * nonterminal * running
        adv[t] = running
    return adv, adv + values[:-1]


def curriculum_tick(performance: float, level: float, cfg: PpoConfig) -> float:
    """Monotone promotion rule: raise the level when performance clears the
    threshold; never demote; clamp at 1."""
    if performance > cfg.curriculum_threshold:
        level = min(1.0, level + cfg.curriculum_step)
    return level


def _clip_grad(grad: np.ndarray, max_norm: float) -> np.ndarray:
    norm = float(np.linalg.norm(grad))
    if max_norm > 0.0 and norm > max_norm:
        return grad * (max_norm / norm)
    return grad


def _gaussian_kl(mu_old, log_std_old, mu_new, log_std_new) -> float:
    """Mean exact KL(old || new) between diagonal Gaussians over a batch."""
    var_old = np.exp(2.0 * log_std_old)
    var_new = np.exp(2.0 * log_std_new)
    d = mu_old - mu_new
    per = np.sum(
        log_std_new - log_std_old + (var_old + d * d) / (2.0 * var_new) - 0.5, axis=-1
    )
    return float(np.mean(per))


def _adapt_lr(lr: float, kl: float, kl_target: float) -> float:
    """Hold the step size in the regime where KL stays near its target."""
    if kl > 2.0 * kl_target:
        lr = max(lr / 1.5, 5e-5)
    elif kl < 0.5 * kl_target:
        lr = min(lr * 1.5, 5e-3)
    return lr


# --------------------------------------------------------------------- losses


def _policy_loss_grads(
    policy: GaussianPolicy,
    obs: np.ndarray,
    actions: np.ndarray,
    old_logp: np.ndarray,
    advantages: np.ndarray,
    clip_ratio: float,
    entropy_coef: float,
):
    """Clipped-surrogate loss, its exact gradient w.r.t. the flat policy
    parameters, and diagnostics. One forward/backward per call."""
    n = obs.shape[0]
    mu, cache = forward_cached(policy.spec, policy.mlp_params, obs)
    log_std = policy.log_std
    var = np.exp(2.0 * log_std)
    d = actions - mu
    logp = -0.5 * np.sum(d * d / var + 2.0 * log_std + math.log(2.0 * math.pi), axis=-1)
    ratio = np.exp(logp - old_logp)
    unclipped = ratio * advantages
    clipped = np.clip(ratio, 1.0 - clip_ratio, 1.0 + clip_ratio) * advantages
    surrogate = np.minimum(unclipped, clipped)
    entropy = policy.entropy()
    loss = -float(np.mean(surrogate)) - entropy_coef * entropy

    # d(-surrogate)/d(logp): active only where the unclipped branch is the min.
    active = unclipped <= clipped
    g_logp = np.where(active, -advantages * ratio, 0.0) / n
    # Chain into the Gaussian parameters.
    up_mu = g_logp[:, None] * (d / var)
    g_mlp, _ = gradient(policy.spec, policy.mlp_params, cache, up_mu)
    g_logstd = np.sum(g_logp[:, None] * (d * d / var - 1.0), axis=0)
    g_logstd -= entropy_coef  # d(-coef * entropy)/d(log_std_j) = -coef
    # At the log-std clamp, block only gradients that push further outside.
    raw = policy.raw_log_std
    g_logstd[(raw <= policy.LOG_STD_MIN) & (g_logstd > 0.0)] = 0.0
    g_logstd[(raw >= policy.LOG_STD_MAX) & (g_logstd < 0.0)] = 0.0
    grad = np.concatenate([g_mlp, g_logstd])
    approx_kl = float(np.mean(old_logp - logp))
    clip_frac = float(np.mean(~active))
    return loss, grad, mu, cache, approx_kl, clip_frac


def _value_loss_grads(
    critic_spec: MlpSpec,
    critic_params: np.ndarray,
    obs: np.ndarray,
    returns: np.ndarray,
    old_values: np.ndarray,
    clip_ratio: float,
):
    """Clipped value regression: max of clipped/unclipped squared errors."""
    n = obs.shape[0]
    v, cache = forward_cached(critic_spec, critic_params, obs)
    v = v[:, 0]
    v_clip = old_values + np.clip(v - old_values, -clip_ratio, clip_ratio)
    err = v - returns
    err_clip = v_clip - returns
    use_plain = (err * err) >= (err_clip * err_clip)
    loss = float(np.mean(np.maximum(err * err, err_clip * err_clip)))
    # Gradient flows through whichever branch is the max; the clipped branch
    # only propagates inside the clip band.
    inside = np.abs(v - old_values) <= clip_ratio
    g_v = np.where(use_plain, 2.0 * err, np.where(inside, 2.0 * err_clip, 0.0)) / n
    g_params, _ = gradient(critic_spec, critic_params, cache, g_v[:, None])
    return loss, g_params


@dataclass
class UpdateStats:
    policy_loss: float = 0.0
    value_loss: float = 0.0
    distill_loss: float = 0.0
    entropy: float = 0.0
    approx_kl: float = 0.0
    clip_frac: float = 0.0
    epochs_run: int = 0


def ppo_update(
    policy: GaussianPolicy,
    critic_spec: MlpSpec,
    critic_params: np.ndarray,
    buffer: RolloutBuffer,
    cfg: PpoConfig,
    adam_policy: Adam,
    adam_critic: Adam,
    rng: np.random.Generator,
    distill_weighting: tuple[float, float] | None = None,
) -> tuple[np.ndarray, UpdateStats]:
    """Run the clipped-surrogate update over the buffer.

    With `distill_weighting` = (alpha, beta), the policy step optimizes
    alpha * imitation MSE + beta * PPO loss against the stored teacher
    actions. Returns the updated critic parameters and loss diagnostics.
    """
    adv, returns = gae(buffer.rewards, buffer.values, buffer.dones, cfg.gamma, cfg.gae_lambda)
    adv_flat = buffer.flat(adv)
    adv_norm = (adv_flat - adv_flat.mean()) / (adv_flat.std() + 1e-8)

    obs = buffer.flat(buffer.obs)
    obs_priv = buffer.flat(buffer.obs_priv)
    actions = buffer.flat(buffer.actions)
    old_logp = buffer.flat(buffer.log_probs)
    old_values = buffer.flat(buffer.values[:-1])
    ret_flat = buffer.flat(returns)
    teacher = buffer.flat(buffer.teacher_actions) if buffer.teacher_actions is not None else None

    n = obs.shape[0]
    stats = UpdateStats(entropy=policy.entropy())
    mb_size = max(1, n // cfg.minibatches)
    alpha, beta = distill_weighting if distill_weighting is not None else (0.0, 1.0)

    mus_old = buffer.flat(buffer.mus)
    log_std_old = buffer.log_std_old

    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        kl_epoch = 0.0
        batches = 0
        for start in range(0, n, mb_size):
            idx = order[start : start + mb_size]
            loss_p, grad_p, mu, cache, kl, clip_frac = _policy_loss_grads(
                policy, obs[idx], actions[idx], old_logp[idx], adv_norm[idx],
                cfg.clip_ratio, cfg.entropy_coef,
            )
            kl = _gaussian_kl(mus_old[idx], log_std_old, mu, policy.log_std)
            if cfg.kl_adaptive_lr:
                # Adjust before stepping, from the divergence actually measured;
                # aim somewhat below the early-stop threshold.
                adam_policy.lr = adam_critic.lr = _adapt_lr(
                    adam_policy.lr, kl, 0.67 * cfg.kl_threshold
                )
            if teacher is not None and alpha > 0.0:
                d = mu - teacher[idx]
                stats.distill_loss = float(np.mean(np.sum(d * d, axis=-1)))
                up_imitate = (2.0 / len(idx)) * d
                g_imit, _ = gradient(policy.spec, policy.mlp_params, cache, up_imitate)
                grad_full = beta * grad_p
                grad_full[: policy.spec.num_params()] += alpha * g_imit
            else:
                grad_full = grad_p if beta == 1.0 else beta * grad_p
            if not np.all(np.isfinite(grad_full)):
                raise FloatingPointError("non-finite policy gradient")
            policy.params = adam_policy.step(policy.params, _clip_grad(grad_full, cfg.max_grad_norm))

            loss_v, grad_v = _value_loss_grads(
                critic_spec, critic_params, obs_priv[idx], ret_flat[idx],
                old_values[idx], cfg.clip_ratio,
            )
            if not np.all(np.isfinite(grad_v)):
                raise FloatingPointError("non-finite critic gradient")
            critic_params = adam_critic.step(
                critic_params, _clip_grad(cfg.value_coef * grad_v, cfg.max_grad_norm)
            )

            stats.policy_loss = loss_p
            stats.value_loss = loss_v
            stats.approx_kl = kl
            stats.clip_frac = clip_frac
            kl_epoch += kl
            batches += 1
        stats.epochs_run = epoch + 1
        if batches and kl_epoch / batches > cfg.kl_threshold:
            break
    return critic_params, stats


# ------------------------------------------------------------------ training


@dataclass
class TrainerArtifacts:
    policy: GaussianPolicy
    critic_spec: MlpSpec
    critic_params: np.ndarray
    curriculum: float
    telemetry_rows: list[dict] = field(default_factory=list)


class Trainer:
    """Shared training loop for teacher policies and student distillation.

    phase "teacher": the policy consumes the privileged observation directly.
    phase "student": the policy consumes the stacked observable history and
    an optional frozen teacher provides imitation targets on the privileged
    observation of the same states (queried online).
    """

    def __init__(
        self,
        env_cfg: EnvConfig,
        ppo_cfg: PpoConfig,
        task: TaskMode,
        phase: str = "teacher",
        teacher: GaussianPolicy | None = None,
        distill_cfg: DistillConfig | None = None,
        safe_stage: int = 1,
        unsafe_snapshots: list | None = None,
        telemetry_path: str | None = None,
        zero_k: bool = False,
    ):
        if phase not in ("teacher", "student"):
            raise ValueError("phase must be teacher or student")
        if phase == "student" and teacher is None and (distill_cfg is None or distill_cfg.alpha > 0):
            raise ValueError("student phase with alpha > 0 requires a teacher policy")
        self.env_cfg = env_cfg
        self.cfg = ppo_cfg
        self.task = task
        self.phase = phase
        self.teacher = teacher
        self.distill_cfg = distill_cfg or DistillConfig()
        self.safe_stage = safe_stage
        self.unsafe_snapshots = unsafe_snapshots or []
        self.telemetry_path = telemetry_path
        self.zero_k = zero_k

        obs_dim = STACKED_OBS_DIM if phase == "student" else PRIV_OBS_DIM
        pol_spec = MlpSpec(
            (obs_dim, *ppo_cfg.policy_hidden, NUM_JOINTS),
            last_layer_scale=0.01,
            seed=ppo_cfg.seed,
        )
        self.policy = GaussianPolicy(pol_spec, log_std_init=ppo_cfg.log_std_init)
        self.critic_spec = MlpSpec(
            (PRIV_OBS_DIM, *ppo_cfg.critic_hidden, 1), seed=ppo_cfg.seed + 1
        )
        self.critic_params = netlib.init_params(self.critic_spec)
        self.adam_policy = Adam(lr=ppo_cfg.learning_rate)
        self.adam_critic = Adam(lr=ppo_cfg.learning_rate)

        rngs = spawn_rngs(ppo_cfg.seed, ppo_cfg.n_envs + 2)
        self.rng = rngs[0]
        self.rng_update = rngs[1]
        self.x_offset, self.x_scale = obs_normalizer(env_cfg)
        self.priv_scale = priv_extra_normalizer()
        self.envs = [
            QuadrupedEnv(env_cfg, seed=ppo_cfg.seed * 100003 + 17 * i)
            for i in range(ppo_cfg.n_envs)
        ]
        self.stacks = [HistoryStack(OBS_X_DIM) for _ in range(ppo_cfg.n_envs)]
        self.curriculum = ppo_cfg.curriculum_start
        from collections import deque

        self._perf_window = deque(maxlen=50)

    # -- episode management

    def _begin_episode(self, i: int) -> None:
        env = self.envs[i]
        use_unsafe = (
            self.task is TaskMode.SAFE
            and self.safe_stage == 2
            and self.unsafe_snapshots
            and self.rng.random() < 0.5
        )
        loaded_stack = None
        if use_unsafe:
            entry = self.unsafe_snapshots[int(self.rng.integers(len(self.unsafe_snapshots)))]
            # Entries may carry the observation stack recorded at harvest
            # time, so students see the same mixed history they will face
            # when the switch fires at deployment.
            snap, loaded_stack = entry if isinstance(entry, tuple) else (entry, None)
            env.reset(init=snap)
            env.set_command(sample_command(self.rng, TaskMode.SAFE, 1.0, self.env_cfg), refresh_ccp=True)
        else:
            env.reset(curriculum=self.curriculum)
            if self.task is TaskMode.SAFE and self.safe_stage == 2:
                env.schedule = sample_disturbance(self.rng, self.curriculum, self.env_cfg)
                env.set_command(
                    sample_command(self.rng, TaskMode.SAFE, self.curriculum, self.env_cfg),
                    refresh_ccp=True,
                )
            elif self.task is TaskMode.SAFE:
                env.set_command(sample_command(self.rng, TaskMode.SAFE, self.curriculum, self.env_cfg))
            else:
                # Per-episode cap jitter, biased low, keeps a steady share of
                # small-push episodes where admittance-target errors stay
                # inside the informative band of the tracking reward.
                # Keep training pushes inside the regime where resisting is
                # physically possible and every admittance target is reachable
                # by the legs, so gain distinctions stay learnable.
                cap = self.env_cfg.train_force_cap * (0.1 + 0.6 * float(self.rng.uniform(0.0, 1.0)))
                env.schedule = sample_disturbance(
                    self.rng, self.curriculum, self.env_cfg, force_cap=cap,
                )
                cmd = sample_command(self.rng, TaskMode.COMPLIANT, self.curriculum, self.env_cfg)
                if self.zero_k:
                    # Ablation variant: no admittance velocity generation.
                    cmd = Command(mode=TaskMode.COMPLIANT, vx=cmd.vx, vy=cmd.vy, wz=cmd.wz, k=0.0)
                env.set_command(cmd)
        xn = self._norm_x(env.observe_x())
        if loaded_stack is not None:
            # The harvested stack already ends at this state; reuse it as-is.
            self.stacks[i].load(np.asarray(loaded_stack, dtype=np.float64))
        else:
            self.stacks[i].reset(xn)
        self._last_x[i] = xn

    def _norm_x(self, x: np.ndarray) -> np.ndarray:
        return (x - self.x_offset) * self.x_scale

    def _priv_obs(self, i: int, xn: np.ndarray) -> np.ndarray:
        return np.concatenate([xn, self.envs[i].priv_extras() * self.priv_scale])

    def _policy_obs(self, i: int, xn: np.ndarray) -> np.ndarray:
        if self.phase == "student":
            return self.stacks[i].emit()
        return self._priv_obs(i, xn)

    # -- main loop

    def train(self, progress_cb=None, checkpoint_dir: str | None = None) -> TrainerArtifacts:
        cfg = self.cfg
        n = cfg.n_envs
        buffer = RolloutBuffer(
            cfg.horizon,
            n,
            STACKED_OBS_DIM if self.phase == "student" else PRIV_OBS_DIM,
            PRIV_OBS_DIM,
            store_teacher=self.phase == "student" and self.teacher is not None,
        )
        self._last_x = [None] * n
        for i in range(n):
            self._begin_episode(i)
        rows = []
        self._last_promotion = 0
        import dataclasses

        for it in range(cfg.iterations):
            progress = it / max(1, cfg.iterations)
            tracking_scores = self.collect_rollout(buffer, progress)
            alpha = self.distill_cfg.alpha_at(progress) if self.phase == "student" else 0.0
            weighting = (alpha, self.distill_cfg.beta) if buffer.store_teacher else None
            it_cfg = cfg
            if cfg.entropy_decay:
                it_cfg = dataclasses.replace(
                    cfg, entropy_coef=cfg.entropy_coef * (1.0 - progress))
            self.critic_params, stats = ppo_update(
                self.policy, self.critic_spec, self.critic_params, buffer, it_cfg,
                self.adam_policy, self.adam_critic, self.rng_update,
                distill_weighting=weighting,
            )
            self._perf_window.extend(tracking_scores)
            perf = float(np.mean(self._perf_window)) if len(self._perf_window) >= 30 else 0.0
            if it - self._last_promotion >= cfg.curriculum_cooldown:
                new_level = min(curriculum_tick(perf, self.curriculum, cfg),
                                cfg.curriculum_max)
                if new_level > self.curriculum:
                    self._perf_window.clear()
                    self._last_promotion = it
                self.curriculum = new_level
            row = {
                "iteration": it,
                "mean_reward": float(buffer.rewards.mean()),
                "tracking_perf": perf,
                "curriculum": self.curriculum,
                "policy_loss": stats.policy_loss,
                "value_loss": stats.value_loss,
                "distill_loss": stats.distill_loss,
                "approx_kl": stats.approx_kl,
                "entropy": stats.entropy,
                "epochs_run": stats.epochs_run,
            }
            rows.append(row)
            if progress_cb:
                progress_cb(row)
            if checkpoint_dir and cfg.checkpoint_every > 0 and (it + 1) % cfg.checkpoint_every == 0:
                from .artifacts import save_policy

                os.makedirs(checkpoint_dir, exist_ok=True)
                save_policy(os.path.join(checkpoint_dir, f"policy_iter{it + 1:05d}.ckpt"),
                            self.policy, {"task": self.task.value, "phase": self.phase,
                                          "iteration": it + 1})
        if self.telemetry_path:
            write_telemetry(self.telemetry_path, rows)
        return TrainerArtifacts(
            self.policy, self.critic_spec, self.critic_params, self.curriculum, rows
        )

    def collect_rollout(self, buffer: RolloutBuffer, progress: float) -> list[float]:
        """Fill one horizon of transitions across all envs; returns per-episode
        tracking scores observed at episode ends (curriculum signal)."""
        cfg = self.cfg
        n = cfg.n_envs
        align_scale = (
            self.distill_cfg.align_scale_at(progress)
            if self.phase == "student" and self.teacher is not None
            else 0.0
        )
        finished_scores: list[float] = []
        buffer.log_std_old = self.policy.log_std.copy()
        for t in range(cfg.horizon):
            pol_obs = np.stack([self._policy_obs(i, self._last_x[i]) for i in range(n)])
            priv_obs = np.stack([self._priv_obs(i, self._last_x[i]) for i in range(n)])
            actions, logps, mus = self.policy.sample(pol_obs, self.rng)
            values = forward(self.critic_spec, self.critic_params, priv_obs)[:, 0]
            teacher_actions = (
                self.teacher.mean(priv_obs) if buffer.store_teacher else None
            )
            buffer.obs[t] = pol_obs
            buffer.obs_priv[t] = priv_obs
            buffer.actions[t] = actions
            buffer.mus[t] = mus
            buffer.log_probs[t] = logps
            buffer.values[t] = values
            if teacher_actions is not None:
                buffer.teacher_actions[t] = teacher_actions

            for i in range(n):
                env = self.envs[i]
                res = env.step(actions[i])
                reward = res.total_reward
                if teacher_actions is not None and align_scale > 0.0:
                    r_act, r_dir = alignment_rewards(teacher_actions[i], actions[i])
                    reward += align_scale * self.distill_cfg.align_weight * (r_act + r_dir)
                done = res.done
                if done:
                    track = self._tracking_score(env, res)
                    finished_scores.append(track)
                    if not res.failed:
                        # Timeout: bootstrap the cut-off return through the critic.
                        xn_next = self._norm_x(env.observe_x())
                        pv = np.concatenate([xn_next, env.priv_extras() * self.priv_scale])
                        reward += cfg.gamma * float(
                            forward(self.critic_spec, self.critic_params, pv[None, :])[0, 0]
                        )
                    self._begin_episode(i)
                else:
                    if (
                        self.task is TaskMode.COMPLIANT
                        and cfg.cmd_resample_s > 0
                        and env.step_idx % max(1, int(cfg.cmd_resample_s / self.env_cfg.dt)) == 0
                    ):
                        cmd = sample_command(self.rng, TaskMode.COMPLIANT,
                                             self.curriculum, self.env_cfg)
                        if self.zero_k:
                            cmd = Command(mode=TaskMode.COMPLIANT, vx=cmd.vx,
                                          vy=cmd.vy, wz=cmd.wz, k=0.0)
                        env.set_command(cmd)
                    xn = self._norm_x(env.observe_x())
                    self.stacks[i].push(xn)
                    self._last_x[i] = xn
                buffer.rewards[t, i] = reward
                buffer.dones[t, i] = 1.0 if done else 0.0
        pol_obs = np.stack([self._priv_obs(i, self._last_x[i]) for i in range(n)])
        buffer.values[cfg.horizon] = forward(self.critic_spec, self.critic_params, pol_obs)[:, 0]
        if not np.all(np.isfinite(buffer.rewards)):
            raise FloatingPointError("non-finite rewards in rollout")
        return finished_scores

    def _tracking_score(self, env: QuadrupedEnv, res) -> float:
        """Curriculum metric in [0, 1]: survival plus task tracking quality."""
        if res.failed:
            return 0.0
        terms = res.reward_terms.terms
        if self.task is TaskMode.COMPLIANT:
            return terms["lin_vel_tracking"][0]
        return terms["pos_tracking_soft"][0]


def write_telemetry(path: str, rows: list[dict]) -> None:
    if not rows:
        return
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=list(rows[0].keys()))
        writer.writeheader()
        writer.writerows(rows)


def train_teacher(
    env_cfg: EnvConfig,
    ppo_cfg: PpoConfig,
    task: TaskMode,
    telemetry_path: str | None = None,
    checkpoint_dir: str | None = None,
    **kwargs,
) -> TrainerArtifacts:
    trainer = Trainer(env_cfg, ppo_cfg, task, phase="teacher",
                      telemetry_path=telemetry_path, **kwargs)
    return trainer.train(checkpoint_dir=checkpoint_dir)


def train_safe_two_stage(
    env_cfg: EnvConfig,
    stage1_cfg: PpoConfig,
    stage2_cfg: PpoConfig,
    unsafe_snapshots: list | None = None,
    telemetry_path: str | None = None,
    stage1_ckpt_cb=None,
):
    """Stage 1: reach randomly sampled position-offset targets, no pushes.
    Stage 2: continue the same networks under full disturbances with the
    capture-point target refreshed each step, half the episodes starting
    from harvested unsafe states (falls back to random starts when the
    unsafe set is empty)."""
    t1 = Trainer(env_cfg, stage1_cfg, TaskMode.SAFE, phase="teacher", safe_stage=1,
                 telemetry_path=telemetry_path)
    art1 = t1.train()
    if stage1_ckpt_cb:
        stage1_ckpt_cb(art1)
    if not unsafe_snapshots:
        import warnings

        warnings.warn(
            "stage 2 requested without harvested unsafe states; "
            "falling back to random initialization only"
        )
    t2 = Trainer(env_cfg, stage2_cfg, TaskMode.SAFE, phase="teacher", safe_stage=2,
                 unsafe_snapshots=unsafe_snapshots or [])
    t2.policy = art1.policy
    t2.critic_params = art1.critic_params
    t2.curriculum = max(art1.curriculum, stage2_cfg.curriculum_start)
    art2 = t2.train()
    return art1, art2


def distill_student(
    env_cfg: EnvConfig,
    ppo_cfg: PpoConfig,
    task: TaskMode,
    teacher: GaussianPolicy | None,
    distill_cfg: DistillConfig | None = None,
    safe_stage: int = 1,
    unsafe_snapshots: list | None = None,
    telemetry_path: str | None = None,
    zero_k: bool = False,
) -> TrainerArtifacts:
    """Online teacher-guided training of the history-stacked student.

    With teacher=None (and a zero imitation weight) this degenerates to plain
    PPO on the stacked observations, which is the no-teacher ablation."""
    if teacher is not None and teacher.spec.out_dim != NUM_JOINTS:
        raise ValueError("teacher action dimension does not match the student's")
    trainer = Trainer(
        env_cfg, ppo_cfg, task, phase="student", teacher=teacher,
        distill_cfg=distill_cfg, safe_stage=safe_stage,
        unsafe_snapshots=unsafe_snapshots, telemetry_path=telemetry_path,
        zero_k=zero_k,
    )
    return trainer.train()
