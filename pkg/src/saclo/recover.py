"""Recoverability pipeline: harvest pre-failure windows from the compliant
policy, label them by rolling out the safe policy from the exact failing
states, train the sigmoid-head recoverability classifier, and decide policy
switching against a threshold with hysteresis.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, replace

import numpy as np

from .artifacts import RecoverSample, UnsafeRecord
from .core import OBS_X_DIM, Command, TaskMode
from .distill import HistoryStack
from .env import EnvConfig, QuadrupedEnv, obs_normalizer, sample_command, sample_disturbance
from .netlib import Adam, GaussianPolicy, MlpSpec, forward, forward_cached, gradient, init_params

WINDOW = 100          # pre-failure steps stored per failure (plus the failing one)
SUCCESS_HOLD = 25     # consecutive stand-still steps that count as recovered
# Recovery window: the stored disturbance replays for its remaining duration
# (up to 3 s), so the window must extend past it plus braking and the
# stand-still hold.
LABEL_HORIZON = 250


def _student_act(policy: GaussianPolicy, stacked: np.ndarray) -> np.ndarray:
    return policy.mean(stacked[None, :])[0]


class _StackedRunner:
    """Shared observation plumbing: normalized x, history stack, priv extras."""

    def __init__(self, env: QuadrupedEnv):
        self.env = env
        self.offset, self.scale = obs_normalizer(env.cfg)
        self.stack = HistoryStack(OBS_X_DIM)

    def norm_x(self) -> np.ndarray:
        return (self.env.observe_x() - self.offset) * self.scale

    def reset_stack(self) -> np.ndarray:
        return self.stack.reset(self.norm_x())

    def push(self) -> np.ndarray:
        return self.stack.push(self.norm_x())


def harvest_unsafe(
    policy: GaussianPolicy,
    env_cfg: EnvConfig,
    episodes: int,
    seed: int = 0,
    curriculum: float = 1.0,
    force_cap: float | None = None,
) -> tuple[list[UnsafeRecord], dict]:
    """Run the compliant student under random commands and pushes; on every
    failure, store the preceding 101 (observation, state) pairs."""
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
    records: list[UnsafeRecord] = []
    failures = 0
    for ep in range(episodes):
        env = QuadrupedEnv(env_cfg, seed=seed * 1_000_003 + ep)
        runner = _StackedRunner(env)
        env.reset(curriculum=curriculum)
        env.schedule = sample_disturbance(rng, curriculum, env_cfg, force_cap=force_cap)
        env.set_command(sample_command(rng, TaskMode.COMPLIANT, curriculum, env_cfg))
        stacked = runner.reset_stack()
        window: deque = deque(maxlen=WINDOW + 1)
        for _ in range(env_cfg.episode_steps):
            window.append((stacked.astype(np.float32), env.snapshot()))
            res = env.step(_student_act(policy, stacked))
            if res.failed:
                failures += 1
                for k, (obs, snap) in enumerate(reversed(window)):
                    records.append(
                        UnsafeRecord(obs=obs, snapshot=snap, episode_id=ep,
                                     steps_before_failure=k)
                    )
                break
            if res.done:
                break
            stacked = runner.push()
    stats = {"episodes": episodes, "failures": failures, "records": len(records)}
    if failures == 0:
        import warnings

        warnings.warn(
            "no failures harvested; consider raising the force cap or episodes"
        )
    return records, stats


def label_recoverability(
    safe_policy: GaussianPolicy,
    env_cfg: EnvConfig,
    records: list[UnsafeRecord],
    seed: int = 0,
    horizon: int = LABEL_HORIZON,
    max_records: int | None = None,
) -> tuple[list[RecoverSample], dict]:
    """Restart the simulator at each stored state (replaying the remainder of
    the disturbance that caused the failure), run the safe policy with the
    capture target refreshed every step, and label success/failure."""
    samples: list[RecoverSample] = []
    skipped = 0
    if max_records is None or max_records >= len(records):
        use = records
    else:
        # Evenly strided subset keeps every window depth represented.
        idx = np.linspace(0, len(records) - 1, max_records).astype(int)
        use = [records[i] for i in idx]
    for idx, rec in enumerate(use):
        env = QuadrupedEnv(env_cfg, seed=seed * 2_000_003 + idx)
        env.reset(init=rec.snapshot)
        if env.snapshot().state_hash() != rec.snapshot.state_hash():
            skipped += 1
            continue
        env.set_command(Command(mode=TaskMode.SAFE), refresh_ccp=True)
        runner = _StackedRunner(env)
        runner.stack.load(np.asarray(rec.obs, dtype=np.float64))
        stacked = runner.stack.emit()
        label = 0
        hold = 0
        for _ in range(horizon):
            res = env.step(_student_act(safe_policy, stacked))
            if res.failed:
                break
            if res.reward_terms.terms["stand_still"][0] >= 1.0:
                hold += 1
                if hold >= SUCCESS_HOLD:
                    label = 1
                    break
            else:
                hold = 0
            if res.done:
                break
            stacked = runner.push()
        samples.append(RecoverSample(obs=rec.obs, label=label))
    n_pos = sum(s.label for s in samples)
    stats = {
        "labeled": len(samples),
        "skipped": skipped,
        "positive": n_pos,
        "positive_rate": n_pos / len(samples) if samples else float("nan"),
    }
    return samples, stats


# ------------------------------------------------------------ classifier fit


def rank_auc(scores: np.ndarray, labels: np.ndarray) -> float:
    """Area under the ROC curve via the rank-sum statistic."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    pos = scores[labels == 1]
    neg = scores[labels == 0]
    if len(pos) == 0 or len(neg) == 0:
        return float("nan")
    order = np.argsort(np.concatenate([pos, neg]), kind="mergesort")
    ranks = np.empty(len(order))
    ranks[order] = np.arange(1, len(order) + 1)
    # midranks for ties
    allscore = np.concatenate([pos, neg])
    sorted_scores = np.sort(allscore)
    uniq, first = np.unique(sorted_scores, return_index=True)
    if len(uniq) != len(allscore):
        rank_map = {}
        i = 0
        while i < len(sorted_scores):
            j = i
            while j + 1 < len(sorted_scores) and sorted_scores[j + 1] == sorted_scores[i]:
                j += 1
            rank_map[sorted_scores[i]] = 0.5 * (i + 1 + j + 1)
            i = j + 1
        ranks = np.array([rank_map[s] for s in allscore])
    r_pos = ranks[: len(pos)].sum()
    return float((r_pos - len(pos) * (len(pos) + 1) / 2.0) / (len(pos) * len(neg)))


@dataclass
class RecoverFitReport:
    train_size: int
    val_size: int
    accuracy: float
    auc: float
    calibration: list[tuple[float, float, int]]  # (mean score, empirical rate, count)
    final_loss: float


def train_recover_net(
    samples: list[RecoverSample],
    hidden: tuple[int, ...] = (128, 128, 128),
    seed: int = 0,
    epochs: int = 60,
    lr: float = 1e-3,
    batch_size: int = 256,
    val_frac: float = 0.2,
) -> tuple[MlpSpec, np.ndarray, RecoverFitReport]:
    """Binary cross-entropy fit of the sigmoid-head classifier with a held-out
    split; reports accuracy, AUC and a 10-bin calibration table."""
    labels = np.array([s.label for s in samples], dtype=np.float64)
    if len(np.unique(labels)) < 2:
        raise ValueError("recoverability dataset needs both labels present")
    obs = np.stack([np.asarray(s.obs, dtype=np.float64) for s in samples])
    rng = np.random.Generator(np.random.PCG64(seed))
    order = rng.permutation(len(samples))
    n_val = max(1, int(len(samples) * val_frac))
    val_idx, train_idx = order[:n_val], order[n_val:]
    if len(np.unique(labels[train_idx])) < 2:
        raise ValueError("training split became single-class; provide more data")

    spec = MlpSpec((obs.shape[1], *hidden, 1), output_act="sigmoid", seed=seed)
    params = init_params(spec)
    adam = Adam(lr=lr)
    n_train = len(train_idx)
    # Small datasets still deserve several updates per epoch.
    batch_size = min(batch_size, max(32, n_train // 4))
    final_loss = float("nan")
    for _ in range(epochs):
        perm = rng.permutation(n_train)
        for start in range(0, n_train, batch_size):
            idx = train_idx[perm[start : start + batch_size]]
            x, y = obs[idx], labels[idx]
            p, cache = forward_cached(spec, params, x)
            p = p[:, 0]
            eps = 1e-12
            final_loss = float(-np.mean(y * np.log(p + eps) + (1 - y) * np.log(1 - p + eps)))
            # d(BCE)/d(sigmoid output) -> combined with the sigmoid derivative
            # inside the net's output activation.
            up = ((p - y) / np.maximum(p * (1.0 - p), eps) / len(idx))[:, None]
            g, _ = gradient(spec, params, cache, up)
            params = adam.step(params, g)

    val_scores = forward(spec, params, obs[val_idx])[:, 0]
    val_labels = labels[val_idx]
    acc = float(np.mean((val_scores >= 0.5) == (val_labels >= 0.5)))
    auc = rank_auc(val_scores, val_labels)
    bins = []
    for b in range(10):
        lo, hi = b / 10.0, (b + 1) / 10.0
        mask = (val_scores >= lo) & (val_scores < hi if b < 9 else val_scores <= hi)
        if mask.any():
            bins.append((float(val_scores[mask].mean()), float(val_labels[mask].mean()),
                         int(mask.sum())))
    report = RecoverFitReport(
        train_size=len(train_idx), val_size=len(val_idx),
        accuracy=acc, auc=auc, calibration=bins, final_loss=final_loss,
    )
    return spec, params, report


# ---------------------------------------------------------------- switching


@dataclass(frozen=True)
class SwitchState:
    """Threshold switch with hysteresis and a minimum dwell time."""

    active: str = "comply"           # "comply" | "safe"
    epsilon: float = 0.9             # enter safe when V < epsilon
    epsilon_back: float = 0.95       # leave safe only when V >= epsilon_back
    min_dwell: int = 25              # steps before a switch-back is allowed
    dwell: int = 0
    last_v: float = 1.0

    def __post_init__(self):
        if not (0.0 <= self.epsilon <= 1.0):
            raise ValueError("epsilon must lie in [0, 1]")
        if self.epsilon_back < self.epsilon:
            raise ValueError("epsilon_back must be >= epsilon")
        if self.active not in ("comply", "safe"):
            raise ValueError("active policy must be comply or safe")


def switch_decide(v: float, state: SwitchState, stand_still: bool = False) -> SwitchState:
    """One switching decision. Compliant -> safe when the recoverability score
    drops below epsilon; safe -> compliant only after the dwell time, with the
    score back above the exit threshold and the robot standing still."""
    v = float(v)
    if state.active == "comply":
        if v < state.epsilon:
            return replace(state, active="safe", dwell=0, last_v=v)
        return replace(state, dwell=state.dwell + 1, last_v=v)
    if v >= state.epsilon_back and state.dwell >= state.min_dwell and stand_still:
        return replace(state, active="comply", dwell=0, last_v=v)
    return replace(state, dwell=state.dwell + 1, last_v=v)
