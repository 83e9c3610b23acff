"""Shared fixtures: the desk-scale trained pipeline used by the acceptance
suite. Artifacts are built once per session and cached on disk, so reruns
of the suite skip retraining unless SACLO_TEST_REBUILD=1.
"""
from __future__ import annotations

import os
import pathlib

import numpy as np
import pytest

from saclo import artifacts as art
from saclo.core import TaskMode
from saclo.distill import DistillConfig
from saclo.env import EnvConfig
from saclo.ppo import PpoConfig, Trainer, distill_student, train_safe_two_stage
from saclo.recover import harvest_unsafe, label_recoverability, train_recover_net
from saclo.runtime import ControllerBundle

CACHE_DIR = pathlib.Path(__file__).resolve().parent.parent / ".acceptance_cache"

ENV_CFG = EnvConfig(episode_s=6.0)

TEACHER_CFG = PpoConfig(
    n_envs=64, horizon=48, iterations=1600, epochs=4, minibatches=4,
    learning_rate=5e-4, entropy_coef=0.002,
    policy_hidden=(128, 128), critic_hidden=(128, 128),
    curriculum_start=0.3, curriculum_threshold=0.45, curriculum_step=0.1,
    curriculum_cooldown=25, curriculum_max=0.75, seed=1,
)
TEACHER_ZEROK_CFG = TEACHER_CFG
STUDENT_CFG = PpoConfig(
    n_envs=48, horizon=48, iterations=600, epochs=4, minibatches=4,
    learning_rate=5e-4, entropy_coef=0.002,
    policy_hidden=(128, 128), critic_hidden=(128, 128),
    curriculum_start=0.5, curriculum_threshold=0.45, curriculum_step=0.1,
    curriculum_cooldown=25, curriculum_max=0.75, seed=11,
)
SAFE_STAGE1_CFG = PpoConfig(
    n_envs=48, horizon=48, iterations=450, epochs=4, minibatches=4,
    learning_rate=5e-4, entropy_coef=0.002,
    policy_hidden=(128, 128), critic_hidden=(128, 128),
    curriculum_start=0.3, curriculum_threshold=0.5, curriculum_step=0.1,
    curriculum_cooldown=25, seed=21,
)
SAFE_STAGE2_CFG = PpoConfig(
    n_envs=48, horizon=48, iterations=350, epochs=4, minibatches=4,
    learning_rate=3e-4, entropy_coef=0.002,
    policy_hidden=(128, 128), critic_hidden=(128, 128),
    curriculum_start=0.7, curriculum_threshold=0.5, curriculum_step=0.1,
    curriculum_cooldown=25, seed=22,
)
SAFE_STUDENT_CFG = PpoConfig(
    n_envs=48, horizon=48, iterations=450, epochs=4, minibatches=4,
    learning_rate=5e-4, entropy_coef=0.002,
    policy_hidden=(128, 128), critic_hidden=(128, 128),
    curriculum_start=0.7, curriculum_threshold=0.5, curriculum_step=0.1,
    curriculum_cooldown=25, seed=31,
)
HARVEST_EPISODES = 300
HARVEST_SEED = 41
LABEL_SEED = 42
LABEL_MAX_RECORDS = 900
RECOVER_SEED = 43


def _cache(name: str) -> pathlib.Path:
    CACHE_DIR.mkdir(exist_ok=True)
    return CACHE_DIR / name


def _fresh(path: pathlib.Path) -> bool:
    return not path.exists() or os.environ.get("SACLO_TEST_REBUILD") == "1"


@pytest.fixture(scope="session")
def teacher_comply():
    path = _cache("teacher_comply.ckpt")
    if _fresh(path):
        trainer = Trainer(ENV_CFG, TEACHER_CFG, TaskMode.COMPLIANT, phase="teacher")
        result = trainer.train()
        art.save_policy(path, result.policy, {"task": "compliant", "phase": "teacher"})
        art.save_value_net(_cache("teacher_comply_critic.ckpt"), result.critic_spec,
                           result.critic_params, {"kind": "value_net"})
    policy, _ = art.load_policy(path)
    return policy


@pytest.fixture(scope="session")
def teacher_comply_zerok():
    path = _cache("teacher_comply_zerok.ckpt")
    if _fresh(path):
        trainer = Trainer(ENV_CFG, TEACHER_ZEROK_CFG, TaskMode.COMPLIANT,
                          phase="teacher", zero_k=True)
        result = trainer.train()
        art.save_policy(path, result.policy,
                        {"task": "compliant", "phase": "teacher", "zero_k": True})
    policy, _ = art.load_policy(path)
    return policy


@pytest.fixture(scope="session")
def student_comply(teacher_comply):
    path = _cache("comply_student.ckpt")
    if _fresh(path):
        # Constant imitation weight: the student stays a close clone so the
        # teacher's gain response survives distillation.
        result = distill_student(ENV_CFG, STUDENT_CFG, TaskMode.COMPLIANT,
                                 teacher_comply,
                                 distill_cfg=DistillConfig(alpha=1.0, beta=0.3,
                                                           alpha_decay=False))
        art.save_policy(path, result.policy, {"task": "compliant", "phase": "student"})
    policy, _ = art.load_policy(path)
    return policy


@pytest.fixture(scope="session")
def student_comply_zerok(teacher_comply_zerok):
    path = _cache("comply_student_zerok.ckpt")
    if _fresh(path):
        result = distill_student(ENV_CFG, STUDENT_CFG, TaskMode.COMPLIANT,
                                 teacher_comply_zerok,
                                 distill_cfg=DistillConfig(alpha=1.0, beta=0.3,
                                                           alpha_decay=False),
                                 zero_k=True)
        art.save_policy(path, result.policy,
                        {"task": "compliant", "phase": "student", "zero_k": True})
    policy, _ = art.load_policy(path)
    return policy


@pytest.fixture(scope="session")
def unsafe_records(student_comply):
    path = _cache("unsafe.ds")
    if _fresh(path):
        records, stats = harvest_unsafe(student_comply, ENV_CFG,
                                        episodes=HARVEST_EPISODES, seed=HARVEST_SEED)
        assert stats["failures"] > 0, "harvest produced no failures"
        art.save_unsafe_dataset(path, records)
    return art.load_unsafe_dataset(path)


@pytest.fixture(scope="session")
def teacher_safe(unsafe_records):
    path = _cache("teacher_safe.ckpt")
    if _fresh(path):
        snaps = [(r.snapshot, r.obs) for r in unsafe_records]
        _, art2 = train_safe_two_stage(ENV_CFG, SAFE_STAGE1_CFG, SAFE_STAGE2_CFG,
                                       unsafe_snapshots=snaps)
        art.save_policy(path, art2.policy, {"task": "safe", "phase": "teacher"})
    policy, _ = art.load_policy(path)
    return policy


@pytest.fixture(scope="session")
def student_safe(teacher_safe, unsafe_records):
    path = _cache("safe_student.ckpt")
    if _fresh(path):
        snaps = [(r.snapshot, r.obs) for r in unsafe_records]
        result = distill_student(ENV_CFG, SAFE_STUDENT_CFG, TaskMode.SAFE,
                                 teacher_safe, distill_cfg=DistillConfig(),
                                 safe_stage=2, unsafe_snapshots=snaps)
        art.save_policy(path, result.policy, {"task": "safe", "phase": "student"})
    policy, _ = art.load_policy(path)
    return policy


@pytest.fixture(scope="session")
def recover_samples(student_safe, unsafe_records):
    path = _cache("recover.ds")
    if _fresh(path):
        samples, stats = label_recoverability(student_safe, ENV_CFG, unsafe_records,
                                              seed=LABEL_SEED,
                                              max_records=LABEL_MAX_RECORDS)
        assert 0.0 < stats["positive_rate"] < 1.0, (
            f"degenerate label base rate: {stats}")
        art.save_recover_dataset(path, samples)
    return art.load_recover_dataset(path)


@pytest.fixture(scope="session")
def recover_net(recover_samples):
    path = _cache("recover_net.ckpt")
    if _fresh(path):
        spec, params, report = train_recover_net(recover_samples, hidden=(128, 128),
                                                 seed=RECOVER_SEED, epochs=80)
        art.save_value_net(path, spec, params, {
            "kind": "recover_net", "val_accuracy": report.accuracy,
            "val_auc": report.auc,
        })
    spec, params, extras = art.load_value_net(path, expect_kind="recover_net")
    return spec, params, extras


@pytest.fixture(scope="session")
def bundle(student_comply, student_safe, recover_net):
    spec, params, _ = recover_net
    return ControllerBundle(student_comply, student_safe, spec, params, ENV_CFG)
