"""Artifact files: policy/value checkpoints, unsafe-state and recoverability
datasets, and the per-run manifest with content hashes.

All formats are versioned binary with magic headers and are byte-for-byte
reproducible for identical inputs, so rerunning a stage with the same seed
yields identical file hashes.
"""
from __future__ import annotations

import hashlib
import json
import os
import struct
from dataclasses import dataclass

import numpy as np

from .core import Command, TaskMode
from .env import DisturbanceEvent, EnvSnapshot
from .netlib import Adam, GaussianPolicy, MlpSpec, load_checkpoint, save_checkpoint
from ._kernel import layout as L

UNSAFE_MAGIC = b"SACLOUDS"
RECOVER_MAGIC = b"SACLORDS"
DATASET_VERSION = 2


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


# ------------------------------------------------------------- policy/critic


def save_policy(path, policy: GaussianPolicy, extras: dict, adam: Adam | None = None) -> None:
    meta = dict(extras)
    meta["kind"] = "gaussian_policy"
    meta["log_std_tail"] = policy.spec.out_dim
    save_checkpoint(path, policy.spec, policy.params, extras=meta, adam=adam)


def load_policy(path) -> tuple[GaussianPolicy, dict]:
    spec, params, extras, _ = load_checkpoint(path)
    if extras.get("kind") != "gaussian_policy":
        raise ValueError(f"{path} is not a policy checkpoint")
    return GaussianPolicy(spec, params=params), extras


def save_value_net(path, spec: MlpSpec, params: np.ndarray, extras: dict,
                   adam: Adam | None = None) -> None:
    meta = dict(extras)
    meta.setdefault("kind", "value_net")
    save_checkpoint(path, spec, params, extras=meta, adam=adam)


def load_value_net(path, expect_kind: str = "value_net"):
    spec, params, extras, _ = load_checkpoint(path)
    if extras.get("kind") != expect_kind:
        raise ValueError(f"{path} is not a {expect_kind} checkpoint")
    return spec, params, extras


# ------------------------------------------------------------ snapshot codec


def _pack_array(f, arr: np.ndarray) -> None:
    a = np.ascontiguousarray(arr, dtype=np.float64)
    f.write(struct.pack("<I", a.size))
    f.write(a.tobytes())


def _unpack_array(f) -> np.ndarray:
    (n,) = struct.unpack("<I", f.read(4))
    return np.frombuffer(f.read(8 * n), dtype=np.float64).copy()


def pack_snapshot(f, snap: EnvSnapshot) -> None:
    _pack_array(f, snap.kernel_state)
    _pack_array(f, snap.kernel_params)
    cmd = snap.command
    mode_flag = 0 if cmd.mode is TaskMode.COMPLIANT else 1
    f.write(struct.pack("<B", mode_flag))
    f.write(struct.pack("<7d", cmd.vx, cmd.vy, cmd.wz, cmd.k, cmd.dx, cmd.dy, cmd.yaw_target))
    f.write(struct.pack("<B", 1 if snap.safe_refresh else 0))
    _pack_array(f, snap.safe_target_world)
    if snap.ccp_frozen is None:
        f.write(struct.pack("<B", 0))
    else:
        f.write(struct.pack("<B", 1))
        _pack_array(f, snap.ccp_frozen)
    _pack_array(f, snap.prev_action)
    _pack_array(f, snap.prev_joint_vel)
    _pack_array(f, snap.erfi_bias)
    f.write(struct.pack("<d", snap.erfi_amp))
    _pack_array(f, snap.joint_bias)
    f.write(struct.pack("<d", snap.curriculum))
    f.write(struct.pack("<q", snap.step_idx))
    f.write(struct.pack("<I", len(snap.schedule_events)))
    for e in snap.schedule_events:
        f.write(struct.pack("<8d", e.start, e.duration, *e.force, *e.torque))


def unpack_snapshot(f) -> EnvSnapshot:
    kernel_state = _unpack_array(f)
    kernel_params = _unpack_array(f)
    (mode_flag,) = struct.unpack("<B", f.read(1))
    vals = struct.unpack("<7d", f.read(56))
    if mode_flag == 0:
        cmd = Command(mode=TaskMode.COMPLIANT, vx=vals[0], vy=vals[1], wz=vals[2], k=vals[3])
    else:
        cmd = Command(mode=TaskMode.SAFE, dx=vals[4], dy=vals[5], yaw_target=vals[6])
    (refresh,) = struct.unpack("<B", f.read(1))
    safe_target = _unpack_array(f)
    (has_frozen,) = struct.unpack("<B", f.read(1))
    ccp_frozen = _unpack_array(f) if has_frozen else None
    prev_action = _unpack_array(f)
    prev_joint_vel = _unpack_array(f)
    erfi_bias = _unpack_array(f)
    (erfi_amp,) = struct.unpack("<d", f.read(8))
    joint_bias = _unpack_array(f)
    (curriculum,) = struct.unpack("<d", f.read(8))
    (step_idx,) = struct.unpack("<q", f.read(8))
    (n_events,) = struct.unpack("<I", f.read(4))
    events = []
    for _ in range(n_events):
        vals = struct.unpack("<8d", f.read(64))
        events.append(
            DisturbanceEvent(vals[0], vals[1], np.array(vals[2:5]), np.array(vals[5:8]))
        )
    return EnvSnapshot(
        kernel_state=kernel_state,
        kernel_params=kernel_params,
        command=cmd,
        safe_refresh=bool(refresh),
        safe_target_world=safe_target,
        ccp_frozen=ccp_frozen,
        prev_action=prev_action,
        prev_joint_vel=prev_joint_vel,
        erfi_bias=erfi_bias,
        erfi_amp=erfi_amp,
        joint_bias=joint_bias,
        curriculum=curriculum,
        step_idx=int(step_idx),
        schedule_events=events,
    )


# ------------------------------------------------------------ unsafe dataset


@dataclass
class UnsafeRecord:
    """One pre-failure instant: the deployed-format observation and the full
    snapshot needed to restart the simulator in exactly this state."""

    obs: np.ndarray            # stacked student observation, float32
    snapshot: EnvSnapshot
    episode_id: int
    steps_before_failure: int  # 0 = the failing step itself

    def __post_init__(self):
        if not (0 <= self.steps_before_failure <= 100):
            raise ValueError("steps_before_failure must lie in [0, 100]")


def save_unsafe_dataset(path, records: list[UnsafeRecord]) -> None:
    with open(path, "wb") as f:
        f.write(UNSAFE_MAGIC)
        f.write(struct.pack("<I", DATASET_VERSION))
        f.write(struct.pack("<I", len(records)))
        obs_dim = records[0].obs.size if records else 0
        f.write(struct.pack("<I", obs_dim))
        for r in records:
            if r.obs.size != obs_dim:
                raise ValueError("inconsistent observation dimension in dataset")
            f.write(struct.pack("<q", r.episode_id))
            f.write(struct.pack("<I", r.steps_before_failure))
            f.write(np.ascontiguousarray(r.obs, dtype=np.float32).tobytes())
            pack_snapshot(f, r.snapshot)


def load_unsafe_dataset(path) -> list[UnsafeRecord]:
    with open(path, "rb") as f:
        if f.read(8) != UNSAFE_MAGIC:
            raise ValueError(f"{path} is not an unsafe-state dataset")
        version, count, obs_dim = struct.unpack("<III", f.read(12))
        if version != DATASET_VERSION:
            raise ValueError(f"unsupported dataset version {version}")
        records = []
        for _ in range(count):
            (episode_id,) = struct.unpack("<q", f.read(8))
            (k,) = struct.unpack("<I", f.read(4))
            obs = np.frombuffer(f.read(4 * obs_dim), dtype=np.float32).copy()
            snap = unpack_snapshot(f)
            records.append(UnsafeRecord(obs, snap, int(episode_id), int(k)))
    return records


# ----------------------------------------------------------- recover dataset


@dataclass
class RecoverSample:
    obs: np.ndarray  # stacked student observation, float32
    label: int       # 1 iff the recovery rollout met the success predicate

    def __post_init__(self):
        if self.label not in (0, 1):
            raise ValueError("label must be 0 or 1")


def save_recover_dataset(path, samples: list[RecoverSample]) -> None:
    with open(path, "wb") as f:
        f.write(RECOVER_MAGIC)
        f.write(struct.pack("<I", DATASET_VERSION))
        f.write(struct.pack("<I", len(samples)))
        obs_dim = samples[0].obs.size if samples else 0
        f.write(struct.pack("<I", obs_dim))
        for s in samples:
            f.write(struct.pack("<B", s.label))
            f.write(np.ascontiguousarray(s.obs, dtype=np.float32).tobytes())


def load_recover_dataset(path) -> list[RecoverSample]:
    with open(path, "rb") as f:
        if f.read(8) != RECOVER_MAGIC:
            raise ValueError(f"{path} is not a recoverability dataset")
        version, count, obs_dim = struct.unpack("<III", f.read(12))
        if version != DATASET_VERSION:
            raise ValueError(f"unsupported dataset version {version}")
        out = []
        for _ in range(count):
            (label,) = struct.unpack("<B", f.read(1))
            obs = np.frombuffer(f.read(4 * obs_dim), dtype=np.float32).copy()
            out.append(RecoverSample(obs, int(label)))
    return out


def dataset_to_csv(records, path) -> None:
    """Flat CSV export for inspection (obs columns truncated to 16 entries)."""
    import csv

    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        if records and isinstance(records[0], UnsafeRecord):
            w.writerow(["episode_id", "steps_before_failure", "state_hash"]
                       + [f"obs_{i}" for i in range(16)])
            for r in records:
                w.writerow([r.episode_id, r.steps_before_failure, r.snapshot.state_hash()]
                           + [f"{v:.6g}" for v in r.obs[:16]])
        else:
            w.writerow(["label"] + [f"obs_{i}" for i in range(16)])
            for r in records:
                w.writerow([r.label] + [f"{v:.6g}" for v in r.obs[:16]])


# ----------------------------------------------------------------- manifests


def _git_describe() -> str:
    import subprocess

    try:
        out = subprocess.run(["git", "describe", "--always", "--dirty"],
                             capture_output=True, text=True, timeout=5)
        return out.stdout.strip() or "unknown"
    except Exception:
        return "unknown"


def write_manifest(run_dir, stage: str, config: dict, seed: int,
                   inputs: dict[str, str], outputs: list[str]) -> str:
    """Record a completed stage: config, seed, input hashes, output hashes."""
    manifest = {
        "stage": stage,
        "seed": seed,
        "config": config,
        "git_describe": _git_describe(),
        "inputs": inputs,
        "outputs": {
            os.path.basename(p): sha256_file(p) for p in outputs
        },
    }
    path = os.path.join(run_dir, "manifest.json")
    with open(path, "w") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
    return path


def verify_run_dir(run_dir) -> list[str]:
    """Re-hash every artifact a manifest mentions; return mismatch messages."""
    problems = []
    path = os.path.join(run_dir, "manifest.json")
    if not os.path.exists(path):
        return [f"no manifest.json in {run_dir}"]
    with open(path) as f:
        manifest = json.load(f)
    for name, expected in manifest.get("outputs", {}).items():
        p = os.path.join(run_dir, name)
        if not os.path.exists(p):
            problems.append(f"missing artifact: {name}")
        elif sha256_file(p) != expected:
            problems.append(f"hash mismatch: {name}")
    return problems
