import numpy as np
import pytest

from saclo.artifacts import (
    RecoverSample,
    UnsafeRecord,
    load_policy,
    load_recover_dataset,
    load_unsafe_dataset,
    load_value_net,
    save_policy,
    save_recover_dataset,
    save_unsafe_dataset,
    save_value_net,
    sha256_file,
    verify_run_dir,
    write_manifest,
)
from saclo.env import EnvConfig, QuadrupedEnv, sample_disturbance
from saclo.netlib import GaussianPolicy, MlpSpec, init_params


def _snapshot(seed=0, steps=25):
    env = QuadrupedEnv(EnvConfig(noise_enabled=False), seed=seed)
    env.reset(curriculum=1.0)
    env.schedule = sample_disturbance(env.rng_reset, 1.0, env.cfg)
    for _ in range(steps):
        env.step(np.zeros(12))
    return env.snapshot()


def test_policy_checkpoint_roundtrip(tmp_path):
    pol = GaussianPolicy(MlpSpec((10, 16, 12), seed=2))
    p = tmp_path / "p.ckpt"
    save_policy(p, pol, {"task": "compliant", "phase": "teacher"})
    pol2, extras = load_policy(p)
    np.testing.assert_array_equal(pol2.params, pol.params)
    assert pol2.spec == pol.spec
    assert extras["task"] == "compliant"


def test_value_net_kind_check(tmp_path):
    spec = MlpSpec((5, 8, 1), output_act="sigmoid", seed=0)
    p = tmp_path / "v.ckpt"
    save_value_net(p, spec, init_params(spec), {"kind": "recover_net"})
    spec2, params2, _ = load_value_net(p, expect_kind="recover_net")
    assert spec2 == spec
    with pytest.raises(ValueError):
        load_value_net(p, expect_kind="value_net")


def test_policy_loader_rejects_value_net(tmp_path):
    spec = MlpSpec((5, 8, 1), seed=0)
    p = tmp_path / "v.ckpt"
    save_value_net(p, spec, init_params(spec), {})
    with pytest.raises(ValueError):
        load_policy(p)


def test_unsafe_dataset_roundtrip_bit_identical_restart(tmp_path):
    snaps = [_snapshot(seed=s) for s in (1, 2)]
    records = [
        UnsafeRecord(obs=np.arange(40, dtype=np.float32) + i,
                     snapshot=s, episode_id=i, steps_before_failure=i * 3)
        for i, s in enumerate(snaps)
    ]
    path = tmp_path / "unsafe.ds"
    save_unsafe_dataset(path, records)
    loaded = load_unsafe_dataset(path)
    assert len(loaded) == 2
    for orig, back in zip(records, loaded):
        np.testing.assert_array_equal(orig.obs, back.obs)
        assert orig.snapshot.state_hash() == back.snapshot.state_hash()
        assert orig.episode_id == back.episode_id
        assert orig.steps_before_failure == back.steps_before_failure
        # restart from the reloaded snapshot reproduces the state exactly
        env = QuadrupedEnv(EnvConfig(noise_enabled=False), seed=77)
        env.reset(init=back.snapshot)
        assert env.snapshot().state_hash() == orig.snapshot.state_hash()
    # rewrite is byte-identical
    path2 = tmp_path / "unsafe2.ds"
    save_unsafe_dataset(path2, records)
    assert path.read_bytes() == path2.read_bytes()


def test_unsafe_record_window_bounds():
    with pytest.raises(ValueError):
        UnsafeRecord(np.zeros(4, dtype=np.float32), _snapshot(), 0, 101)


def test_recover_dataset_roundtrip(tmp_path):
    samples = [RecoverSample(obs=np.random.default_rng(i).normal(size=20).astype(np.float32),
                             label=i % 2) for i in range(7)]
    path = tmp_path / "rec.ds"
    save_recover_dataset(path, samples)
    loaded = load_recover_dataset(path)
    assert [s.label for s in loaded] == [s.label for s in samples]
    for a, b in zip(samples, loaded):
        np.testing.assert_array_equal(a.obs, b.obs)
    with pytest.raises(ValueError):
        RecoverSample(np.zeros(3, dtype=np.float32), 2)


def test_dataset_magic_rejection(tmp_path):
    p = tmp_path / "x.ds"
    p.write_bytes(b"WRONGMAG" + b"\x00" * 12)
    with pytest.raises(ValueError):
        load_unsafe_dataset(p)
    with pytest.raises(ValueError):
        load_recover_dataset(p)


def test_manifest_verify_detects_tampering(tmp_path):
    run = tmp_path / "run-000"
    run.mkdir()
    artifact = run / "model.bin"
    artifact.write_bytes(b"hello artifacts")
    write_manifest(str(run), "stage-x", {"a": 1}, seed=3,
                   inputs={}, outputs=[str(artifact)])
    assert verify_run_dir(str(run)) == []
    artifact.write_bytes(b"tampered!")
    problems = verify_run_dir(str(run))
    assert problems and "hash mismatch" in problems[0]
    artifact.unlink()
    problems = verify_run_dir(str(run))
    assert problems and "missing artifact" in problems[0]


def test_sha256_file(tmp_path):
    p = tmp_path / "f"
    p.write_bytes(b"abc")
    assert sha256_file(p) == (
        "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad")
