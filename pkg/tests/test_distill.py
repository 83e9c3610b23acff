import math

import numpy as np
import pytest

from saclo.core import HISTORY_LEN
from saclo.distill import (
    DistillConfig,
    HistoryStack,
    alignment_rewards,
    distillation_loss,
    total_loss,
)


def test_stack_prefill_on_reset():
    st = HistoryStack(3, length=20)
    x0 = np.array([1.0, 2.0, 3.0])
    out = st.reset(x0)
    assert out.shape == (60,)
    np.testing.assert_array_equal(out.reshape(20, 3), np.tile(x0, (20, 1)))


def test_stack_eviction_after_full_cycle():
    st = HistoryStack(1, length=20)
    st.reset(np.array([0.0]))
    for i in range(1, 22):
        out = st.push(np.array([float(i)]))
    # vector "1" pushed 21 steps ago is gone; newest is 21
    assert 1.0 not in out
    assert out[-1] == 21.0
    np.testing.assert_array_equal(out, np.arange(2.0, 22.0))


def test_stack_emission_length_and_order():
    st = HistoryStack(4)
    st.reset(np.zeros(4))
    st.push(np.ones(4))
    out = st.emit()
    assert out.shape == (HISTORY_LEN * 4,)
    np.testing.assert_array_equal(out[:4], 0.0)   # oldest first
    np.testing.assert_array_equal(out[-4:], 1.0)  # newest last


def test_stack_sliding_window_no_duplication():
    st = HistoryStack(1, length=5)
    st.reset(np.array([7.0]))
    st.push(np.array([8.0]))
    st.push(np.array([8.0]))
    out = st.emit()
    np.testing.assert_array_equal(out, [7.0, 7.0, 7.0, 8.0, 8.0])


def test_stack_load_roundtrip():
    st = HistoryStack(2, length=4)
    st.reset(np.array([1.0, 2.0]))
    st.push(np.array([3.0, 4.0]))
    flat = st.emit()
    st2 = HistoryStack(2, length=4)
    np.testing.assert_array_equal(st2.load(flat), flat)


def test_stack_dim_mismatch():
    st = HistoryStack(3)
    st.reset(np.zeros(3))
    with pytest.raises(ValueError):
        st.push(np.zeros(4))


# -------------------------------------------------------------------- losses


def test_distillation_loss_zero_at_match():
    a = np.ones((5, 12))
    assert distillation_loss(a, a) == 0.0


def test_distillation_loss_unit_offset():
    a = np.zeros(12)
    b = np.zeros(12)
    b[3] = 1.0
    assert distillation_loss(a, b) == pytest.approx(1.0)


def test_distillation_loss_batch_mean():
    t = np.zeros((2, 12))
    s = np.zeros((2, 12))
    s[1, 0] = math.sqrt(2.0)  # losses 0 and 2 -> mean 1
    assert distillation_loss(t, s) == pytest.approx(1.0)


def test_distillation_loss_shape_mismatch():
    with pytest.raises(ValueError):
        distillation_loss(np.zeros(12), np.zeros(11))


def test_total_loss_arithmetic():
    assert total_loss(2.0, 3.0, 0.5, 1.0) == pytest.approx(4.0)
    assert total_loss(5.0, 7.0, 1.0, 0.0) == 5.0   # pure cloning
    assert total_loss(5.0, 7.0, 0.0, 1.0) == 7.0   # pure RL
    with pytest.raises(ValueError):
        total_loss(1.0, 1.0, -0.1, 1.0)


def test_alignment_rewards_exact_match():
    a = np.ones(12)
    r_act, r_dir = alignment_rewards(a, a)
    assert r_act == pytest.approx(1.0)
    assert r_dir == pytest.approx(math.e)


def test_alignment_rewards_opposite():
    a = np.ones(12)
    _, r_dir = alignment_rewards(a, -a)
    assert r_dir == pytest.approx(math.exp(-1.0))


def test_alignment_rewards_half_norm():
    a = np.zeros(12)
    b = np.zeros(12)
    b[0] = math.sqrt(0.5)
    r_act, _ = alignment_rewards(a, b)
    assert r_act == pytest.approx(math.exp(-1.0))


def test_alignment_rewards_degenerate_zero():
    r_act, r_dir = alignment_rewards(np.zeros(12), np.zeros(12))
    assert r_act == pytest.approx(1.0)
    assert r_dir == pytest.approx(1.0)  # neutral exp(0)


def test_alignment_reward_ranges():
    rng = np.random.default_rng(0)
    for _ in range(200):
        a, b = rng.normal(size=12), rng.normal(size=12)
        r_act, r_dir = alignment_rewards(a, b)
        assert 0.0 < r_act <= 1.0
        assert math.exp(-1.0) - 1e-12 <= r_dir <= math.e + 1e-12


def test_distill_config_schedules():
    cfg = DistillConfig(alpha=1.0, beta=0.5, align_decay_frac=0.5)
    assert cfg.alpha_at(0.0) == 1.0
    assert cfg.alpha_at(0.5) == 0.5
    assert cfg.alpha_at(1.0) == 0.0
    assert cfg.align_scale_at(0.0) == 1.0
    assert cfg.align_scale_at(0.5) == 0.0
    assert cfg.align_scale_at(0.9) == 0.0
    with pytest.raises(ValueError):
        DistillConfig(alpha=0.0, beta=0.0)
