"""Compare the compiled physics kernel against the pure-Python reference.

Usage:
    python benchmarks/bench_kernel.py [--steps N]

Reports wall-clock per control step for both backends, the speedup, and
verifies the two produce bit-identical trajectories on the benchmark run.
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from saclo._kernel.reference import kernel_step as py_step
from saclo.env import EnvConfig, QuadrupedEnv

try:
    from saclo._kernel._fast import kernel_step as fast_step
except ImportError:
    fast_step = None


def bench(step_fn, state, params, inputs, dt, substeps):
    s = state.copy()
    t0 = time.perf_counter()
    for qt, erfi, wrench in inputs:
        step_fn(s, params, qt, erfi, wrench, True, dt, substeps)
    return time.perf_counter() - t0, s


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--steps", type=int, default=20000)
    args = ap.parse_args()

    cfg = EnvConfig(noise_enabled=False)
    env = QuadrupedEnv(cfg, seed=0)
    env.reset(curriculum=1.0)
    state = env.kernel_state.copy()
    params = env.kernel_params.copy()

    rng = np.random.default_rng(0)
    inputs = [
        (cfg.stand_pose + rng.uniform(-0.4, 0.4, 12),
         rng.uniform(-0.8, 0.8, 12),
         np.concatenate([rng.uniform(-300, 300, 2), rng.uniform(-50, 50, 4)]))
        for _ in range(args.steps)
    ]

    t_py, s_py = bench(py_step, state, params, inputs, cfg.dt, cfg.substeps)
    print(f"pure python : {t_py / args.steps * 1e6:8.2f} us/step "
          f"({args.steps / t_py:,.0f} steps/s)")

    if fast_step is None:
        print("compiled    : not built (python setup.py build_ext --inplace)")
        return

    t_cy, s_cy = bench(fast_step, state, params, inputs, cfg.dt, cfg.substeps)
    print(f"compiled    : {t_cy / args.steps * 1e6:8.2f} us/step "
          f"({args.steps / t_cy:,.0f} steps/s)")
    print(f"speedup     : {t_py / t_cy:8.1f}x")
    identical = np.array_equal(s_py, s_cy)
    print(f"bit-identical trajectories: {identical}")
    if not identical:
        raise SystemExit(1)


if __name__ == "__main__":
    main()
