"""Quantitative evaluation: velocity-tracking errors, compliance-level
traces, threshold/force success-rate sweeps, motor energy integrals, and the
compliance ablation harness.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numpy as np

from .core import NUM_JOINTS, OBS_X_DIM, Command, TaskMode
from .distill import HistoryStack
from .env import (
    DisturbanceEvent,
    DisturbanceSchedule,
    EnvConfig,
    QuadrupedEnv,
    obs_normalizer,
)
from .netlib import GaussianPolicy
from .recover import SwitchState
from .runtime import ControllerBundle, run_episode

HIP_IDX = [0, 3, 6, 9]
THIGH_IDX = [1, 4, 7, 10]
CALF_IDX = [2, 5, 8, 11]
FRONT_IDX = list(range(0, 6))
REAR_IDX = list(range(6, 12))


def tracking_error(v_xy: np.ndarray, v_star_xy: np.ndarray) -> tuple[float, float]:
    """Episode-average absolute velocity error per horizontal axis."""
    v = np.asarray(v_xy, dtype=np.float64)
    vs = np.asarray(v_star_xy, dtype=np.float64)
    if v.shape != vs.shape or v.ndim != 2 or v.shape[1] != 2 or v.shape[0] == 0:
        raise ValueError("need aligned non-empty (T, 2) velocity series")
    err = np.abs(v - vs)
    return float(err[:, 0].mean()), float(err[:, 1].mean())


def motor_energy(
    torque: np.ndarray, joint_vel: np.ndarray, dt: float
) -> dict[str, float | np.ndarray]:
    """Trapezoidal integral of tau * qdot per joint, grouped by joint type
    and by front/rear position. Additive over trajectory concatenation."""
    tau = np.atleast_2d(np.asarray(torque, dtype=np.float64))
    qd = np.atleast_2d(np.asarray(joint_vel, dtype=np.float64))
    if tau.shape != qd.shape or tau.shape[1] != NUM_JOINTS:
        raise ValueError("need aligned (T, 12) torque and velocity series")
    power = tau * qd
    if power.shape[0] < 2:
        per_joint = np.zeros(NUM_JOINTS)
    else:
        per_joint = np.trapezoid(power, dx=dt, axis=0)
    return {
        "per_joint": per_joint,
        "total": float(per_joint.sum()),
        "hip": float(per_joint[HIP_IDX].sum()),
        "thigh": float(per_joint[THIGH_IDX].sum()),
        "calf": float(per_joint[CALF_IDX].sum()),
        "front": float(per_joint[FRONT_IDX].sum()),
        "rear": float(per_joint[REAR_IDX].sum()),
    }


def wilson_interval(successes: int, n: int, z: float = 1.96) -> tuple[float, float]:
    """Binomial proportion confidence interval (Wilson score)."""
    if n == 0:
        return 0.0, 1.0
    p = successes / n
    denom = 1.0 + z * z / n
    center = (p + z * z / (2 * n)) / denom
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / denom
    return max(0.0, center - half), min(1.0, center + half)


# --------------------------------------------------------------- trace (k)


def _run_student_compliant(
    policy: GaussianPolicy,
    env_cfg: EnvConfig,
    cmd: Command,
    schedule: DisturbanceSchedule,
    seed: int,
    steps: int,
):
    """Roll the compliant student alone; returns per-step records."""
    env = QuadrupedEnv(env_cfg, seed=seed)
    env.reset(curriculum=0.0)
    env.schedule = schedule
    env.set_command(cmd)
    offset, scale = obs_normalizer(env_cfg)
    stack = HistoryStack(OBS_X_DIM)
    stacked = stack.reset((env.observe_x() - offset) * scale)
    rows = {"vx": [], "vy": [], "fy": [], "vstar_x": [], "vstar_y": [],
            "torque": [], "joint_vel": [], "failed": False}
    for _ in range(steps):
        action = policy.mean(stacked[None, :])[0]
        res = env.step(action)
        v = env.base_vel_body()
        vs = env.desired_velocity_now()
        rows["vx"].append(v[0])
        rows["vy"].append(v[1])
        rows["fy"].append(env.ext_force_body()[1])
        rows["vstar_x"].append(vs[0])
        rows["vstar_y"].append(vs[1])
        rows["torque"].append(res.state.joint_torque)
        rows["joint_vel"].append(res.state.joint_vel)
        if res.failed:
            rows["failed"] = True
            break
        if res.done:
            break
        stacked = stack.push((env.observe_x() - offset) * scale)
    return rows


def sinusoid_schedule(amplitude: float, omega: float, duration_s: float,
                      dt: float, axis: int = 1) -> DisturbanceSchedule:
    """Per-control-period piecewise-constant rendering of a sinusoid push."""
    events = []
    n = int(round(duration_s / dt))
    for t in range(n):
        force = np.zeros(3)
        force[axis] = amplitude * math.sin(omega * t * dt)
        events.append(DisturbanceEvent(t * dt, dt, force, np.zeros(3)))
    return DisturbanceSchedule(events)


def compliance_trace(
    policy: GaussianPolicy,
    env_cfg: EnvConfig,
    k_values: tuple[float, ...] = (0.0, 0.01, 0.02),
    seeds: tuple[int, ...] = (0, 1, 2, 3, 4),
    duration_s: float = 25.2,  # two full periods of sin(0.5 t)
    force_amp: float = 100.0,
    force_omega: float = 0.5,
    vx_cmd: float = 0.5,
) -> dict:
    """Lateral sinusoid push protocol: per-k time series and summary stats
    (mean |v_y|, corr(v_y, F_y)) averaged across seeds. Sensor noise follows
    the passed config, so distinct seeds yield genuinely distinct runs."""
    cfg = EnvConfig(**{**env_cfg.__dict__, "episode_s": duration_s})
    out = {"k_values": list(k_values), "per_k": {}}
    steps = int(duration_s / cfg.dt)
    for k in k_values:
        traces = []
        stats = []
        for seed in seeds:
            sched = sinusoid_schedule(force_amp, force_omega, duration_s, cfg.dt)
            rows = _run_student_compliant(
                policy, cfg, Command(mode=TaskMode.COMPLIANT, vx=vx_cmd, k=k),
                sched, seed, steps,
            )
            vy = np.array(rows["vy"])
            fy = np.array(rows["fy"])
            corr = float(np.corrcoef(vy, fy)[0, 1]) if len(vy) > 2 and vy.std() > 0 else 0.0
            stats.append({
                "mean_abs_vy": float(np.mean(np.abs(vy))),
                "corr_vy_fy": corr,
                "mean_vx": float(np.mean(rows["vx"])),
                "peak_vstar_y": float(np.max(np.abs(rows["vstar_y"]))),
                "failed": rows["failed"],
            })
            traces.append(rows)
        out["per_k"][k] = {
            "traces": traces,
            "mean_abs_vy": float(np.mean([s["mean_abs_vy"] for s in stats])),
            "corr_vy_fy": float(np.mean([s["corr_vy_fy"] for s in stats])),
            "mean_vx": float(np.mean([s["mean_vx"] for s in stats])),
            "peak_vstar_y": float(np.mean([s["peak_vstar_y"] for s in stats])),
        }
    return out


# ------------------------------------------------------------ epsilon sweep


def _sweep_episode(args):
    (bundle, env_cfg, eps, force_mag, seed) = args
    rng = np.random.Generator(np.random.PCG64(seed))
    angle = float(rng.uniform(-math.pi, math.pi))
    duration = float(rng.uniform(1.0, 2.0))
    start = float(rng.uniform(0.5, 1.0))
    force = np.array([force_mag * math.cos(angle), force_mag * math.sin(angle), 0.0])
    sched = DisturbanceSchedule([DisturbanceEvent(start, duration, force, np.zeros(3))])
    cmd = Command(
        mode=TaskMode.COMPLIANT,
        vx=float(rng.uniform(-1.0, 1.0)),
        vy=float(rng.uniform(-0.5, 0.5)),
        wz=0.0,
        k=float(rng.uniform(0.0, env_cfg.cmd_k_cap)),
    )
    sw = SwitchState(epsilon=eps, epsilon_back=min(eps + 0.05, 1.05))
    env = QuadrupedEnv(env_cfg, seed=seed)
    steps = int(round((start + duration + 3.0) / env_cfg.dt))
    log = run_episode(bundle, env, sched, cmd, switch=sw, max_steps=steps)
    return 0 if log.truncated_by_failure else 1


def epsilon_sweep(
    bundle: ControllerBundle,
    eps_grid: tuple[float, ...],
    force_grid: tuple[float, ...],
    episodes: int = 50,
    seed: int = 0,
    n_workers: int = 1,
) -> dict:
    """Success-rate surface over (threshold, push magnitude) cells; every
    episode applies one randomized-direction push lasting 1-2 s."""
    cells = {}
    jobs = []
    for ei, eps in enumerate(eps_grid):
        for fi, fmag in enumerate(force_grid):
            for e in range(episodes):
                # Same pushes across thresholds: the seed ignores epsilon.
                jobs.append(((ei, fi), (bundle, bundle.env_cfg, eps, fmag,
                                        seed * 7_000_003 + fi * 100_000 + e)))
    if n_workers > 1:
        import multiprocessing as mp

        with mp.get_context("fork").Pool(n_workers) as pool:
            results = pool.map(_sweep_episode, [j[1] for j in jobs])
    else:
        results = [_sweep_episode(j[1]) for j in jobs]
    for (key, _), res in zip(jobs, results):
        cells.setdefault(key, []).append(res)
    out = {"eps_grid": list(eps_grid), "force_grid": list(force_grid), "cells": {}}
    for (ei, fi), vals in cells.items():
        s, n = sum(vals), len(vals)
        lo, hi = wilson_interval(s, n)
        out["cells"][(eps_grid[ei], force_grid[fi])] = {
            "successes": s, "episodes": n, "rate": s / n, "ci_low": lo, "ci_high": hi,
        }
    return out


def sweep_to_csv(sweep: dict, path: str | None = None) -> str:
    buf = io.StringIO()
    w = csv.writer(buf)
    w.writerow(["epsilon", "force_n", "episodes", "successes", "success_rate",
                "ci_low", "ci_high"])
    for eps in sweep["eps_grid"]:
        for f in sweep["force_grid"]:
            c = sweep["cells"][(eps, f)]
            w.writerow([eps, f, c["episodes"], c["successes"],
                        f"{c['rate']:.4f}", f"{c['ci_low']:.4f}", f"{c['ci_high']:.4f}"])
    text = buf.getvalue()
    if path:
        with open(path, "w", newline="") as fh:
            fh.write(text)
    return text


# -------------------------------------------------------------- ablation


def _ablation_episode(args):
    (policy, env_cfg, band, seed, k_range) = args
    rng = np.random.Generator(np.random.PCG64(seed))
    fmag = float(rng.uniform(band[0], band[1]))
    angle = float(rng.uniform(-math.pi, math.pi))
    duration = float(rng.uniform(env_cfg.impact_min_s, env_cfg.impact_max_s))
    start = float(rng.uniform(0.5, 1.5))
    sched = DisturbanceSchedule([
        DisturbanceEvent(start, duration,
                         np.array([fmag * math.cos(angle), fmag * math.sin(angle), 0.0]),
                         np.zeros(3))
    ])
    cmd = Command(
        mode=TaskMode.COMPLIANT,
        vx=float(rng.uniform(-1.5, 1.5)),
        vy=float(rng.uniform(-1.0, 1.0)),
        wz=float(rng.uniform(-0.5, 0.5)),
        k=float(rng.uniform(k_range[0], k_range[1])),
    )
    steps = int(round((start + duration + 2.0) / env_cfg.dt))
    rows = _run_student_compliant(policy, env_cfg, cmd, sched, seed, steps)
    v = np.stack([rows["vx"], rows["vy"]], axis=1)
    vs = np.stack([rows["vstar_x"], rows["vstar_y"]], axis=1)
    ex, ey = tracking_error(v, vs)
    return ex, ey, 1 if rows["failed"] else 0


FORCE_BANDS = ((0.0, 200.0), (200.0, 400.0), (400.0, 600.0))


def ablation_harness(
    variants: dict[str, GaussianPolicy | None],
    env_cfg: EnvConfig,
    bands: tuple[tuple[float, float], ...] = FORCE_BANDS,
    episodes: int = 40,
    seed: int = 0,
    batches: int = 4,
    n_workers: int = 1,
) -> dict:
    """Tracking error and failure rate per variant per force band.

    Velocity error is always measured against the admittance target computed
    with the episode's sampled gain, so a variant trained with zero gain pays
    for ignoring the push. Missing variants produce gap rows.
    """
    results = {}
    for name, policy in variants.items():
        if policy is None:
            results[name] = {band: None for band in bands}
            continue
        per_band = {}
        for bi, band in enumerate(bands):
            jobs = [
                (policy, env_cfg, band, seed * 3_000_017 + bi * 50_000 + e, (0.0, env_cfg.cmd_k_cap))
                for e in range(episodes)
            ]
            if n_workers > 1:
                import multiprocessing as mp

                with mp.get_context("fork").Pool(n_workers) as pool:
                    rows = pool.map(_ablation_episode, jobs)
            else:
                rows = [_ablation_episode(j) for j in jobs]
            exs = np.array([r[0] for r in rows])
            eys = np.array([r[1] for r in rows])
            fails = np.array([r[2] for r in rows], dtype=np.float64)
            # Mean +- std across episode batches, matching batched reporting.
            bsz = max(1, episodes // batches)
            bex = [exs[i : i + bsz].mean() for i in range(0, episodes, bsz)]
            bey = [eys[i : i + bsz].mean() for i in range(0, episodes, bsz)]
            bfr = [100.0 * fails[i : i + bsz].mean() for i in range(0, episodes, bsz)]
            per_band[band] = {
                "e_x": float(np.mean(bex)), "e_x_std": float(np.std(bex)),
                "e_y": float(np.mean(bey)), "e_y_std": float(np.std(bey)),
                "failure_pct": float(np.mean(bfr)), "failure_pct_std": float(np.std(bfr)),
                "episodes": episodes,
            }
        results[name] = per_band
    return {"bands": list(bands), "variants": results}


def ablation_to_csv(report: dict, path: str | None = None) -> str:
    buf = io.StringIO()
    w = csv.writer(buf)
    w.writerow(["variant", "band_low_n", "band_high_n", "e_x", "e_x_std",
                "e_y", "e_y_std", "failure_pct", "failure_pct_std", "episodes"])
    for name, per_band in report["variants"].items():
        for band in report["bands"]:
            cell = per_band.get(tuple(band)) or per_band.get(band)
            if cell is None:
                w.writerow([name, band[0], band[1], "", "", "", "", "", "", "missing"])
            else:
                w.writerow([name, band[0], band[1],
                            f"{cell['e_x']:.4f}", f"{cell['e_x_std']:.4f}",
                            f"{cell['e_y']:.4f}", f"{cell['e_y_std']:.4f}",
                            f"{cell['failure_pct']:.2f}", f"{cell['failure_pct_std']:.2f}",
                            cell["episodes"]])
    text = buf.getvalue()
    if path:
        with open(path, "w", newline="") as fh:
            fh.write(text)
    return text


# ----------------------------------------------------------------- plotting


def svg_line_plot(series: dict[str, tuple[np.ndarray, np.ndarray]],
                  title: str, xlabel: str, ylabel: str,
                  width: int = 640, height: int = 400) -> str:
    """Self-contained SVG line plot; one polyline per named series."""
    pad = 60
    xs_all = np.concatenate([np.asarray(x, dtype=float) for x, _ in series.values()])
    ys_all = np.concatenate([np.asarray(y, dtype=float) for _, y in series.values()])
    x0, x1 = float(xs_all.min()), float(xs_all.max())
    y0, y1 = float(ys_all.min()), float(ys_all.max())
    if x1 == x0:
        x1 = x0 + 1.0
    if y1 == y0:
        y1 = y0 + 1.0
    colors = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"]

    def sx(x):
        return pad + (x - x0) / (x1 - x0) * (width - 2 * pad)

    def sy(y):
        return height - pad - (y - y0) / (y1 - y0) * (height - 2 * pad)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{width/2}" y="20" text-anchor="middle" font-size="14">{title}</text>',
        f'<text x="{width/2}" y="{height-10}" text-anchor="middle" font-size="12">{xlabel}</text>',
        f'<text x="15" y="{height/2}" text-anchor="middle" font-size="12" '
        f'transform="rotate(-90 15 {height/2})">{ylabel}</text>',
        f'<line x1="{pad}" y1="{height-pad}" x2="{width-pad}" y2="{height-pad}" stroke="black"/>',
        f'<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{height-pad}" stroke="black"/>',
    ]
    for i in range(5):
        xv = x0 + (x1 - x0) * i / 4
        yv = y0 + (y1 - y0) * i / 4
        parts.append(f'<text x="{sx(xv):.1f}" y="{height-pad+16}" text-anchor="middle" '
                     f'font-size="10">{xv:.2f}</text>')
        parts.append(f'<text x="{pad-6}" y="{sy(yv):.1f}" text-anchor="end" '
                     f'font-size="10">{yv:.2f}</text>')
    for i, (name, (x, y)) in enumerate(series.items()):
        pts = " ".join(f"{sx(float(a)):.1f},{sy(float(b)):.1f}" for a, b in zip(x, y))
        color = colors[i % len(colors)]
        parts.append(f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1.5"/>')
        parts.append(f'<text x="{width-pad+4}" y="{pad + 14*i}" font-size="11" '
                     f'fill="{color}">{name}</text>')
    parts.append("</svg>")
    return "\n".join(parts)


def svg_heatmap(matrix: np.ndarray, row_labels, col_labels, title: str,
                width: int = 640, height: int = 420) -> str:
    """Self-contained SVG heatmap with per-cell value annotations."""
    m = np.asarray(matrix, dtype=float)
    rows, cols = m.shape
    pad = 70
    cw = (width - 2 * pad) / cols
    ch = (height - 2 * pad) / rows
    lo, hi = float(np.nanmin(m)), float(np.nanmax(m))
    rng = hi - lo if hi > lo else 1.0
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{width/2}" y="22" text-anchor="middle" font-size="14">{title}</text>',
    ]
    for r in range(rows):
        for c in range(cols):
            v = m[r, c]
            t = 0.0 if math.isnan(v) else (v - lo) / rng
            red = int(255 * (1 - t))
            green = int(255 * t)
            x = pad + c * cw
            y = pad + r * ch
            parts.append(f'<rect x="{x:.1f}" y="{y:.1f}" width="{cw:.1f}" height="{ch:.1f}" '
                         f'fill="rgb({red},{green},120)" stroke="white"/>')
            label = "-" if math.isnan(v) else f"{v:.2f}"
            parts.append(f'<text x="{x+cw/2:.1f}" y="{y+ch/2+4:.1f}" text-anchor="middle" '
                         f'font-size="11">{label}</text>')
    for r, lbl in enumerate(row_labels):
        parts.append(f'<text x="{pad-8}" y="{pad + r*ch + ch/2 + 4:.1f}" text-anchor="end" '
                     f'font-size="11">{lbl}</text>')
    for c, lbl in enumerate(col_labels):
        parts.append(f'<text x="{pad + c*cw + cw/2:.1f}" y="{pad-8}" text-anchor="middle" '
                     f'font-size="11">{lbl}</text>')
    parts.append("</svg>")
    return "\n".join(parts)
