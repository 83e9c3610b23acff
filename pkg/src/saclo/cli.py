"""Pipeline entry point: stage subcommands, run-stamped artifact directories
with manifests, controller rollout driving, and evaluation sweeps.

Exit codes: 0 success, 1 invalid configuration/usage, 2 missing upstream
artifact.
"""
from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import artifacts as art
from .configfile import ConfigError, dump_all, load_configs
from .core import Command, TaskMode
from .distill import DistillConfig
from .env import DisturbanceSchedule, EnvConfig
from .evaluate import (
    ablation_harness,
    ablation_to_csv,
    compliance_trace,
    epsilon_sweep,
    motor_energy,
    svg_heatmap,
    svg_line_plot,
    sweep_to_csv,
)
from .ppo import PpoConfig, distill_student, train_safe_two_stage, train_teacher
from .recover import SwitchState, harvest_unsafe, label_recoverability, train_recover_net
from .runtime import ControllerBundle, run_episode

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_MISSING = 2

STAGES = [
    "train-comply", "distill-comply", "harvest-unsafe", "train-safe",
    "distill-safe", "label-recover", "train-recover", "bundle", "run",
    "eval", "plot", "verify",
]


def _out_root(args) -> str:
    return args.out_root or os.environ.get("SACLO_OUT_ROOT", "runs")


def _workers(args) -> int:
    if getattr(args, "workers", None):
        return args.workers
    return int(os.environ.get("SACLO_WORKERS", "1"))


def _new_run_dir(root: str, stage: str, seed: int) -> str:
    os.makedirs(root, exist_ok=True)
    n = 0
    while True:
        path = os.path.join(root, f"{stage}-seed{seed}-{n:03d}")
        if not os.path.exists(path):
            os.makedirs(path)
            return path
        n += 1


def _require(path: str | None, what: str) -> str:
    if not path or not os.path.exists(path):
        print(f"error: missing upstream artifact: {what}: {path}", file=sys.stderr)
        sys.exit(EXIT_MISSING)
    return path


def _load_cfg(args):
    try:
        if args.config:
            if not os.path.exists(args.config):
                print(f"error: config file not found: {args.config}", file=sys.stderr)
                sys.exit(EXIT_CONFIG)
            return load_configs(args.config)
        return {"env": EnvConfig(), "ppo": PpoConfig(), "distill": DistillConfig()}
    except ConfigError as exc:
        print(f"error: invalid config: {exc}", file=sys.stderr)
        sys.exit(EXIT_CONFIG)


def _with_seed(ppo: PpoConfig, seed: int) -> PpoConfig:
    import dataclasses

    return dataclasses.replace(ppo, seed=seed)


def _finish_stage(run_dir, stage, configs, seed, inputs, outputs):
    cfg_path = os.path.join(run_dir, "config_used.cfg")
    with open(cfg_path, "w") as f:
        f.write(dump_all({k: v for k, v in configs.items()}))
    art.write_manifest(
        run_dir, stage, {"config_file": os.path.basename(cfg_path)}, seed,
        inputs={k: art.sha256_file(v) for k, v in inputs.items()},
        outputs=outputs + [cfg_path],
    )
    print(f"{stage}: artifacts in {run_dir}")
    for p in outputs:
        print(f"  {os.path.basename(p)}  sha256={art.sha256_file(p)[:16]}...")


# ------------------------------------------------------------------- stages


def cmd_train_comply(args) -> int:
    cfgs = _load_cfg(args)
    run_dir = _new_run_dir(_out_root(args), "train-comply", args.seed)
    ppo = _with_seed(cfgs["ppo"], args.seed)
    tele = os.path.join(run_dir, "telemetry.csv")
    result = train_teacher(cfgs["env"], ppo, TaskMode.COMPLIANT,
                           telemetry_path=tele, zero_k=args.zero_k,
                           checkpoint_dir=os.path.join(run_dir, "checkpoints"))
    ckpt = os.path.join(run_dir, "teacher_comply.ckpt")
    art.save_policy(ckpt, result.policy,
                    {"task": "compliant", "phase": "teacher", "zero_k": args.zero_k})
    critic = os.path.join(run_dir, "teacher_comply_critic.ckpt")
    art.save_value_net(critic, result.critic_spec, result.critic_params,
                       {"kind": "value_net", "role": "critic"})
    _finish_stage(run_dir, "train-comply", cfgs, args.seed, {}, [ckpt, critic, tele])
    return EXIT_OK


def cmd_distill_comply(args) -> int:
    cfgs = _load_cfg(args)
    teacher_path = _require(args.teacher, "teacher checkpoint (--teacher)")
    teacher, meta = art.load_policy(teacher_path)
    run_dir = _new_run_dir(_out_root(args), "distill-comply", args.seed)
    ppo = _with_seed(cfgs["ppo"], args.seed)
    tele = os.path.join(run_dir, "telemetry.csv")
    result = distill_student(cfgs["env"], ppo, TaskMode.COMPLIANT, teacher,
                             distill_cfg=cfgs["distill"], telemetry_path=tele,
                             zero_k=args.zero_k or bool(meta.get("zero_k")))
    ckpt = os.path.join(run_dir, "comply_student.ckpt")
    art.save_policy(ckpt, result.policy,
                    {"task": "compliant", "phase": "student",
                     "history_len": 20, "x_dim": result.policy.spec.in_dim // 20})
    _finish_stage(run_dir, "distill-comply", cfgs, args.seed,
                  {"teacher": teacher_path}, [ckpt, tele])
    return EXIT_OK


def cmd_harvest_unsafe(args) -> int:
    cfgs = _load_cfg(args)
    policy_path = _require(args.policy, "compliant student checkpoint (--policy)")
    policy, _ = art.load_policy(policy_path)
    run_dir = _new_run_dir(_out_root(args), "harvest-unsafe", args.seed)
    records, stats = harvest_unsafe(
        policy, cfgs["env"], episodes=args.episodes, seed=args.seed,
        force_cap=args.force_cap,
    )
    ds = os.path.join(run_dir, "unsafe.ds")
    art.save_unsafe_dataset(ds, records)
    stats_path = os.path.join(run_dir, "harvest_stats.json")
    with open(stats_path, "w") as f:
        json.dump(stats, f, indent=2, sort_keys=True)
    if args.csv:
        art.dataset_to_csv(records, os.path.join(run_dir, "unsafe_preview.csv"))
    _finish_stage(run_dir, "harvest-unsafe", cfgs, args.seed,
                  {"policy": policy_path}, [ds, stats_path])
    print(f"  failures={stats['failures']} records={stats['records']}")
    return EXIT_OK


def cmd_train_safe(args) -> int:
    cfgs = _load_cfg(args)
    snapshots = []
    inputs = {}
    if args.unsafe:
        _require(args.unsafe, "unsafe dataset (--unsafe)")
        records = art.load_unsafe_dataset(args.unsafe)
        snapshots = [(r.snapshot, r.obs) for r in records]
        inputs["unsafe"] = args.unsafe
    run_dir = _new_run_dir(_out_root(args), "train-safe", args.seed)
    ppo = _with_seed(cfgs["ppo"], args.seed)
    tele = os.path.join(run_dir, "telemetry.csv")
    stage1_path = os.path.join(run_dir, "teacher_safe_stage1.ckpt")

    def save_stage1(result):
        art.save_policy(stage1_path, result.policy,
                        {"task": "safe", "phase": "teacher", "stage": 1})

    art1, art2 = train_safe_two_stage(
        cfgs["env"], ppo, _with_seed(cfgs["ppo"], args.seed + 1),
        unsafe_snapshots=snapshots, telemetry_path=tele, stage1_ckpt_cb=save_stage1,
    )
    ckpt = os.path.join(run_dir, "teacher_safe.ckpt")
    art.save_policy(ckpt, art2.policy, {"task": "safe", "phase": "teacher", "stage": 2})
    _finish_stage(run_dir, "train-safe", cfgs, args.seed, inputs,
                  [stage1_path, ckpt, tele])
    return EXIT_OK


def cmd_distill_safe(args) -> int:
    cfgs = _load_cfg(args)
    teacher_path = _require(args.teacher, "safe teacher checkpoint (--teacher)")
    teacher, _ = art.load_policy(teacher_path)
    snapshots = []
    inputs = {"teacher": teacher_path}
    if args.unsafe:
        _require(args.unsafe, "unsafe dataset (--unsafe)")
        snapshots = [(r.snapshot, r.obs)
                     for r in art.load_unsafe_dataset(args.unsafe)]
        inputs["unsafe"] = args.unsafe
    run_dir = _new_run_dir(_out_root(args), "distill-safe", args.seed)
    ppo = _with_seed(cfgs["ppo"], args.seed)
    tele = os.path.join(run_dir, "telemetry.csv")
    result = distill_student(cfgs["env"], ppo, TaskMode.SAFE, teacher,
                             distill_cfg=cfgs["distill"], safe_stage=2,
                             unsafe_snapshots=snapshots, telemetry_path=tele)
    ckpt = os.path.join(run_dir, "safe_student.ckpt")
    art.save_policy(ckpt, result.policy,
                    {"task": "safe", "phase": "student",
                     "history_len": 20, "x_dim": result.policy.spec.in_dim // 20})
    _finish_stage(run_dir, "distill-safe", cfgs, args.seed, inputs, [ckpt, tele])
    return EXIT_OK


def cmd_label_recover(args) -> int:
    cfgs = _load_cfg(args)
    policy_path = _require(args.policy, "safe student checkpoint (--policy)")
    unsafe_path = _require(args.unsafe, "unsafe dataset (--unsafe)")
    policy, _ = art.load_policy(policy_path)
    records = art.load_unsafe_dataset(unsafe_path)
    run_dir = _new_run_dir(_out_root(args), "label-recover", args.seed)
    samples, stats = label_recoverability(
        policy, cfgs["env"], records, seed=args.seed, max_records=args.max_records,
    )
    ds = os.path.join(run_dir, "recover.ds")
    art.save_recover_dataset(ds, samples)
    stats_path = os.path.join(run_dir, "label_stats.json")
    with open(stats_path, "w") as f:
        json.dump(stats, f, indent=2, sort_keys=True)
    _finish_stage(run_dir, "label-recover", cfgs, args.seed,
                  {"policy": policy_path, "unsafe": unsafe_path}, [ds, stats_path])
    print(f"  labeled={stats['labeled']} positive_rate={stats['positive_rate']:.3f}")
    return EXIT_OK


def cmd_train_recover(args) -> int:
    cfgs = _load_cfg(args)
    ds_path = _require(args.dataset, "recoverability dataset (--dataset)")
    samples = art.load_recover_dataset(ds_path)
    run_dir = _new_run_dir(_out_root(args), "train-recover", args.seed)
    spec, params, report = train_recover_net(
        samples, hidden=tuple(args.hidden), seed=args.seed, epochs=args.epochs,
    )
    ckpt = os.path.join(run_dir, "recover_net.ckpt")
    art.save_value_net(ckpt, spec, params, {"kind": "recover_net"})
    report_path = os.path.join(run_dir, "fit_report.json")
    with open(report_path, "w") as f:
        json.dump({
            "train_size": report.train_size, "val_size": report.val_size,
            "accuracy": report.accuracy, "auc": report.auc,
            "final_loss": report.final_loss, "calibration": report.calibration,
        }, f, indent=2, sort_keys=True)
    _finish_stage(run_dir, "train-recover", cfgs, args.seed,
                  {"dataset": ds_path}, [ckpt, report_path])
    print(f"  val accuracy={report.accuracy:.3f} auc={report.auc:.3f}")
    return EXIT_OK


def cmd_bundle(args) -> int:
    cfgs = _load_cfg(args)
    comply, _ = art.load_policy(_require(args.comply, "compliant student (--comply)"))
    safe, _ = art.load_policy(_require(args.safe, "safe student (--safe)"))
    spec, params, _ = art.load_value_net(
        _require(args.recover, "recover net (--recover)"), expect_kind="recover_net")
    bundle = ControllerBundle(comply, safe, spec, params, cfgs["env"])
    paths = bundle.save(args.out)
    print(f"bundle written to {args.out}")
    for p in paths:
        print(f"  {os.path.basename(p)}  sha256={art.sha256_file(p)[:16]}...")
    return EXIT_OK


def cmd_run(args) -> int:
    cfgs = _load_cfg(args)
    bundle_dir = _require(args.bundle, "controller bundle directory (--bundle)")
    back = args.epsilon_back if args.epsilon_back is not None else min(args.epsilon + 0.05, 1.05)
    sw = SwitchState(epsilon=args.epsilon, epsilon_back=back)
    bundle = ControllerBundle.load(bundle_dir, cfgs["env"], sw)
    if args.schedule:
        with open(_require(args.schedule, "disturbance schedule (--schedule)")) as f:
            schedule = DisturbanceSchedule.from_csv(f.read())
    else:
        schedule = DisturbanceSchedule([])
    from .env import QuadrupedEnv

    env = QuadrupedEnv(cfgs["env"], seed=args.seed)
    cmd = Command(mode=TaskMode.COMPLIANT, vx=args.vx, vy=args.vy, wz=args.wz, k=args.k)
    log = run_episode(bundle, env, schedule, cmd, switch=sw, max_steps=args.steps)
    log.to_csv(args.out)
    switches = int(np.sum(log.column("switched")))
    print(f"episode: {len(log.rows)} steps, switches={switches}, "
          f"failed={log.truncated_by_failure}, log -> {args.out}")
    return EXIT_OK


def cmd_eval(args) -> int:
    cfgs = _load_cfg(args)
    if args.what == "trace":
        policy, _ = art.load_policy(_require(args.policy, "student policy (--policy)"))
        ks = tuple(float(x) for x in args.k_values.split(","))
        out = compliance_trace(policy, cfgs["env"], k_values=ks,
                               seeds=tuple(range(args.seeds)))
        rows = ["k,mean_abs_vy,corr_vy_fy,mean_vx,peak_vstar_y"]
        for k in ks:
            d = out["per_k"][k]
            rows.append(f"{k},{d['mean_abs_vy']:.4f},{d['corr_vy_fy']:.4f},"
                        f"{d['mean_vx']:.4f},{d['peak_vstar_y']:.4f}")
        text = "\n".join(rows) + "\n"
        with open(args.out, "w") as f:
            f.write(text)
        print(text)
        return EXIT_OK
    if args.what == "sweep":
        bundle = ControllerBundle.load(
            _require(args.bundle, "bundle (--bundle)"), cfgs["env"])
        eps = tuple(float(x) for x in args.epsilons.split(","))
        forces = tuple(float(x) for x in args.forces.split(","))
        sweep = epsilon_sweep(bundle, eps, forces, episodes=args.episodes,
                              seed=args.seed, n_workers=_workers(args))
        sweep_to_csv(sweep, args.out)
        print(f"sweep: {len(eps) * len(forces)} cells -> {args.out}")
        return EXIT_OK
    if args.what == "ablate":
        variants = {}
        for spec_arg in args.variant:
            name, path = spec_arg.split("=", 1)
            if path == "missing":
                variants[name] = None
            else:
                variants[name], _ = art.load_policy(_require(path, f"variant {name}"))
        report = ablation_harness(variants, cfgs["env"], episodes=args.episodes,
                                  seed=args.seed, n_workers=_workers(args))
        ablation_to_csv(report, args.out)
        print(f"ablation report -> {args.out}")
        return EXIT_OK
    if args.what == "energy":
        log_path = _require(args.log, "trajectory log (--log)")
        import csv as _csv

        with open(log_path) as f:
            rows = list(_csv.DictReader(f))
        tau = np.array([[float(r[f"joint_torque_{i}"]) for i in range(12)] for r in rows])
        qd = np.array([[float(r[f"joint_vel_{i}"]) for i in range(12)] for r in rows])
        e = motor_energy(tau, qd, cfgs["env"].dt)
        out = {k: (v.tolist() if isinstance(v, np.ndarray) else v) for k, v in e.items()}
        text = json.dumps(out, indent=2, sort_keys=True)
        with open(args.out, "w") as f:
            f.write(text)
        print(text)
        return EXIT_OK
    print(f"error: unknown eval subcommand {args.what}", file=sys.stderr)
    return EXIT_CONFIG


def cmd_plot(args) -> int:
    import csv as _csv

    src = _require(args.csv, "input csv (--csv)")
    with open(src) as f:
        rows = list(_csv.DictReader(f))
    if args.kind == "sweep-heatmap":
        eps = sorted({float(r["epsilon"]) for r in rows})
        forces = sorted({float(r["force_n"]) for r in rows})
        m = np.full((len(eps), len(forces)), np.nan)
        for r in rows:
            m[eps.index(float(r["epsilon"])), forces.index(float(r["force_n"]))] = float(
                r["success_rate"])
        svg = svg_heatmap(m, [f"eps={e}" for e in eps], [f"{f:.0f}N" for f in forces],
                          "Success rate by switching threshold and push magnitude")
    elif args.kind == "trace-lines":
        xs = np.arange(len(rows))
        series = {}
        for col in args.columns.split(","):
            series[col] = (xs, np.array([float(r[col]) for r in rows]))
        svg = svg_line_plot(series, args.title or "trace", "step", args.columns)
    else:
        print(f"error: unknown plot kind {args.kind}", file=sys.stderr)
        return EXIT_CONFIG
    with open(args.out, "w") as f:
        f.write(svg)
    print(f"plot -> {args.out}")
    return EXIT_OK


def cmd_verify(args) -> int:
    problems = art.verify_run_dir(args.run_dir)
    if problems:
        for p in problems:
            print(f"FAIL {p}")
        return EXIT_CONFIG
    print(f"OK {args.run_dir}")
    return EXIT_OK


# -------------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="saclo",
        description="Switched compliant/safe locomotion pipeline: train, "
                    "distill, harvest, label, evaluate.",
    )
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, seed=True):
        sp.add_argument("--config", help="key-value config file ([env]/[ppo]/[distill])")
        sp.add_argument("--out-root", help="artifact root (env SACLO_OUT_ROOT)")
        sp.add_argument("--workers", type=int, help="worker cap (env SACLO_WORKERS); "
                        "1 guarantees bit-exact reproducibility")
        if seed:
            sp.add_argument("--seed", type=int, default=0)

    sp = sub.add_parser("train-comply", help="train the privileged compliant teacher")
    common(sp)
    sp.add_argument("--zero-k", action="store_true",
                    help="ablation: train without the admittance velocity target")
    sp.set_defaults(func=cmd_train_comply)

    sp = sub.add_parser("distill-comply", help="distill the compliant student")
    common(sp)
    sp.add_argument("--teacher", required=False)
    sp.add_argument("--zero-k", action="store_true")
    sp.set_defaults(func=cmd_distill_comply)

    sp = sub.add_parser("harvest-unsafe", help="collect pre-failure windows")
    common(sp)
    sp.add_argument("--policy", required=False)
    sp.add_argument("--episodes", type=int, default=200)
    sp.add_argument("--force-cap", type=float, default=None)
    sp.add_argument("--csv", action="store_true", help="also write a CSV preview")
    sp.set_defaults(func=cmd_harvest_unsafe)

    sp = sub.add_parser("train-safe", help="two-stage safe teacher training")
    common(sp)
    sp.add_argument("--unsafe", help="harvested unsafe dataset for stage 2")
    sp.set_defaults(func=cmd_train_safe)

    sp = sub.add_parser("distill-safe", help="distill the safe student")
    common(sp)
    sp.add_argument("--teacher", required=False)
    sp.add_argument("--unsafe", help="unsafe dataset for episode initialization")
    sp.set_defaults(func=cmd_distill_safe)

    sp = sub.add_parser("label-recover", help="label unsafe states by safe-policy rollouts")
    common(sp)
    sp.add_argument("--policy", required=False, help="safe student checkpoint")
    sp.add_argument("--unsafe", required=False, help="harvested unsafe dataset")
    sp.add_argument("--max-records", type=int, default=None)
    sp.set_defaults(func=cmd_label_recover)

    sp = sub.add_parser("train-recover", help="fit the recoverability classifier")
    common(sp)
    sp.add_argument("--dataset", required=False)
    sp.add_argument("--epochs", type=int, default=60)
    sp.add_argument("--hidden", type=int, nargs="+", default=[128, 128, 128])
    sp.set_defaults(func=cmd_train_recover)

    sp = sub.add_parser("bundle", help="assemble a controller bundle directory")
    common(sp, seed=False)
    sp.add_argument("--comply", required=False)
    sp.add_argument("--safe", required=False)
    sp.add_argument("--recover", required=False)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_bundle)

    sp = sub.add_parser("run", help="closed-loop switched-controller episode")
    common(sp)
    sp.add_argument("--bundle", required=False)
    sp.add_argument("--schedule", help="disturbance schedule CSV")
    sp.add_argument("--epsilon", type=float, default=0.9)
    sp.add_argument("--epsilon-back", type=float, default=None,
                    help="switch-back threshold (default epsilon + 0.05)")
    sp.add_argument("--vx", type=float, default=0.0)
    sp.add_argument("--vy", type=float, default=0.0)
    sp.add_argument("--wz", type=float, default=0.0)
    sp.add_argument("--k", type=float, default=0.0)
    sp.add_argument("--steps", type=int, default=None)
    sp.add_argument("--out", default="trajectory.csv")
    sp.set_defaults(func=cmd_run)

    sp = sub.add_parser("eval", help="evaluation protocols")
    sp.add_argument("what", choices=["trace", "sweep", "ablate", "energy"])
    common(sp)
    sp.add_argument("--policy", help="student policy (trace)")
    sp.add_argument("--bundle", help="controller bundle (sweep)")
    sp.add_argument("--k-values", default="0.0,0.01,0.02")
    sp.add_argument("--seeds", type=int, default=5)
    sp.add_argument("--epsilons", default="0.0,0.7,0.9,1.0")
    sp.add_argument("--forces", default="200,400,600,800")
    sp.add_argument("--episodes", type=int, default=50)
    sp.add_argument("--variant", action="append", default=[],
                    help="name=path (repeatable); use name=missing for gaps")
    sp.add_argument("--log", help="trajectory log CSV (energy)")
    sp.add_argument("--out", default="eval_out.csv")
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("plot", help="render CSV outputs as self-contained SVG")
    common(sp, seed=False)
    sp.add_argument("--csv", required=True)
    sp.add_argument("--kind", choices=["sweep-heatmap", "trace-lines"], required=True)
    sp.add_argument("--columns", default="vy_body")
    sp.add_argument("--title", default=None)
    sp.add_argument("--out", default="plot.svg")
    sp.set_defaults(func=cmd_plot)

    sp = sub.add_parser("verify", help="re-hash a run directory against its manifest")
    sp.add_argument("run_dir")
    sp.set_defaults(func=cmd_verify)

    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: invalid config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
