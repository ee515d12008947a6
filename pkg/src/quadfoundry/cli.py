"""Command-line entry point.

Every subcommand honors --seed and --config; explicit flags override the
config file, which overrides built-in defaults. Study subcommands write a
CSV (or JSON) result plus a PNG figure into --out.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import analysis, plotting
from .config import ExperimentConfig, load_config
from .distill import distill
from .dynamics import QuadParams
from .policy import PolicyGRU, export_policy, load_policy, param_count
from .sac import load_checkpoint, pretrain_fleet
from .sampling import load_fleet, sample_fleet, save_fleet
from .trajectory import FigureEightTrajectory, LangevinTrajectory


def _add_common(sp: argparse.ArgumentParser) -> None:
    sp.add_argument("--seed", type=int, default=None,
                    help="master seed (overrides config)")
    sp.add_argument("--config", type=str, default=None,
                    help="JSON experiment config file")


CONFIG_ENV_VAR = "QUADFOUNDRY_CONFIG"


def _load(args) -> ExperimentConfig:
    """Precedence: explicit flags > --config file > $QUADFOUNDRY_CONFIG > defaults."""
    path = args.config or os.environ.get(CONFIG_ENV_VAR)
    cfg = load_config(path) if path else ExperimentConfig()
    if args.seed is not None:
        cfg.seed = args.seed
    return cfg


def _fleet_params(fleet, index: int) -> QuadParams:
    if not 0 <= index < len(fleet):
        raise SystemExit(f"fleet index {index} out of range 0..{len(fleet) - 1}")
    return fleet[index][0]


def _load_teachers(teacher_dir: str | Path):
    paths = sorted(Path(teacher_dir).glob("teacher_*.bin"))
    if not paths:
        raise SystemExit(f"no teacher_*.bin checkpoints in {teacher_dir}")
    return [load_checkpoint(p) for p in paths]


def _write_csv(path: Path, rows: list[dict], columns: list[str]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=columns)
        w.writeheader()
        for r in rows:
            w.writerow({k: r.get(k, "") for k in columns})


# ---------------------------------------------------------------------------
# subcommand implementations

def cmd_sample(args) -> int:
    cfg = _load(args)
    fleet = sample_fleet(args.n, cfg.seed, cfg.sampler)
    save_fleet(fleet, args.out)
    print(f"wrote {args.n} quadrotors to {args.out} (seed {cfg.seed})")
    return 0


def cmd_traj(args) -> int:
    cfg = _load(args)
    dt = cfg.sim.dt
    steps = int(round(args.seconds / dt))
    rows = []
    if args.kind == "langevin":
        rng = np.random.default_rng(cfg.seed)
        task = LangevinTrajectory(cfg.langevin, rng)
        ref = task.reset()
        for i in range(steps):
            ref = task.step(ref, dt)
            rows.append(((i + 1) * dt, ref))
    else:
        fig8 = cfg.fig8 if args.period is None else dataclasses.replace(
            cfg.fig8, period=args.period)
        task = FigureEightTrajectory(fig8)
        ref = task.reset()
        rows.append((0.0, ref))
        for i in range(steps):
            ref = task.step(ref, dt)
            rows.append(((i + 1) * dt, ref))
    from .trajectory import write_trajectory_csv
    write_trajectory_csv(args.out, rows)
    print(f"wrote {len(rows)} reference rows to {args.out}")
    return 0


def cmd_pretrain(args) -> int:
    cfg = _load(args)
    sac_cfg = cfg.sac
    if args.steps is not None:
        sac_cfg = dataclasses.replace(sac_cfg, total_steps=args.steps)
    fleet = load_fleet(args.fleet)
    out = Path(args.out)
    paths = pretrain_fleet(fleet, sac_cfg, cfg.seed, out, workers=args.workers)
    print(f"trained {len(paths)}/{len(fleet)} teachers into {out}")
    return 0 if len(paths) == len(fleet) else 1


def cmd_distill(args) -> int:
    cfg = _load(args)
    dcfg = cfg.distill
    overrides = {}
    if args.epochs is not None:
        overrides["epochs"] = args.epochs
    if args.envs is not None:
        overrides["envs_per_epoch"] = args.envs
    if overrides:
        dcfg = dataclasses.replace(dcfg, **overrides)
    fleet = load_fleet(args.fleet)
    teachers = _load_teachers(args.teachers)
    holdout = args.holdout
    if holdout >= len(fleet):
        raise SystemExit("holdout must be smaller than the fleet")
    train_pairs = [(fleet[i][0], teachers[i])
                   for i in range(len(fleet) - holdout) if i < len(teachers)]
    holdout_params = [p for p, _ in fleet[len(fleet) - holdout:]]
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    curve_path = out.with_suffix(".curve.csv")
    student, _ = distill(train_pairs, holdout_params, dcfg, cfg.seed,
                         curve_path=curve_path, langevin=cfg.langevin,
                         log=not args.quiet)
    export_policy(student, out)
    np.savez(out.with_suffix(".ckpt.npz"),
             hidden=student.hidden, obs_dim=student.obs_dim,
             act_dim=student.act_dim,
             **{n: getattr(student, n) for n in student.PARAM_NAMES})
    print(f"student ({param_count(student.hidden)} parameters) -> {out}")
    print(f"learning curve -> {curve_path}")
    return 0


def cmd_export(args) -> int:
    data = np.load(args.checkpoint)
    student = PolicyGRU(int(data["hidden"]), int(data["obs_dim"]),
                        int(data["act_dim"]))
    student.set_parameters([data[n] for n in student.PARAM_NAMES])
    export_policy(student, args.out)
    print(f"exported policy to {args.out}")
    return 0


def cmd_infer(args) -> int:
    policy = load_policy(args.policy)
    rows = np.loadtxt(args.obs_csv, delimiter=",", skiprows=args.skip_header)
    rows = np.atleast_2d(rows)
    if rows.shape[1] != policy.obs_dim:
        raise SystemExit(f"expected {policy.obs_dim} observation columns, "
                         f"got {rows.shape[1]}")
    h = policy.reset_hidden()
    out_rows = []
    for obs in rows:
        act, h = policy.forward(obs, h)
        out_rows.append(act)
    np.savetxt(args.out, np.asarray(out_rows), delimiter=",", fmt="%.9g",
               header="a0,a1,a2,a3", comments="")
    print(f"wrote {len(out_rows)} actions to {args.out}")
    return 0


def cmd_probe(args) -> int:
    cfg = _load(args)
    student = load_policy(args.student)
    fleet = load_fleet(args.fleet)
    data = analysis.build_probe_dataset(student, fleet, args.episodes, cfg.seed)
    w, mse, r2 = analysis.linear_probe_fit(data, split=args.split, seed=cfg.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    pred = analysis._with_intercept(data.hidden) @ w
    _write_csv(out / "probe_rows.csv",
               [{"true_t2w": t, "pred_t2w": p, "quad": g}
                for t, p, g in zip(data.target, pred, data.group)],
               ["true_t2w", "pred_t2w", "quad"])
    (out / "probe_weights.json").write_text(json.dumps(
        {"weights": w.tolist(), "test_mse": mse, "test_r2": r2}, indent=1))
    plotting.probe_figure(data.target, pred, r2, mse, out / "probe.png")
    print(f"probe test MSE {mse:.4f}  R^2 {r2:.4f} -> {out}")
    return 0


def cmd_eval_fig8(args) -> int:
    cfg = _load(args)
    student = load_policy(args.student)
    params = _fleet_params(load_fleet(args.fleet), args.index)
    fig8 = dataclasses.replace(cfg.fig8, period=args.period)
    record = analysis.figure_eight_eval(student, params, fig8, loops=args.loops)
    rmse_xy = analysis.rmse_tracking(record, include_z=False, skip_time=fig8.ramp)
    rmse_xyz = analysis.rmse_tracking(record, include_z=True, skip_time=fig8.ramp)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    record.save_csv(out / "fig8_episode.csv")
    plotting.tracking_figure(record, out / "fig8.png",
                             title=f"figure-eight, period {args.period}s")
    (out / "fig8_metrics.json").write_text(json.dumps(
        {"rmse_xy": rmse_xy, "rmse_xyz": rmse_xyz,
         "terminated": record.terminated, "steps": len(record)}, indent=1))
    print(f"RMSE excl z: {rmse_xy:.3f} m, incl z: {rmse_xyz:.3f} m -> {out}")
    return 0


def cmd_activate(args) -> int:
    cfg = _load(args)
    student = load_policy(args.student)
    params = _fleet_params(load_fleet(args.fleet), args.index)
    record, ok = analysis.midair_activation_test(student, params, args.speed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    record.save_csv(out / "activation_episode.csv")
    plotting.timeseries_figure(record, out / "activation.png",
                               title=f"mid-air activation at {args.speed} m/s")
    plotting.hidden_figure(record, out / "activation_hidden.png")
    print(f"recovered: {ok}")
    return 0 if ok else 1


def cmd_disturb(args) -> int:
    cfg = _load(args)
    student = load_policy(args.student)
    params = _fleet_params(load_fleet(args.fleet), args.index)
    kwargs = {}
    if args.kind == "impulse":
        kwargs["dv"] = np.array([float(x) for x in args.dv.split(",")])
    elif args.kind == "payload":
        kwargs["dm"] = args.dm if args.dm is not None else 0.5 * params.mass
    else:
        kwargs["motor"] = args.motor
        kwargs["scale"] = args.scale
    record, ok = analysis.disturbance_recovery_test(student, params, args.kind,
                                                    **kwargs)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    record.save_csv(out / f"disturb_{args.kind}.csv")
    plotting.timeseries_figure(record, out / f"disturb_{args.kind}.png",
                               title=f"disturbance: {args.kind}")
    print(f"recovered after {args.kind}: {ok}")
    return 0 if ok else 1


def cmd_delay_study(args) -> int:
    cfg = _load(args)
    student = load_policy(args.student)
    params = _fleet_params(load_fleet(args.fleet), args.index)
    delays = [float(x) for x in args.delays.split(",")]
    rows = []
    modes = {"off": [False], "on": [True], "both": [False, True]}[args.mitigation]
    for mit in modes:
        rows.extend(analysis.delay_study(student, params, delays,
                                         with_mitigation=mit))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _write_csv(out / "delay_study.csv", rows,
               ["delay", "mitigation", "z_std", "terminated", "steps"])
    plotting.delay_figure(rows, out / "delay_study.png")
    for r in rows:
        print(f"delay {r['delay'] * 1e3:5.1f} ms  mitigation={r['mitigation']}: "
              f"z-std {r['z_std']:.4f} m")
    return 0


def cmd_scaling(args) -> int:
    cfg = _load(args)
    fleet = load_fleet(args.fleet)
    teachers = _load_teachers(args.teachers)
    n_train = min(len(teachers), len(fleet) - args.holdout)
    train_pairs = [(fleet[i][0], teachers[i]) for i in range(n_train)]
    holdout_params = [p for p, _ in fleet[len(fleet) - args.holdout:]]
    dcfg = cfg.distill
    if args.epochs is not None:
        dcfg = dataclasses.replace(dcfg, epochs=args.epochs)
    hidden_sizes = [int(x) for x in args.hidden.split(",")]
    counts = [int(x) for x in args.counts.split(",")]
    rows = analysis.scaling_sweep(train_pairs, holdout_params, hidden_sizes,
                                  counts, dcfg, cfg.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _write_csv(out / "scaling.csv", rows,
               ["hidden", "teachers", "flops", "episode_length", "fault"])
    plotting.scaling_figure(rows, out / "scaling.png")
    for r in rows:
        print(f"H={r['hidden']:3d} teachers={r['teachers']:3d} "
              f"flops={r['flops']:6d} len={r['episode_length']:.1f} {r['fault']}")
    return 0


def cmd_serve(args) -> int:
    cfg = _load(args)
    from .serve import serve_forever
    student = load_policy(args.student)
    fleet = load_fleet(args.fleet)
    probe_w = None
    if args.probe_weights:
        probe_w = np.asarray(json.loads(Path(args.probe_weights).read_text())["weights"])
    serve_cfg = cfg.serve
    if args.port is not None:
        serve_cfg = dataclasses.replace(serve_cfg, port=args.port)
    if args.pace is not None:
        serve_cfg = dataclasses.replace(serve_cfg, pace=args.pace)
    serve_forever(student, fleet, args.index, serve_cfg, seed=cfg.seed,
                  probe_weights=probe_w, max_steps=args.max_steps)
    return 0


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="quadfoundry",
        description="random-quadrotor fleet sampling, per-vehicle RL teachers, "
                    "and distillation into a tiny recurrent flight policy")
    sub = ap.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("sample", help="sample a fleet of random quadrotors")
    sp.add_argument("--n", type=int, required=True)
    sp.add_argument("--out", required=True)
    _add_common(sp)
    sp.set_defaults(fn=cmd_sample)

    sp = sub.add_parser("traj", help="emit a reference trajectory CSV")
    sp.add_argument("--kind", choices=["langevin", "fig8"], required=True)
    sp.add_argument("--period", type=float, default=None)
    sp.add_argument("--seconds", type=float, default=20.0)
    sp.add_argument("--out", required=True)
    _add_common(sp)
    sp.set_defaults(fn=cmd_traj)

    sp = sub.add_parser("pretrain", help="train one SAC teacher per quadrotor")
    sp.add_argument("--fleet", required=True)
    sp.add_argument("--steps", type=int, default=None)
    sp.add_argument("--workers", type=int, default=1)
    sp.add_argument("--out", required=True)
    _add_common(sp)
    sp.set_defaults(fn=cmd_pretrain)

    sp = sub.add_parser("distill", help="distill teachers into the student policy")
    sp.add_argument("--fleet", required=True)
    sp.add_argument("--teachers", required=True)
    sp.add_argument("--epochs", type=int, default=None)
    sp.add_argument("--holdout", type=int, default=2)
    sp.add_argument("--envs", type=int, default=None)
    sp.add_argument("--quiet", action="store_true")
    sp.add_argument("--out", required=True)
    _add_common(sp)
    sp.set_defaults(fn=cmd_distill)

    sp = sub.add_parser("export", help="convert a training checkpoint to policy binary")
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--out", required=True)
    _add_common(sp)
    sp.set_defaults(fn=cmd_export)

    sp = sub.add_parser("infer", help="run the policy over an observation CSV")
    sp.add_argument("--policy", required=True)
    sp.add_argument("--obs-csv", required=True)
    sp.add_argument("--skip-header", type=int, default=0)
    sp.add_argument("--out", required=True)
    _add_common(sp)
    sp.set_defaults(fn=cmd_infer)

    sp = sub.add_parser("probe", help="fit the thrust-to-weight linear probe")
    sp.add_argument("--student", required=True)
    sp.add_argument("--fleet", required=True)
    sp.add_argument("--episodes", type=int, default=2)
    sp.add_argument("--split", type=float, default=0.8)
    sp.add_argument("--out", required=True)
    _add_common(sp)
    sp.set_defaults(fn=cmd_probe)

    sp = sub.add_parser("eval-fig8", help="figure-eight tracking study")
    sp.add_argument("--student", required=True)
    sp.add_argument("--fleet", required=True)
    sp.add_argument("--index", type=int, default=0)
    sp.add_argument("--period", type=float, default=10.0)
    sp.add_argument("--loops", type=int, default=5)
    sp.add_argument("--out", required=True)
    _add_common(sp)
    sp.set_defaults(fn=cmd_eval_fig8)

    sp = sub.add_parser("activate", help="mid-air activation study")
    sp.add_argument("--student", required=True)
    sp.add_argument("--fleet", required=True)
    sp.add_argument("--index", type=int, default=0)
    sp.add_argument("--speed", type=float, default=1.0)
    sp.add_argument("--out", required=True)
    _add_common(sp)
    sp.set_defaults(fn=cmd_activate)

    sp = sub.add_parser("disturb", help="disturbance robustness study")
    sp.add_argument("--student", required=True)
    sp.add_argument("--fleet", required=True)
    sp.add_argument("--index", type=int, default=0)
    sp.add_argument("--kind", choices=["impulse", "payload", "prop_swap"],
                    required=True)
    sp.add_argument("--dv", default="1,0,0", help="impulse m/s, comma separated")
    sp.add_argument("--dm", type=float, default=None, help="payload kg")
    sp.add_argument("--motor", type=int, default=0)
    sp.add_argument("--scale", type=float, default=0.8)
    sp.add_argument("--out", required=True)
    _add_common(sp)
    sp.set_defaults(fn=cmd_disturb)

    sp = sub.add_parser("delay-study", help="velocity-delay oscillation study")
    sp.add_argument("--student", required=True)
    sp.add_argument("--fleet", required=True)
    sp.add_argument("--index", type=int, default=0)
    sp.add_argument("--delays", default="0,0.01,0.02,0.03")
    sp.add_argument("--mitigation", choices=["off", "on", "both"], default="both")
    sp.add_argument("--out", required=True)
    _add_common(sp)
    sp.set_defaults(fn=cmd_delay_study)

    sp = sub.add_parser("scaling", help="hidden-size / teacher-count sweep")
    sp.add_argument("--fleet", required=True)
    sp.add_argument("--teachers", required=True)
    sp.add_argument("--hidden", default="4,16")
    sp.add_argument("--counts", default="4,16")
    sp.add_argument("--holdout", type=int, default=2)
    sp.add_argument("--epochs", type=int, default=None)
    sp.add_argument("--out", required=True)
    _add_common(sp)
    sp.set_defaults(fn=cmd_scaling)

    sp = sub.add_parser("serve", help="live telemetry/command session")
    sp.add_argument("--student", required=True)
    sp.add_argument("--fleet", required=True)
    sp.add_argument("--index", type=int, default=0)
    sp.add_argument("--port", type=int, default=None)
    sp.add_argument("--pace", type=float, default=None,
                    help="sim seconds per wall second; 0 = unpaced")
    sp.add_argument("--probe-weights", default=None)
    sp.add_argument("--max-steps", type=int, default=None,
                    help="stop after N sim steps (for scripted sessions)")
    _add_common(sp)
    sp.set_defaults(fn=cmd_serve)

    return ap


def run_cli(argv: list[str] | None = None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    return args.fn(args)


def main() -> None:
    sys.exit(run_cli())


if __name__ == "__main__":
    main()
