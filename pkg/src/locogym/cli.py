"""``locogym`` command line: train, eval, export, latency, plot-data.

Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import sys
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import config as config_mod
from .config import ConfigError, RunConfig
from .deploy import (
    NoMovementDetected,
    SimulatedRobot,
    SnapshotError,
    export_snapshot,
    load_snapshot,
    measure_latency,
    snapshot_from_trainer,
    summarize,
    write_report,
)
from .env import make_env
from .env.commands import STAND_STILL, CommandVector
from .env.trajectory import TrajectoryFormatError, TrajectoryWriter, read_trajectory
from .nn import NonFiniteLoss
from .ppo import TrainingError, train

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2
DEFAULT_SCRIPT = "0:0.3,5:stand,10:-0.3,15:0.3"


class UsageError(Exception):
    pass


def _fail(code: int, kind: str, message: str) -> int:
    print(f"error [{kind}]: {message}", file=sys.stderr)
    return code


def _load_cfg(args) -> RunConfig:
    cfg = config_mod.load_config(args.config) if args.config else config_mod.default_config()
    return config_mod.apply_overrides(cfg, args.set or [])


def _snapshot_name(iteration: int) -> str:
    return f"snapshot_{iteration:06d}.lcs"


# ---------------------------------------------------------------- train

def cmd_train(args) -> int:
    cfg = _load_cfg(args)
    if args.iters is not None:
        if args.iters < 1:
            raise UsageError("--iters must be >= 1")
        cfg = config_mod.validate(dataclasses.replace(cfg, iterations=args.iters))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    existing = [p.name for p in out.iterdir() if p.name in ("metrics.csv", "config.yaml") or p.suffix == ".lcs"]
    if existing and not args.force:
        raise UsageError(f"{out} already holds run output ({', '.join(sorted(existing))}); pass --force to overwrite")
    config_mod.save_config(cfg, out / "config.yaml")

    def checkpoint(trainer, iteration):
        snap = snapshot_from_trainer(trainer)
        digest = export_snapshot(snap, out / _snapshot_name(iteration), force=True)
        if iteration == cfg.iterations:
            export_snapshot(snap, out / "policy.lcs", force=True)
        if not args.quiet:
            print(f"iteration {iteration}: wrote {_snapshot_name(iteration)} sha256={digest[:16]}")

    def progress(stats):
        if not args.quiet:
            print(f"iter {stats.iteration:4d}  reward {stats.mean_reward:8.4f}  "
                  f"ep_len {stats.mean_episode_length:7.1f}  level {stats.curriculum_level:.2f}")

    history, _ = train(cfg, out_dir=out, checkpoint=checkpoint, on_iteration=progress)
    print(f"trained {len(history)} iterations; metrics in {out / 'metrics.csv'}")
    return EXIT_OK


# ---------------------------------------------------------------- eval

def parse_command_script(text: str) -> list[tuple[float, CommandVector]]:
    """``"t0:v0,t1:v1,..."`` with ``v`` a forward speed or ``stand``; times ascending from 0."""
    segments = []
    for item in text.split(","):
        t_text, sep, v_text = item.strip().partition(":")
        if not sep:
            raise UsageError(f"command script entry '{item}' is not time:value")
        try:
            t = float(t_text)
            cmd = STAND_STILL if v_text.strip() == "stand" else CommandVector(lin_vel_x=float(v_text))
        except ValueError:
            raise UsageError(f"bad command script entry '{item}'") from None
        if segments and t <= segments[-1][0]:
            raise UsageError("command script times must increase")
        segments.append((t, cmd))
    if not segments or segments[0][0] != 0.0:
        raise UsageError("command script must start at time 0")
    return segments


def script_function(segments) -> Callable[[int, float], CommandVector]:
    times = np.array([t for t, _ in segments])

    def command_at(env_index: int, t: float) -> CommandVector:
        # small tolerance so a change at 5 s lands on step 250 despite float steps
        return segments[int(np.searchsorted(times, t + 1e-9, side="right")) - 1][1]

    return command_at


def cmd_eval(args) -> int:
    cfg = _load_cfg(args)
    snap = load_snapshot(args.snapshot)
    if snap.task != cfg.task:
        raise UsageError(f"snapshot was trained on task '{snap.task}' but the config selects '{cfg.task}'")
    steps = args.steps if args.steps is not None else cfg.max_episode_steps
    rnd = dataclasses.replace(cfg.randomization, enabled=bool(args.randomize))
    cfg = config_mod.validate(dataclasses.replace(cfg, randomization=rnd, max_episode_steps=steps,
                                                  seed=args.seed if args.seed is not None else cfg.seed))
    env = make_env(cfg, num_envs=args.episodes)
    snap.check_robot(env.num_actions, env.actor_dim)
    env.command_script = script_function(parse_command_script(args.commands))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    dump = out / "trajectory.jsonl"
    if dump.exists() and not args.force:
        raise UsageError(f"{dump} exists; pass --force to overwrite")

    n = env.num_envs
    obs = env.reset_all().actor
    finished = np.zeros(n, dtype=bool)
    err_sum, count = np.zeros(n), np.zeros(n, dtype=np.int64)
    early = np.zeros(n, dtype=bool)
    source = args.source or ("train-randomized" if args.randomize else "eval")
    with open(dump, "w", encoding="utf-8") as fh:
        writer = TrajectoryWriter(fh, source, n)
        while not finished.all():
            result = env.step(snap.act(obs))
            obs = result.actor_obs
            live = ~finished
            writer.write(result, live)
            vx = result.v[:, 0]
            ok = live & np.isfinite(vx)
            err_sum[ok] += np.abs(vx[ok] - result.command[ok, 0])
            count[live] += 1
            early |= live & result.early
            finished |= result.done
    episodes = [{"episode": int(k), "length": int(count[k]), "early_termination": bool(early[k]),
                 "mean_abs_tracking_error": float(err_sum[k] / max(count[k], 1))} for k in range(n)]
    summary = {
        "snapshot": str(args.snapshot),
        "commands": args.commands,
        "randomized": bool(args.randomize),
        "episodes": episodes,
        "mean_episode_length": float(count.mean()),
        "mean_abs_tracking_error": float(np.mean([e["mean_abs_tracking_error"] for e in episodes])),
    }
    (out / "eval.json").write_text(json.dumps(summary, indent=2) + "\n", encoding="utf-8")
    print(json.dumps({k: summary[k] for k in ("mean_episode_length", "mean_abs_tracking_error")}))
    return EXIT_OK


# ---------------------------------------------------------------- export

def cmd_export(args) -> int:
    snap = load_snapshot(args.checkpoint, num_joints=args.num_joints)
    digest = export_snapshot(snap, args.out, force=args.force)
    layout = snap.layout
    print(json.dumps({
        "out": str(args.out),
        "sha256": digest,
        "robot": snap.robot,
        "task": snap.task,
        "sizes": list(snap.policy.mean_net.sizes),
        "actor": [[name, dim] for name, dim, _ in layout.actor],
        "actor_dim": layout.actor_dim,
    }))
    return EXIT_OK


# ---------------------------------------------------------------- latency

def cmd_latency(args) -> int:
    if not 0.0 <= args.delay_ms:
        raise UsageError("--delay-ms must be >= 0")
    robot = SimulatedRobot(delay=args.delay_ms / 1000.0, physics_dt=args.physics_dt, bench=True)
    if not 0 <= args.joint < robot.model.num_joints:
        raise UsageError(f"--joint must be in [0, {robot.model.num_joints})")
    trials = measure_latency(robot, args.step, trials=args.trials, joint=args.joint, timeout=args.timeout)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            write_report(trials, fh)
    else:
        write_report(trials, sys.stdout)
    print(json.dumps(summarize(trials)), file=sys.stderr if not args.out else sys.stdout)
    return EXIT_OK


# ---------------------------------------------------------------- plot-data

PLOT_COLUMNS = ("source", "origin", "env", "episode", "step", "time", "joint", "position", "velocity")


def plot_rows(paths: Sequence[str]):
    """Tidy rows of joint position/velocity pairs, one trace label per (file, env).

    The joint coordinates are the trailing ``len(action)`` entries of ``q_gen``
    and ``v_gen``, which skips the floating base of the biped.
    """
    stems: dict[str, int] = {}
    for path in paths:
        stem = Path(path).stem
        stems[stem] = stems.get(stem, 0) + 1
        label = stem if stems[stem] == 1 else f"{stem}.{stems[stem]}"
        records = list(read_trajectory(path))
        envs = sorted({int(r.get("env", 0)) for r in records})
        for rec in records:
            env = int(rec.get("env", 0))
            n = len(rec.get("action") or rec["q_gen"])
            q, v = rec["q_gen"][-n:], rec["v_gen"][-n:]
            source = label if len(envs) == 1 else f"{label}/env{env}"
            for j in range(n):
                yield (source, rec.get("source", ""), env, rec.get("episode", 0), rec.get("step", 0),
                       rec["time"], j, q[j], v[j])


def cmd_plot_data(args) -> int:
    if not args.dumps:
        raise UsageError("plot-data needs at least one trajectory dump")
    for p in args.dumps:
        if not Path(p).is_file():
            raise UsageError(f"trajectory dump not found: {p}")
    rows = list(plot_rows(args.dumps))
    fh = open(args.out, "w", encoding="utf-8", newline="") if args.out else sys.stdout
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(PLOT_COLUMNS)
        w.writerows(rows)
    finally:
        if args.out:
            fh.close()
    return EXIT_OK


# ---------------------------------------------------------------- parser

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="locogym", description="Planar-biped locomotion RL: training through deployment.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def config_args(sp):
        sp.add_argument("--config", help="YAML run config (defaults apply for missing keys)")
        sp.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key, repeatable")

    t = sub.add_parser("train", help="run PPO and write metrics.csv, snapshots and the resolved config")
    config_args(t)
    t.add_argument("--out", required=True, help="output directory (created if absent)")
    t.add_argument("--iters", type=int, help="number of iterations (overrides the config)")
    t.add_argument("--force", action="store_true", help="overwrite an existing run in --out")
    t.add_argument("--quiet", action="store_true")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="deterministic episodes under a scripted command sequence")
    config_args(e)
    e.add_argument("--snapshot", required=True)
    e.add_argument("--out", required=True)
    e.add_argument("--episodes", type=int, default=4, help="episodes, run as a batch")
    e.add_argument("--steps", type=int, help="episode length cap in control steps")
    e.add_argument("--commands", default=DEFAULT_SCRIPT,
                   help="time:value pairs, value a forward speed in m/s or 'stand' (default %(default)s)")
    e.add_argument("--randomize", action="store_true", help="keep domain randomization and sensor noise on")
    e.add_argument("--seed", type=int)
    e.add_argument("--source", help="label written into the trajectory dump")
    e.add_argument("--force", action="store_true")
    e.set_defaults(func=cmd_eval)

    x = sub.add_parser("export", help="verify a snapshot and write a deployable copy")
    x.add_argument("--checkpoint", required=True, help="snapshot written by train")
    x.add_argument("--out", required=True)
    x.add_argument("--num-joints", type=int, help="fail unless the policy drives this many joints")
    x.add_argument("--force", action="store_true")
    x.set_defaults(func=cmd_export)

    lat = sub.add_parser("latency", help="step-response latency on the simulated bench robot")
    lat.add_argument("--delay-ms", type=float, default=10.0, help="injected command delay")
    lat.add_argument("--step", type=float, default=0.1, help="step size in rad")
    lat.add_argument("--trials", type=int, default=10)
    lat.add_argument("--joint", type=int, default=0)
    lat.add_argument("--physics-dt", type=float, default=0.001)
    lat.add_argument("--timeout", type=float, default=0.5)
    lat.add_argument("--out", help="JSON-lines report path (stdout when omitted)")
    lat.set_defaults(func=cmd_latency)

    pd = sub.add_parser("plot-data", help="tidy joint phase-portrait CSV from trajectory dumps")
    pd.add_argument("dumps", nargs="*")
    pd.add_argument("--out", help="CSV path (stdout when omitted)")
    pd.set_defaults(func=cmd_plot_data)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        return _fail(EXIT_USAGE, "usage", str(exc))
    except ConfigError as exc:
        return _fail(EXIT_USAGE, "config", str(exc))
    except FileNotFoundError as exc:
        return _fail(EXIT_USAGE, "io", f"no such file: {exc.filename}")
    except FileExistsError as exc:
        return _fail(EXIT_USAGE, "io", str(exc))
    except TrajectoryFormatError as exc:
        return _fail(EXIT_RUNTIME, "trajectory", str(exc))
    except SnapshotError as exc:
        return _fail(EXIT_RUNTIME, type(exc).__name__, str(exc))
    except NoMovementDetected as exc:
        return _fail(EXIT_RUNTIME, "latency", str(exc))
    except (TrainingError, NonFiniteLoss) as exc:
        return _fail(EXIT_RUNTIME, "training", str(exc))


if __name__ == "__main__":
    sys.exit(main())
