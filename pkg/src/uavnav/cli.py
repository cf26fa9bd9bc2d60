"""Command-line entry point: ``uavnav {bootstrap,train,evaluate,navigate,coverage-map}``.

Every subcommand writes its outputs into ``--out`` together with
``scenario.yaml`` (the fully resolved scenario) and ``run.yaml`` (the
resolved arguments).  ``--config run.yaml`` replays a previous run.
"""
from __future__ import annotations

import argparse
import glob
import json
import os
import sys
import time

import numpy as np
import yaml

from . import io as uio
from .evaluation import coverage_map, evaluate, navigate
from .orca import BootstrapFailure, generate_bootstrap_set
from .trainer import TrainConfig, TrainingDiverged, train
from .world import InfeasibleScenario, spawn_training_case

MODES = ("sp", "aw", "none")


class CliError(RuntimeError):
    pass


def _common(p, episodes=False, mode=False, checkpoint=False):
    p.add_argument("--scenario", help="scenario YAML path or bundled name (default: full defaults)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--agents", type=int, default=2)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--config", help="run.yaml written by a previous run; replays its arguments")
    if episodes:
        p.add_argument("--episodes", type=int, default=200)
    if mode:
        p.add_argument("--mode", choices=MODES, default="sp")
    if checkpoint:
        p.add_argument("--checkpoint", required=True,
                       help="checkpoint file, or a training output directory (latest checkpoint)")
        p.add_argument("--disable-sites", type=int, nargs="*", default=[], metavar="INDEX")
        p.add_argument("--shift", type=float, nargs=2, default=None, metavar=("DX", "DY"))


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="uavnav", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("bootstrap", help="generate the bootstrap datasets from ORCA rollouts")
    _common(p)
    p.add_argument("--cases", type=int, default=300)

    p = sub.add_parser("train", help="initialize and refine the networks")
    _common(p, episodes=True, mode=True)
    p.add_argument("--bootstrap", help="directory written by the bootstrap subcommand")
    p.add_argument("--cases-per-episode", type=int, default=30)
    p.add_argument("--updates", type=int, default=100, help="minibatch updates per episode and network")
    p.add_argument("--bootstrap-cases", type=int, default=300)
    p.add_argument("--validation-cases", type=int, default=10)

    p = sub.add_parser("evaluate", help="greedy evaluation over random cases")
    _common(p, mode=True, checkpoint=True)
    p.add_argument("--cases", type=int, default=100)

    p = sub.add_parser("navigate", help="navigate one case and export its trajectory")
    _common(p, mode=True, checkpoint=True)

    p = sub.add_parser("coverage-map", help="closed-form SINR raster")
    _common(p)
    p.add_argument("--nx", type=int, default=100)
    p.add_argument("--ny", type=int, default=100)
    return ap


def _apply_config(args):
    with open(args.config) as fh:
        cfg = yaml.safe_load(fh)
    if not isinstance(cfg, dict) or cfg.get("command") != args.command:
        raise CliError(f"{args.config}: not a run file for '{args.command}'")
    for k, v in cfg.get("args", {}).items():
        if k not in ("out", "config", "command"):
            setattr(args, k, v)
    return uio.scenario_from_dict(cfg["scenario"])


def _scenario(args):
    sc = _apply_config(args) if args.config else uio.resolve_scenario(args.scenario)
    if getattr(args, "disable_sites", None):
        sc = sc.with_disabled_sites(args.disable_sites)
    if getattr(args, "shift", None):
        sc = sc.with_shifted_sites(*args.shift)
    return sc


def _write_run(args, sc):
    os.makedirs(args.out, exist_ok=True)
    uio.save_scenario(os.path.join(args.out, "scenario.yaml"), sc)
    run = {"command": args.command,
           "args": {k: v for k, v in vars(args).items() if k not in ("command", "config")},
           "scenario": uio.scenario_to_dict(sc)}
    if run["args"].get("disable_sites") or run["args"].get("shift"):
        # the stored scenario already has the swap applied
        run["args"]["disable_sites"], run["args"]["shift"] = [], None
    with open(os.path.join(args.out, "run.yaml"), "w") as fh:
        yaml.safe_dump(run, fh, sort_keys=False)


def _summarize(args, summary: dict, text: str):
    with open(os.path.join(args.out, "summary.json"), "w") as fh:
        json.dump(summary, fh, indent=2)
    with open(os.path.join(args.out, "summary.txt"), "w") as fh:
        fh.write(text + "\n")
    print(text)


def find_checkpoint(path: str) -> str:
    if os.path.isdir(path):
        found = sorted(glob.glob(os.path.join(path, "checkpoint_*.bin")))
        if not found:
            raise CliError(f"no trained checkpoint in {path}; run 'uavnav train' first")
        return found[-1]
    if not os.path.exists(path):
        raise CliError(f"no trained checkpoint at {path}; run 'uavnav train' first")
    return path


def _load_nets(args, sc):
    return uio.load_checkpoint(find_checkpoint(args.checkpoint), sc.value_input_width, sc.sinr_input_width)


def cmd_bootstrap(args):
    sc = _scenario(args)
    _write_run(args, sc)
    X, V, Xw, Lw, kept = generate_bootstrap_set(sc, args.cases, np.random.default_rng(args.seed), args.agents)
    uio.save_dataset(os.path.join(args.out, "dataset_value.bin"), X, V, "value")
    uio.save_dataset(os.path.join(args.out, "dataset_sinr.bin"), Xw, Lw, "sinr")
    summary = {"trajectories": args.cases * args.agents, "successful": len(kept),
               "value_pairs": len(V), "sinr_pairs": len(Lw)}
    _summarize(args, summary, f"bootstrap: {len(kept)} of {summary['trajectories']} ORCA trajectories "
                              f"succeeded; {len(V)} state-value pairs, {len(Lw)} location-SINR pairs")


def cmd_train(args):
    sc = _scenario(args)
    _write_run(args, sc)
    boot = None
    if args.bootstrap:
        X, V = uio.load_dataset(os.path.join(args.bootstrap, "dataset_value.bin"), "value")
        Xw, Lw = uio.load_dataset(os.path.join(args.bootstrap, "dataset_sinr.bin"), "sinr")
        if X.shape[1] != sc.value_input_width:
            raise CliError(f"bootstrap dataset width {X.shape[1]} does not match scenario "
                           f"width {sc.value_input_width}")
        boot = (X, V, Xw, Lw)
    cfg = TrainConfig(episodes=args.episodes, cases_per_episode=args.cases_per_episode, n_agents=args.agents,
                      updates_per_episode=args.updates, bootstrap_cases=args.bootstrap_cases,
                      validation_cases=args.validation_cases, mode=args.mode, seed=args.seed)
    t0 = time.perf_counter()
    nets, log = train(sc, cfg, bootstrap=boot, out_dir=args.out)
    last = log.rows[-1]
    summary = {"episodes": args.episodes, "mode": args.mode, "seconds": time.perf_counter() - t0,
               "final": {k: last[k] for k in log.COLUMNS}}
    _summarize(args, summary,
               f"train: {args.episodes} episodes ({args.mode}) in {summary['seconds']:.1f} s; "
               f"probe value {last['probe_value']:.4f}, SINR accuracy {last['sinr_accuracy']:.3f}, "
               f"validation SR {last['sr']:.2f} CR {last['cr']:.2f} DR {last['dr']:.2f}")


def cmd_evaluate(args):
    sc = _scenario(args)
    nets = _load_nets(args, sc)
    _write_run(args, sc)
    rep = evaluate(nets, sc, args.cases, np.random.default_rng(args.seed), args.agents, args.mode)
    with open(os.path.join(args.out, "outcomes.csv"), "w") as fh:
        fh.write("agent_index,outcome,steps,extra_time\n")
        for k, r in enumerate(rep.records):
            fh.write(f"{k},{r.outcome},{r.end_step},{float(r.end_step * sc.dt - r.lower_bound)!r}\n")
    summary = {"cases": args.cases, "mode": args.mode, "counts": rep.counts,
               "sr": rep.sr, "cr": rep.cr, "dr": rep.dr, "stuck_rate": rep.stuck_rate, "amt": rep.amt}
    _summarize(args, summary, f"evaluate ({args.mode}): {rep.summary()}")


def cmd_navigate(args):
    sc = _scenario(args)
    nets = _load_nets(args, sc)
    _write_run(args, sc)
    rng = np.random.default_rng(args.seed)
    records = navigate(nets, sc, spawn_training_case(sc, args.agents, rng), rng, args.mode)
    uio.write_trajectories(os.path.join(args.out, "trajectory.csv"), records)
    summary = {"outcomes": [r.outcome for r in records], "steps": [r.end_step for r in records]}
    _summarize(args, summary, "navigate: " + ", ".join(f"agent {r.agent} {r.outcome} after {r.end_step} steps"
                                                      for r in records))


def cmd_coverage(args):
    sc = _scenario(args)
    _write_run(args, sc)
    xs, ys, sdb, conn = coverage_map(sc, args.nx, args.ny)
    uio.write_coverage_map(os.path.join(args.out, "coverage.csv"), xs, ys, sdb, conn)
    summary = {"nx": args.nx, "ny": args.ny, "connected_fraction": float(conn.mean())}
    _summarize(args, summary, f"coverage-map: {100 * conn.mean():.1f}% of {args.nx}x{args.ny} cells connected")


COMMANDS = {"bootstrap": cmd_bootstrap, "train": cmd_train, "evaluate": cmd_evaluate,
            "navigate": cmd_navigate, "coverage-map": cmd_coverage}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        COMMANDS[args.command](args)
    except (CliError, uio.ScenarioError, uio.FormatError, InfeasibleScenario, BootstrapFailure,
            TrainingDiverged, OSError, ValueError) as exc:
        print(f"uavnav {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
