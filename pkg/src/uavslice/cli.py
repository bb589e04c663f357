"""Command line: ``python -m uavslice {run,eval,stats,validate-config,gradcheck}``.

Exit status is 0 on success, 1 for usage or configuration errors, 2 when a
run fails at runtime.
"""
import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import config as config_mod
from .agents.base import ALGORITHMS, load_agent
from .config import ConfigError, reduced_rural
from .harness import (HarnessError, RunManifest, evaluate_policy, export_user_statistics, format_report,
                      run_training)
from .nn import MLP, finite_difference_check

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def resolve_scenario(name: str, steps=None, seed=None):
    """Preset name or scenario file, with optional episode-length and seed overrides."""
    if name in ("reduced", "reduced-rural"):
        cfg = reduced_rural()
    else:
        cfg = config_mod.load_scenario(name)
    changes = {}
    if steps is not None:
        changes["max_steps"] = steps
    if seed is not None:
        changes["seed"] = seed
    return replace(cfg, **changes) if changes else cfg


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="uavslice", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def scenario_flags(sp, default="rural"):
        sp.add_argument("--scenario", default=default,
                        help=f"urban, rural, reduced, or a path to a scenario file (default: {default or 'as trained'})")
        sp.add_argument("--steps", type=int, help="override the episode length")

    r = sub.add_parser("run", help="train a learner (or roll out a baseline) for one or more seeds")
    scenario_flags(r)
    r.add_argument("--algo", choices=ALGORITHMS, default="madqn")
    r.add_argument("--seed", type=int, nargs="+", default=[0])
    r.add_argument("--episodes", type=int, default=1000)
    r.add_argument("--out", default="runs/default")
    r.add_argument("--dump-trajectory", action="store_true", help="write trajectory.jsonl (needed by `stats`)")
    r.add_argument("--resume", action="store_true", help="continue from the checkpoints in --out")
    r.add_argument("--checkpoint-every", type=int, default=10, metavar="EPISODES")

    e = sub.add_parser("eval", help="greedy evaluation against the random and hover baselines")
    scenario_flags(e, default=None)
    e.add_argument("--out", required=True, help="run directory produced by `run`")
    e.add_argument("--seed", type=int, nargs="+", help="seeds to evaluate (default: all in the run)")
    e.add_argument("--episodes", type=int, default=10)

    s = sub.add_parser("stats", help="recount per-class user statistics from trajectory dumps")
    s.add_argument("--out", required=True)

    v = sub.add_parser("validate-config", help="parse and validate a scenario, then print it")
    scenario_flags(v)

    g = sub.add_parser("gradcheck", help="finite-difference check of actor, critic and Q networks")
    scenario_flags(g)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--tolerance", type=float, default=1e-4)
    return p


def _seed_dirs(out: Path):
    dirs = sorted(out.glob("seed_*"), key=lambda d: int(d.name.split("_")[1]))
    if not dirs:
        raise HarnessError(f"no seed_* directories under {out}")
    return dirs


def cmd_run(args) -> int:
    if args.episodes < 1:
        raise UsageError("--episodes must be at least 1")
    cfg = resolve_scenario(args.scenario, args.steps)
    manifest = RunManifest(cfg, args.algo, tuple(args.seed), args.episodes, args.out,
                           args.dump_trajectory, args.checkpoint_every)

    def progress(seed, ep, row):
        print(f"seed {seed} episode {ep + 1}/{args.episodes} return {row['return']:.1f}", flush=True)

    run_training(manifest, resume=args.resume, progress=progress)
    print(f"artifacts written to {args.out}")
    return EXIT_OK


def cmd_eval(args) -> int:
    out = Path(args.out)
    agents = {}
    for d in _seed_dirs(out):
        seed = int(d.name.split("_")[1])
        if args.seed and seed not in args.seed:
            continue
        ckpt = d / "checkpoint.npz"
        if not ckpt.exists():
            raise HarnessError(f"{ckpt} is missing")
        cfg = resolve_scenario(args.scenario, args.steps) if args.scenario else None
        agents[seed] = load_agent(ckpt, cfg)
    if not agents:
        raise HarnessError("no matching seeds to evaluate")
    report = evaluate_policy(agents, next(iter(agents.values())).cfg, args.episodes)
    (out / "eval.json").write_text(json.dumps(report, indent=2, sort_keys=True, default=str) + "\n")
    print(format_report(report))
    return EXIT_OK


def cmd_stats(args) -> int:
    for d in _seed_dirs(Path(args.out)):
        stored = json.loads((d / "stats.json").read_text()) if (d / "stats.json").exists() else {}
        users, table = export_user_statistics(d, stored.get("scenario", ""))
        print(f"[{d.name}]")
        print(table)
        if stored and users.to_json() != stored.get("users"):
            print("warning: recount differs from stats.json", file=sys.stderr)
            return EXIT_RUNTIME
    return EXIT_OK


def cmd_validate(args) -> int:
    cfg = resolve_scenario(args.scenario, args.steps)
    sys.stdout.write(config_mod.dumps(cfg))
    print(f"# ok: {cfg.scenario_kind}, {cfg.n_drones} drones, observation length {cfg.obs_dim}")
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    cfg = resolve_scenario(args.scenario, args.steps)
    rng = np.random.default_rng(args.seed)
    hidden = cfg.agents.mappo.hidden
    nets = {
        "actor": MLP((cfg.obs_dim, *hidden, 3), rng, head="tanh", head_scale=cfg.v_max),
        "critic": MLP((cfg.obs_dim + 3 * cfg.n_drones, *cfg.agents.maddpg.hidden, 1), rng),
        "q": MLP((cfg.obs_dim, *cfg.agents.madqn.hidden, cfg.n_drones * cfg.agents.madqn.n_points ** 3), rng),
    }
    ok = True
    for name, net in nets.items():
        rep = finite_difference_check(net, args.tolerance, rng=np.random.default_rng(args.seed + 1))
        verdict = "PASS" if rep.passed else "FAIL"
        ok &= rep.passed
        print(f"{name:<7} max relative error {rep.max_rel_error:.3e} (threshold {rep.tolerance:.0e}, "
              f"{rep.n_checked} probes, {rep.n_skipped} skipped at ReLU kinks) {verdict}")
    return EXIT_OK if ok else EXIT_RUNTIME


COMMANDS = {"run": cmd_run, "eval": cmd_eval, "stats": cmd_stats, "validate-config": cmd_validate,
            "gradcheck": cmd_gradcheck}


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, UsageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (HarnessError, OSError, ValueError, FloatingPointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
