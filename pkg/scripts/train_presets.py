#!/usr/bin/env python3
"""Train one or more learners on the full urban/rural presets.

    python scripts/train_presets.py --scenario rural --algo madqn mappo --seeds 0 1 2 --episodes 1000

Each (scenario, algo) pair gets its own run directory under ``--out`` with the
usual harness artifacts, followed by a greedy evaluation against the random
and hover baselines (written to ``eval.json`` next to the seeds).
"""
import argparse
import json
from pathlib import Path

from uavslice.cli import resolve_scenario
from uavslice.harness import RunManifest, evaluate_policy, format_report, run_training


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--scenario", nargs="+", default=["rural"])
    ap.add_argument("--algo", nargs="+", default=["madqn"], choices=["mappo", "maddpg", "madqn"])
    ap.add_argument("--seeds", type=int, nargs="+", default=[0])
    ap.add_argument("--episodes", type=int, default=1000)
    ap.add_argument("--steps", type=int, help="episode length override")
    ap.add_argument("--eval-episodes", type=int, default=10)
    ap.add_argument("--out", default="runs/presets")
    ap.add_argument("--dump-trajectory", action="store_true")
    args = ap.parse_args()

    for scenario in args.scenario:
        cfg = resolve_scenario(scenario, args.steps)
        for algo in args.algo:
            out = Path(args.out) / f"{cfg.scenario_kind}_{algo}"
            manifest = RunManifest(cfg, algo, tuple(args.seeds), args.episodes, str(out), args.dump_trajectory)
            runs = run_training(manifest, progress=lambda s, ep, row: print(
                f"[{scenario}/{algo}] seed {s} ep {ep + 1}/{args.episodes} return {row['return']:.1f}", flush=True))
            report = evaluate_policy({r["seed"]: r["agent"] for r in runs}, cfg, args.eval_episodes)
            (out / "eval.json").write_text(json.dumps(report, indent=2, sort_keys=True, default=str) + "\n")
            print(f"== {scenario} / {algo}")
            print(format_report(report))


if __name__ == "__main__":
    main()
