#!/usr/bin/env python3
"""Desk-scale learning check on the reduced rural world (2 drones, 20 users, 200 steps).

Trains MADQN for a fixed number of episodes and MAPPO for a fixed number of
policy updates on five seeds, then compares greedy returns with the random
and hover baselines and reports the per-class served-at-least-once fractions.

    python scripts/reduced_comparison.py --out runs/reduced
"""
import argparse
import json
import math
import time
from pathlib import Path

from uavslice.config import reduced_rural
from uavslice.harness import RunManifest, UserServiceStats, evaluate_policy, format_report, run_training


def served_fractions(report):
    total = UserServiceStats()
    for entry in report["per_seed"].values():
        s = UserServiceStats.from_json(entry["trained"]["users"])
        total.add(s.generated, s.served)
    return {c: total.fraction(k) for k, c in enumerate("ABC")}


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2, 3, 4])
    ap.add_argument("--madqn-episodes", type=int, default=150)
    ap.add_argument("--mappo-updates", type=int, default=100)
    ap.add_argument("--eval-episodes", type=int, default=10)
    ap.add_argument("--algo", nargs="+", default=["madqn", "mappo"], choices=["madqn", "mappo", "maddpg"])
    ap.add_argument("--out", default="runs/reduced")
    args = ap.parse_args()

    cfg = reduced_rural()
    summary = {}
    for algo in args.algo:
        if algo == "mappo":
            episodes = math.ceil(args.mappo_updates * cfg.agents.mappo.horizon / cfg.max_steps)
        else:
            episodes = args.madqn_episodes
        out = Path(args.out) / algo
        t0 = time.perf_counter()
        runs = run_training(RunManifest(cfg, algo, tuple(args.seeds), episodes, str(out)))
        wall = time.perf_counter() - t0
        report = evaluate_policy({r["seed"]: r["agent"] for r in runs}, cfg, args.eval_episodes)
        (out / "eval.json").write_text(json.dumps(report, indent=2, sort_keys=True, default=str) + "\n")
        fr = served_fractions(report)
        summary[algo] = {**report["summary"], "train_minutes": wall / 60, "served_fraction": fr}
        print(f"== {algo}: {episodes} episodes per seed, {wall / 60:.1f} min")
        print(format_report(report))
        print("served at least once: " + ", ".join(f"{c} {v:.3f}" for c, v in fr.items()))
    Path(args.out).mkdir(parents=True, exist_ok=True)
    (Path(args.out) / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")


if __name__ == "__main__":
    main()
