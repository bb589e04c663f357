#!/usr/bin/env python3
"""Break down baseline episode returns term by term.

Useful for seeing how much of an episode's return comes from the efficiency
term at the very first step, when batteries are still full and any motion is
divided by a near-zero depletion:

    python scripts/reward_probe.py --scenario reduced --episodes 5
"""
import argparse

import numpy as np

from uavslice.agents import make_agent
from uavslice.cli import resolve_scenario
from uavslice.env import UAVSliceEnv
from uavslice.harness import EVAL_SALT, episode_seed, run_episode
from uavslice.rewards import FIELDS


class FirstStepHover:
    """Wraps a policy so that it hovers on step 0 only."""

    def __init__(self, inner):
        self.inner, self.t = inner, 0
        self.learns, self.total_updates = False, 0

    def act(self, obs, rng, explore=True):
        a, rec = self.inner.act(obs, rng, explore)
        self.t += 1
        return (np.zeros_like(a) if self.t == 1 else a), rec


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--scenario", default="reduced")
    ap.add_argument("--steps", type=int)
    ap.add_argument("--episodes", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    cfg = resolve_scenario(args.scenario, args.steps)
    env = UAVSliceEnv(cfg)
    policies = {
        "hover": lambda: make_agent("hover", cfg, args.seed),
        "random": lambda: make_agent("random", cfg, args.seed),
        "random, hover at t=0": lambda: FirstStepHover(make_agent("random", cfg, args.seed)),
    }
    cols = [f for f in FIELDS if f != "r_energy"]
    print(f"{'policy':<22}" + "".join(f"{c:>14}" for c in cols) + f"{'r_eff@t0':>14}")
    for name, build in policies.items():
        sums = dict.fromkeys(cols, 0.0)
        first = 0.0
        for k in range(args.episodes):
            agent = build()
            recs = run_episode(env, agent, episode_seed(args.seed, k, EVAL_SALT), k, explore=False, learn=False,
                               warn=False)
            for r in recs:
                for c in cols:
                    sums[c] += r["reward"][c] / args.episodes
            first += recs[0]["reward"]["r_eff"] / args.episodes
        print(f"{name:<22}" + "".join(f"{sums[c]:>14.1f}" for c in cols) + f"{first:>14.1f}")


if __name__ == "__main__":
    main()
