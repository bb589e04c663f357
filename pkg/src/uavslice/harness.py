"""Seeded experiment runs, evaluation against the built-in baselines, and exports.

Layout of one run directory::

    <out>/manifest.json
    <out>/seed_<s>/metrics.csv        one row per episode, fixed column order
    <out>/seed_<s>/trajectory.jsonl   one JSON object per step (with --dump-trajectory)
    <out>/seed_<s>/stats.json         users generated / served at least once, per class
    <out>/seed_<s>/timing.csv         wall time and peak memory (not reproducible)
    <out>/seed_<s>/checkpoint.npz     latest learner state plus run progress

Every ``metrics.csv`` row is computed from exactly the per-step records that
go into ``trajectory.jsonl``, so the CSV can be rebuilt from the dump.
"""
import csv
import io
import json
import logging
import resource
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import stats as sps

from . import __version__
from . import config as config_mod
from .agents.base import Agent, load_agent, make_agent
from .config import CLASSES, ScenarioConfig
from .env import UAVSliceEnv
from .nn import load_checkpoint
from .rewards import FIELDS, R_EFF_WARN
from .state import VIOLATIONS

log = logging.getLogger("uavslice")

CLASS_NAMES = tuple(c.name for c in CLASSES)
METRIC_COLUMNS = (
    ("episode", "steps", "return")
    + tuple(f"mean_{f}" for f in FIELDS if f != "total")
    + tuple(f"{q}_{c}" for c in CLASS_NAMES for q in ("latency_ms", "throughput_mbps", "sinr_db"))
    + tuple(f"served_frac_{c}" for c in CLASS_NAMES)
    + ("battery_min", "battery_mean")
    + tuple(f"viol_{v}" for v in VIOLATIONS)
    + ("updates",)
)
TIMING_COLUMNS = ("episode", "wall_s", "wall_ms_per_step", "peak_rss_mb")
EVAL_SALT = 0xE7A1


class HarnessError(RuntimeError):
    """A run could not start or resume (bad output directory, missing artifacts)."""


@dataclass(frozen=True)
class RunManifest:
    scenario: ScenarioConfig
    algo: str
    seeds: Tuple[int, ...] = (0,)
    episodes: int = 1000
    out_dir: str = "runs/default"
    dump_trajectory: bool = False
    checkpoint_every: int = 10
    version: str = __version__

    def to_json(self) -> dict:
        return {
            "algo": self.algo, "seeds": list(self.seeds), "episodes": self.episodes,
            "dump_trajectory": self.dump_trajectory, "checkpoint_every": self.checkpoint_every,
            "version": self.version, "scenario": config_mod.dumps(self.scenario),
        }

    @classmethod
    def from_json(cls, data: dict, out_dir: str) -> "RunManifest":
        return cls(config_mod.loads(data["scenario"]), data["algo"], tuple(data["seeds"]), data["episodes"],
                   out_dir, data["dump_trajectory"], data["checkpoint_every"], data["version"])

    def seed_dir(self, seed: int) -> Path:
        return Path(self.out_dir) / f"seed_{seed}"


def episode_seed(seed: int, episode: int, salt: Optional[int] = None) -> int:
    key = [seed, episode] if salt is None else [seed, salt, episode]
    return int(np.random.SeedSequence(key).generate_state(1)[0])


def _num(x):
    """JSON-safe float: NaN becomes null, numpy scalars become Python numbers."""
    x = float(x)
    return None if np.isnan(x) else x


def step_record(episode: int, env: UAVSliceEnv, out, prev_violations: Dict[str, int], updates: int) -> dict:
    st = env.state
    info = out.info
    rec = {
        "episode": episode,
        "t": int(info["t"]),
        "positions": st.drone_pos.tolist(),
        "battery": st.battery.tolist(),
        "charging": st.charging.tolist(),
        "reward": {k: float(v) for k, v in out.reward.as_dict().items()},
        "class_counts": [int(c) for c in info["class_counts"]],
        "class_means": [[_num(v) for v in row] for row in np.asarray(info["class_means"])],
        "served_ids": [int(i) for i in info["served_ids"]],
        "violations": {k: int(info["violations"][k] - prev_violations[k]) for k in VIOLATIONS},
        "updates": int(updates),
    }
    if info["t"] == 0:
        rec["user_classes"] = st.user_class.tolist()
    return rec


def episode_row(records: Sequence[dict]) -> dict:
    """One ``metrics.csv`` row from an episode's per-step records."""
    row = {"episode": records[0]["episode"], "steps": len(records)}
    total = 0.0
    sums = {f: 0.0 for f in FIELDS}
    for r in records:
        for f in FIELDS:
            sums[f] += r["reward"][f]
        total += r["reward"]["total"]
    row["return"] = total
    for f in FIELDS:
        if f != "total":
            row[f"mean_{f}"] = sums[f] / len(records)
    for k, c in enumerate(CLASS_NAMES):
        for j, q in enumerate(("latency_ms", "throughput_mbps", "sinr_db")):
            vals = [r["class_means"][k][j] for r in records if r["class_counts"][k] > 0]
            row[f"{q}_{c}"] = sum(vals) / len(vals) if vals else None
    gen, hit = user_counts(records)
    for k, c in enumerate(CLASS_NAMES):
        row[f"served_frac_{c}"] = float(hit[k]) / float(gen[k]) if gen[k] else None
    levels = [b for r in records for b in r["battery"]]
    row["battery_min"] = min(levels)
    row["battery_mean"] = sum(levels) / len(levels)
    for v in VIOLATIONS:
        row[f"viol_{v}"] = sum(r["violations"][v] for r in records)
    row["updates"] = records[-1]["updates"]
    return row


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def format_row(row: dict, columns=METRIC_COLUMNS) -> str:
    buf = io.StringIO()
    csv.writer(buf, lineterminator="\n").writerow([_fmt(row[c]) for c in columns])
    return buf.getvalue()


def user_counts(records: Sequence[dict]) -> Tuple[np.ndarray, np.ndarray]:
    """Per-class (generated, served at least once) for one episode's records."""
    classes = np.asarray(records[0]["user_classes"], dtype=int)
    served = np.zeros(len(classes), dtype=bool)
    for r in records:
        served[r["served_ids"]] = True
    gen = np.bincount(classes, minlength=3)
    hit = np.bincount(classes[served], minlength=3)
    return gen, hit


@dataclass
class UserServiceStats:
    generated: List[int] = field(default_factory=lambda: [0, 0, 0])
    served: List[int] = field(default_factory=lambda: [0, 0, 0])

    def add(self, gen, hit) -> None:
        self.generated = [a + int(b) for a, b in zip(self.generated, gen)]
        self.served = [a + int(b) for a, b in zip(self.served, hit)]

    def fraction(self, k: int) -> float:
        return self.served[k] / self.generated[k] if self.generated[k] else 0.0

    def to_json(self) -> dict:
        return {c: {"total_generated": g, "served_at_least_once": s}
                for c, g, s in zip(CLASS_NAMES, self.generated, self.served)}

    @classmethod
    def from_json(cls, data: dict) -> "UserServiceStats":
        return cls([data[c]["total_generated"] for c in CLASS_NAMES],
                   [data[c]["served_at_least_once"] for c in CLASS_NAMES])

    def table(self, scenario: str) -> str:
        lines = [f"{'User type / scenario':<26}{'Total generated':>17}{'Served at least once':>22}"]
        for c, g, s in zip(CLASS_NAMES, self.generated, self.served):
            lines.append(f"{f'Type {c} ({scenario})':<26}{g:>17}{s:>22}")
        return "\n".join(lines)


def run_episode(env: UAVSliceEnv, agent: Agent, seed: int, episode: int, explore: bool = True,
                learn: bool = True, warn: bool = True) -> List[dict]:
    """Play one episode and return its per-step records."""
    obs = env.reset(seed)
    prev = dict(env.state.violations)
    records = []
    warned = 0
    while True:
        action, record = agent.act(obs, env.rng, explore)
        out = env.step(action)
        if learn and agent.learns:
            agent.observe(obs, record, out.reward.total, out.observation, out.done)
        if abs(out.reward.r_eff) > R_EFF_WARN:
            warned += 1
        records.append(step_record(episode, env, out, prev, agent.total_updates))
        prev = dict(out.info["violations"])
        obs = out.observation
        if out.done:
            break
    if learn and agent.learns:
        agent.end_episode()
    if warned and warn:
        log.warning("episode %d: |r_eff| exceeded %.0e on %d step(s) (near-zero battery depletion)",
                    episode, R_EFF_WARN, warned)
    return records


def _check_writable(path: Path) -> None:
    try:
        path.mkdir(parents=True, exist_ok=True)
        probe = path / ".write_probe"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise HarnessError(f"output directory {path} is not writable: {exc}") from None


def _truncate_lines(path: Path, keep) -> None:
    if not path.exists():
        return
    lines = path.read_text().splitlines(keepends=True)
    path.write_text("".join(line for i, line in enumerate(lines) if keep(i, line)))


def _resume_state(manifest: RunManifest, seed: int):
    """Agent, finished-episode count and user stats from the seed's checkpoint (or fresh)."""
    d = manifest.seed_dir(seed)
    ckpt = d / "checkpoint.npz"
    if not ckpt.exists():
        return None
    _, header = load_checkpoint(ckpt)
    if header.get("algo") != manifest.algo or header.get("seed") != seed:
        raise HarnessError(f"{ckpt} belongs to a different run ({header.get('algo')}, seed {header.get('seed')})")
    agent = load_agent(ckpt, manifest.scenario)
    prog = header["harness"]
    done = prog["episodes_done"]
    _truncate_lines(d / "metrics.csv", lambda i, _: i <= done)
    _truncate_lines(d / "timing.csv", lambda i, _: i <= done)
    _truncate_lines(d / "trajectory.jsonl", lambda i, line: json.loads(line)["episode"] < done)
    return agent, done, UserServiceStats.from_json(prog["users"])


def run_seed(manifest: RunManifest, seed: int, resume: bool = False, progress=None) -> dict:
    cfg = manifest.scenario
    d = manifest.seed_dir(seed)
    _check_writable(d)
    env = UAVSliceEnv(cfg)
    resumed = _resume_state(manifest, seed) if resume else None
    if resumed:
        agent, start, users = resumed
    else:
        agent, start, users = make_agent(manifest.algo, cfg, seed), 0, UserServiceStats()
        (d / "metrics.csv").write_text(",".join(METRIC_COLUMNS) + "\n")
        (d / "timing.csv").write_text(",".join(TIMING_COLUMNS) + "\n")
        traj = d / "trajectory.jsonl"
        if manifest.dump_trajectory:
            traj.write_text("")
        elif traj.exists():
            traj.unlink()
    agent.planned_steps = manifest.episodes * cfg.max_steps

    def checkpoint(done):
        agent.save(d / "checkpoint.npz", harness={"episodes_done": done, "users": users.to_json()})

    rows = []
    for ep in range(start, manifest.episodes):
        t0 = time.perf_counter()
        records = run_episode(env, agent, episode_seed(seed, ep), ep)
        wall = time.perf_counter() - t0
        row = episode_row(records)
        rows.append(row)
        users.add(*user_counts(records))
        with open(d / "metrics.csv", "a") as fh:
            fh.write(format_row(row))
        peak = resource.getrusage(resource.RUSAGE_SELF).ru_maxrss / 1024.0
        with open(d / "timing.csv", "a") as fh:
            fh.write(format_row({"episode": ep, "wall_s": wall, "wall_ms_per_step": 1e3 * wall / len(records),
                                 "peak_rss_mb": peak}, TIMING_COLUMNS))
        if manifest.dump_trajectory:
            with open(d / "trajectory.jsonl", "a") as fh:
                for r in records:
                    fh.write(json.dumps(r, sort_keys=True) + "\n")
        if progress:
            progress(seed, ep, row)
        if manifest.checkpoint_every and (ep + 1) % manifest.checkpoint_every == 0:
            checkpoint(ep + 1)
    checkpoint(manifest.episodes)
    summary = {"scenario": cfg.scenario_kind, "algo": manifest.algo, "seed": seed,
               "episodes": manifest.episodes, "users": users.to_json()}
    (d / "stats.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return {"seed": seed, "agent": agent, "rows": rows, "users": users}


def run_training(manifest: RunManifest, resume: bool = False, progress=None) -> List[dict]:
    out = Path(manifest.out_dir)
    _check_writable(out)
    (out / "manifest.json").write_text(json.dumps(manifest.to_json(), indent=2, sort_keys=True) + "\n")
    return [run_seed(manifest, s, resume, progress) for s in manifest.seeds]


def read_metrics(path) -> List[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def read_trajectory(path) -> Dict[int, List[dict]]:
    by_episode: Dict[int, List[dict]] = {}
    with open(path) as fh:
        for line in fh:
            r = json.loads(line)
            by_episode.setdefault(r["episode"], []).append(r)
    return by_episode


def export_user_statistics(seed_dir, scenario: str = "") -> Tuple[UserServiceStats, str]:
    """Recount Table-VIII style user statistics from a run's trajectory dump."""
    path = Path(seed_dir) / "trajectory.jsonl"
    if not path.exists():
        raise HarnessError(f"{path} not found; rerun with --dump-trajectory to record per-step service")
    users = UserServiceStats()
    for records in read_trajectory(path).values():
        users.add(*user_counts(records))
    return users, users.table(scenario or "run")


# ---------------------------------------------------------------------------
# evaluation

def evaluate_agent(cfg: ScenarioConfig, agent: Agent, seed: int, episodes: int) -> dict:
    """Greedy rollouts on the evaluation episode stream of ``seed`` (no learning)."""
    env = UAVSliceEnv(cfg)
    returns, energy = [], []
    qos = np.zeros((3, 3))
    qos_n = np.zeros(3)
    users = UserServiceStats()
    for k in range(episodes):
        records = run_episode(env, agent, episode_seed(seed, k, EVAL_SALT), k, explore=False, learn=False,
                              warn=False)
        returns.append(sum(r["reward"]["total"] for r in records))
        energy.append(sum(r["reward"]["e_total"] for r in records))
        users.add(*user_counts(records))
        for r in records:
            for c in range(3):
                if r["class_counts"][c] > 0:
                    qos[c] += r["class_means"][c]
                    qos_n[c] += 1
    means = np.where(qos_n[:, None] > 0, qos / np.maximum(qos_n, 1)[:, None], np.nan)
    return {
        "returns": returns,
        "mean_return": float(np.mean(returns)),
        "std_return": float(np.std(returns)),
        "mean_energy": float(np.mean(energy)),
        "qos": {c: {"latency_ms": _num(m[0]), "throughput_mbps": _num(m[1]), "sinr_db": _num(m[2])}
                for c, m in zip(CLASS_NAMES, means)},
        "users": users.to_json(),
        "served_fraction": {c: users.fraction(k) for k, c in enumerate(CLASS_NAMES)},
    }


def sign_test(wins: int, n: int) -> float:
    """One-sided p-value that the trained policy wins more often than chance."""
    return float(sps.binomtest(wins, n, 0.5, alternative="greater").pvalue) if n else 1.0


def evaluate_policy(agents: Dict[int, Agent], cfg: ScenarioConfig, episodes: int = 10) -> dict:
    """Compare trained agents (one per seed) with the random and hover baselines.

    Each seed is evaluated on its own episode stream; the baselines replay the
    same streams, so per-seed comparisons use common random numbers.
    """
    report = {"per_seed": {}, "baselines": ("random", "hover")}
    for seed, agent in agents.items():
        entry = {"trained": evaluate_agent(cfg, agent, seed, episodes)}
        for name in report["baselines"]:
            entry[name] = evaluate_agent(cfg, make_agent(name, cfg, seed), seed, episodes)
        report["per_seed"][seed] = entry
    seeds = list(agents)
    summary = {"trained": float(np.mean([report["per_seed"][s]["trained"]["mean_return"] for s in seeds]))}
    for name in report["baselines"]:
        summary[name] = float(np.mean([report["per_seed"][s][name]["mean_return"] for s in seeds]))
        wins = sum(report["per_seed"][s]["trained"]["mean_return"] > report["per_seed"][s][name]["mean_return"]
                   for s in seeds)
        summary[f"wins_vs_{name}"] = int(wins)
        summary[f"sign_p_vs_{name}"] = sign_test(wins, len(seeds))
    summary["n_seeds"] = len(seeds)
    report["summary"] = summary
    return report


def format_report(report: dict) -> str:
    s = report["summary"]
    lines = [f"{'seed':>6}{'trained':>16}{'random':>16}{'hover':>16}"]
    for seed, e in report["per_seed"].items():
        lines.append(f"{seed:>6}{e['trained']['mean_return']:>16.1f}{e['random']['mean_return']:>16.1f}"
                     f"{e['hover']['mean_return']:>16.1f}")
    lines.append(f"{'mean':>6}{s['trained']:>16.1f}{s['random']:>16.1f}{s['hover']:>16.1f}")
    for name in report["baselines"]:
        lines.append(f"trained beats {name} on {s[f'wins_vs_{name}']}/{s['n_seeds']} seeds "
                     f"(sign test p = {s[f'sign_p_vs_{name}']:.3g})")
    return "\n".join(lines)
