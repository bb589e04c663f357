"""Shared agent plumbing: observation scaling, reward transforms, checkpoints, baselines."""
from typing import Dict, Optional, Tuple

import numpy as np

from .. import config as config_mod
from ..config import ScenarioConfig
from ..env import observation_scale
from ..nn import load_checkpoint, save_checkpoint


def transform_reward(r, kind: str):
    """Learner-side reward transform. ``symlog`` compresses rare huge-magnitude steps."""
    if kind == "none":
        return r
    if kind == "symlog":
        return np.sign(r) * np.log1p(np.abs(r))
    raise ValueError(f"unknown reward transform {kind!r}")


class Agent:
    """Common interface every learner and baseline implements.

    ``act`` returns ``(env_action, record)``: ``env_action`` is the ``(N, 3)``
    displacement handed to the environment, ``record`` is whatever the learner
    must store about that decision.
    """

    name = "agent"
    learns = True

    def __init__(self, cfg: ScenarioConfig, seed: int = 0):
        self.cfg = cfg
        self.seed = int(seed)
        self.n = cfg.n_drones
        self.obs_dim = cfg.obs_dim
        self.obs_scale = observation_scale(cfg)
        self.rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([self.seed, 0xA6E7])))
        self.init_rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([self.seed, 0x1A17])))
        self.episodes_done = 0
        self.total_steps = 0
        self.total_updates = 0
        self.planned_steps: Optional[int] = None

    def normalize(self, obs) -> np.ndarray:
        return np.asarray(obs, dtype=float) / self.obs_scale

    def act(self, obs, rng: np.random.Generator, explore: bool = True) -> Tuple[np.ndarray, object]:
        raise NotImplementedError

    def observe(self, obs, record, reward: float, next_obs, done: bool) -> Optional[dict]:
        self.total_steps += 1
        return None

    def end_episode(self) -> None:
        self.episodes_done += 1

    def hyperparams(self) -> dict:
        return {}

    # -- persistence ------------------------------------------------------
    def arrays(self) -> Dict[str, np.ndarray]:
        return {}

    def load_arrays(self, arrays: Dict[str, np.ndarray]) -> None:
        pass

    def extra_state(self) -> dict:
        return {}

    def load_extra_state(self, state: dict) -> None:
        pass

    def save(self, path, harness: Optional[dict] = None) -> None:
        """Write a checkpoint; ``harness`` is opaque run-progress state stored alongside."""
        header = {
            "algo": self.name,
            "seed": self.seed,
            "obs_dim": self.obs_dim,
            "n_drones": self.n,
            "scenario": config_mod.dumps(self.cfg),
            "hyperparams": self.hyperparams(),
            "episodes_done": self.episodes_done,
            "total_steps": self.total_steps,
            "total_updates": self.total_updates,
            "planned_steps": self.planned_steps,
            "rng": self.rng.bit_generator.state,
            "extra": self.extra_state(),
            "harness": harness,
        }
        save_checkpoint(path, self.arrays(), header)

    def restore(self, arrays: Dict[str, np.ndarray], header: dict) -> None:
        if header["obs_dim"] != self.obs_dim or header["n_drones"] != self.n:
            raise ValueError(
                f"checkpoint built for {header['n_drones']} drones / obs {header['obs_dim']}, "
                f"scenario has {self.n} / {self.obs_dim}")
        self.load_arrays(arrays)
        self.episodes_done = header["episodes_done"]
        self.total_steps = header["total_steps"]
        self.total_updates = header["total_updates"]
        self.planned_steps = header["planned_steps"]
        self.rng.bit_generator.state = header["rng"]
        self.load_extra_state(header["extra"])


class RandomPolicy(Agent):
    """Uniform displacement in the ``[-v_max, v_max]^3`` box for every drone."""

    name = "random"
    learns = False

    def act(self, obs, rng, explore=True):
        a = rng.uniform(-self.cfg.v_max, self.cfg.v_max, (self.n, 3))
        return a, a


class HoverPolicy(Agent):
    """Static hover: every drone stays where it is."""

    name = "hover"
    learns = False

    def act(self, obs, rng, explore=True):
        a = np.zeros((self.n, 3))
        return a, a


ALGORITHMS = ("mappo", "maddpg", "madqn", "random", "hover")


def make_agent(algo: str, cfg: ScenarioConfig, seed: int = 0) -> Agent:
    if algo == "mappo":
        from .mappo import MAPPO as cls
    elif algo == "maddpg":
        from .maddpg import MADDPG as cls
    elif algo == "madqn":
        from .madqn import MADQN as cls
    elif algo == "random":
        cls = RandomPolicy
    elif algo == "hover":
        cls = HoverPolicy
    else:
        raise ValueError(f"unknown algorithm {algo!r}; choose from {', '.join(ALGORITHMS)}")
    return cls(cfg, seed)


def load_agent(path, cfg: Optional[ScenarioConfig] = None) -> Agent:
    """Rebuild an agent from a checkpoint; ``cfg`` defaults to the scenario stored in it."""
    arrays, header = load_checkpoint(path)
    stored = config_mod.loads(header["scenario"])
    agent = make_agent(header["algo"], cfg or stored, header["seed"])
    agent.restore(arrays, header)
    return agent
