"""Experience storage: proportional prioritized replay and an on-policy rollout buffer."""
from typing import Dict, Optional, Tuple

import numpy as np


class PrioritizedReplayBuffer:
    """Ring buffer sampling item ``i`` with probability ``p_i**alpha / sum_j p_j**alpha``.

    New items enter with the current maximum priority so they are seen at
    least once. Importance weights ``(n * P(i))**-beta`` are normalised by
    their batch maximum.
    """

    def __init__(self, capacity: int, fields: Dict[str, Tuple[tuple, type]], alpha: float = 0.6, eps: float = 1e-6):
        if capacity <= 0:
            raise ValueError("capacity must be positive")
        self.capacity = int(capacity)
        self.alpha = float(alpha)
        self.eps = float(eps)
        self.data = {name: np.zeros((self.capacity,) + tuple(shape), dtype=dtype)
                     for name, (shape, dtype) in fields.items()}
        self.prio_alpha = np.zeros(self.capacity)
        self.max_priority = 1.0
        self.next_idx = 0
        self.size = 0

    def __len__(self) -> int:
        return self.size

    def add(self, **item) -> int:
        i = self.next_idx
        for name, arr in self.data.items():
            arr[i] = item[name]
        self.prio_alpha[i] = self.max_priority ** self.alpha
        self.next_idx = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)
        return i

    def probabilities(self) -> np.ndarray:
        p = self.prio_alpha[: self.size]
        return p / p.sum()

    def sample_indices(self, rng: np.random.Generator, batch_size: int) -> np.ndarray:
        cdf = np.cumsum(self.prio_alpha[: self.size])
        u = rng.random(batch_size) * cdf[-1]
        return np.minimum(np.searchsorted(cdf, u, side="right"), self.size - 1)

    def sample(self, rng: np.random.Generator, batch_size: int, beta: float = 0.4):
        if self.size < batch_size:
            raise ValueError(f"buffer holds {self.size} items, need {batch_size}")
        idx = self.sample_indices(rng, batch_size)
        probs = self.prio_alpha[idx] / self.prio_alpha[: self.size].sum()
        weights = (self.size * probs) ** (-beta)
        weights /= weights.max()
        batch = {name: arr[idx] for name, arr in self.data.items()}
        return idx, weights, batch

    def update_priorities(self, idx: np.ndarray, priorities: np.ndarray) -> None:
        priorities = np.abs(np.asarray(priorities, dtype=float)) + self.eps
        if not np.all(np.isfinite(priorities)):
            raise FloatingPointError("non-finite priority")
        self.prio_alpha[idx] = priorities ** self.alpha
        self.max_priority = max(self.max_priority, float(priorities.max()))

    def state_dict(self, prefix: str = "buf.") -> Dict[str, np.ndarray]:
        out = {f"{prefix}{k}": v[: self.size] for k, v in self.data.items()}
        out[f"{prefix}prio_alpha"] = self.prio_alpha[: self.size]
        out[f"{prefix}meta"] = np.array([self.next_idx, self.size])
        out[f"{prefix}max_priority"] = np.array(self.max_priority)
        return out

    def load_state_dict(self, arrays: Dict[str, np.ndarray], prefix: str = "buf.") -> None:
        self.next_idx, self.size = (int(v) for v in arrays[f"{prefix}meta"])
        for k, v in self.data.items():
            v[: self.size] = arrays[f"{prefix}{k}"]
        self.prio_alpha[:] = 0.0
        self.prio_alpha[: self.size] = arrays[f"{prefix}prio_alpha"]
        self.max_priority = float(arrays[f"{prefix}max_priority"])


def linear_schedule(start: float, end: float, progress: float) -> float:
    progress = min(max(progress, 0.0), 1.0)
    return start + (end - start) * progress


class RolloutBuffer:
    """On-policy trajectory storage tagged with the policy version that produced it."""

    def __init__(self, horizon: int, obs_dim: int, n_agents: int, act_dim: int = 3):
        self.horizon = int(horizon)
        self.obs = np.zeros((horizon, obs_dim))
        self.pre_tanh = np.zeros((horizon, n_agents, act_dim))
        self.logprob = np.zeros((horizon, n_agents))
        self.value = np.zeros(horizon)
        self.reward = np.zeros(horizon)
        self.done = np.zeros(horizon)
        self.ptr = 0
        self.version: Optional[int] = None

    def __len__(self) -> int:
        return self.ptr

    @property
    def full(self) -> bool:
        return self.ptr >= self.horizon

    def add(self, obs, pre_tanh, logprob, value, reward, done, version: int) -> None:
        if self.full:
            raise ValueError("rollout buffer is full")
        if self.ptr == 0:
            self.version = version
        elif version != self.version:
            raise ValueError("rollout mixes transitions from different policy versions")
        i = self.ptr
        self.obs[i], self.pre_tanh[i], self.logprob[i] = obs, pre_tanh, logprob
        self.value[i], self.reward[i], self.done[i] = value, reward, float(done)
        self.ptr += 1

    def clear(self) -> None:
        self.ptr = 0
        self.version = None

    def state_dict(self, prefix: str = "roll.") -> Dict[str, np.ndarray]:
        n = self.ptr
        return {
            f"{prefix}obs": self.obs[:n], f"{prefix}pre_tanh": self.pre_tanh[:n], f"{prefix}logprob": self.logprob[:n],
            f"{prefix}value": self.value[:n], f"{prefix}reward": self.reward[:n], f"{prefix}done": self.done[:n],
            f"{prefix}meta": np.array([n, -1 if self.version is None else self.version]),
        }

    def load_state_dict(self, arrays: Dict[str, np.ndarray], prefix: str = "roll.") -> None:
        n, version = (int(v) for v in arrays[f"{prefix}meta"])
        self.ptr = n
        self.version = None if version < 0 else version
        for name in ("obs", "pre_tanh", "logprob", "value", "reward", "done"):
            getattr(self, name)[:n] = arrays[f"{prefix}{name}"]
