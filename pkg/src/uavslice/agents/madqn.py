"""Multi-agent DQN over a discretised displacement grid.

One Q-network is shared by all drones. It reads the global observation and
emits ``N * |A|`` values, one head of ``|A|`` action values per drone; each
drone takes its own epsilon-greedy choice from its head. Training uses
prioritized replay and a soft-updated target network.
"""
from dataclasses import asdict

import numpy as np

from ..nn import MLP, Adam, clip_by_global_norm, soft_update
from .actions import symmetric_table
from .base import Agent, transform_reward
from .replay import PrioritizedReplayBuffer, linear_schedule


def huber(x, delta=1.0):
    a = np.abs(x)
    loss = np.where(a <= delta, 0.5 * x * x, delta * (a - 0.5 * delta))
    grad = np.clip(x, -delta, delta)
    return loss, grad


class MADQN(Agent):
    name = "madqn"

    def __init__(self, cfg, seed=0):
        super().__init__(cfg, seed)
        p = self.params = cfg.agents.madqn
        self.table = symmetric_table(cfg.v_max, p.n_points, 3)
        self.actions = self.table.table
        self.k = self.table.size
        self.q = MLP((self.obs_dim, *p.hidden, self.n * self.k), self.init_rng)
        self.q_target = self.q.copy()
        self.opt = Adam(self.q.params, lr=p.lr)
        self.epsilon = p.eps_start
        self.buffer = PrioritizedReplayBuffer(p.buffer_size, {
            "obs": ((self.obs_dim,), float),
            "action": ((self.n,), np.int64),
            "reward": ((), float),
            "next_obs": ((self.obs_dim,), float),
            "done": ((), float),
        }, alpha=p.alpha, eps=p.priority_eps)

    def hyperparams(self):
        return asdict(self.params)

    def q_values(self, obs) -> np.ndarray:
        out = self.q(self.normalize(obs))
        return out.reshape(out.shape[:-1] + (self.n, self.k))

    def select(self, obs, rng, epsilon: float) -> np.ndarray:
        greedy = np.argmax(self.q_values(obs), axis=-1)
        coins = rng.random(self.n)
        randoms = rng.integers(0, self.k, self.n)
        return np.where(coins < epsilon, randoms, greedy)

    def act(self, obs, rng, explore=True):
        idx = self.select(obs, rng, self.epsilon if explore else 0.0)
        return self.actions[idx], idx

    def observe(self, obs, record, reward, next_obs, done):
        super().observe(obs, record, reward, next_obs, done)
        r = transform_reward(reward, self.params.reward_transform)
        self.buffer.add(obs=obs, action=record, reward=r, next_obs=next_obs, done=float(done))
        if self.total_steps % self.params.learn_every == 0 and len(self.buffer) >= self.params.batch_size:
            return self.learn()
        return None

    def end_episode(self):
        super().end_episode()
        p = self.params
        self.epsilon = max(p.eps_min, p.eps_decay * self.epsilon)

    def beta(self) -> float:
        progress = self.total_steps / self.planned_steps if self.planned_steps else 0.0
        return linear_schedule(self.params.beta_start, self.params.beta_end, progress)

    def td_targets(self, reward, next_obs, done) -> np.ndarray:
        """``r + gamma * (1 - done) * max_a' Q_target(s', a')`` per drone head, shape ``(B, N)``."""
        nxt = self.q_target(self.normalize(next_obs)).reshape(len(reward), self.n, self.k)
        return reward[:, None] + self.params.gamma * (1.0 - done[:, None]) * nxt.max(axis=-1)

    def learn(self, batch_size=None):
        p = self.params
        batch_size = batch_size or p.batch_size
        if len(self.buffer) < batch_size:
            return None
        idx, weights, b = self.buffer.sample(self.rng, batch_size, self.beta())
        target = self.td_targets(b["reward"], b["next_obs"], b["done"])
        out, cache = self.q.forward(self.normalize(b["obs"]))
        q = out.reshape(batch_size, self.n, self.k)
        rows = np.arange(batch_size)[:, None]
        cols = np.arange(self.n)[None, :]
        td = q[rows, cols, b["action"]] - target
        loss, g = huber(td)
        w = weights[:, None] / (batch_size * self.n)
        dq = np.zeros_like(q)
        dq[rows, cols, b["action"]] = w * g
        grads, _ = self.q.backward(cache, dq.reshape(out.shape))
        clip_by_global_norm(grads, p.max_grad_norm)
        self.opt.step(self.q.params, grads)
        soft_update(self.q_target, self.q, p.tau)
        self.buffer.update_priorities(idx, np.abs(td).mean(axis=1))
        self.total_updates += 1
        return {"critic_loss": float(np.sum(w * loss)), "td_abs": float(np.abs(td).mean())}

    def arrays(self):
        out = {}
        out.update(self.q.state_dict("q."))
        out.update(self.q_target.state_dict("qt."))
        out.update(self.opt.state_dict("opt."))
        out.update(self.buffer.state_dict())
        return out

    def load_arrays(self, arrays):
        self.q.load_state_dict(arrays, "q.")
        self.q_target.load_state_dict(arrays, "qt.")
        self.opt.load_state_dict(arrays, "opt.")
        self.buffer.load_state_dict(arrays)

    def extra_state(self):
        return {"epsilon": self.epsilon}

    def load_extra_state(self, state):
        self.epsilon = state["epsilon"]
