"""Multi-agent DDPG with a centralised critic.

Each drone owns a deterministic tanh actor mapping the shared observation to
its displacement. One critic scores ``(observation, all actions)`` and is
trained from prioritized replay; each actor climbs the critic with every
drone's action replaced by the current actors' output.
"""
from dataclasses import asdict

import numpy as np

from ..nn import MLP, Adam, clip_by_global_norm, soft_update
from .base import Agent, transform_reward
from .replay import PrioritizedReplayBuffer, linear_schedule


class MADDPG(Agent):
    name = "maddpg"

    def __init__(self, cfg, seed=0):
        super().__init__(cfg, seed)
        p = self.params = cfg.agents.maddpg
        self.v_max = cfg.v_max
        self.actors = [MLP((self.obs_dim, *p.hidden, 3), self.init_rng, head="tanh",
                           head_scale=self.v_max, final_init_scale=0.1) for _ in range(self.n)]
        self.actor_targets = [a.copy() for a in self.actors]
        self.critic = MLP((self.obs_dim + 3 * self.n, *p.hidden, 1), self.init_rng)
        self.critic_target = self.critic.copy()
        self.actor_opts = [Adam(a.params, lr=p.lr) for a in self.actors]
        self.critic_opt = Adam(self.critic.params, lr=p.lr)
        self.buffer = PrioritizedReplayBuffer(p.buffer_size, {
            "obs": ((self.obs_dim,), float),
            "action": ((self.n, 3), float),
            "reward": ((), float),
            "next_obs": ((self.obs_dim,), float),
            "done": ((), float),
        }, alpha=p.alpha, eps=p.priority_eps)

    def hyperparams(self):
        return asdict(self.params)

    def policy(self, x, actors=None) -> np.ndarray:
        """Joint action for normalised observations ``x``: ``(N, 3)`` or ``(B, N, 3)``."""
        actors = actors or self.actors
        return np.stack([a(x) for a in actors], axis=-2)

    def critic_input(self, x, actions) -> np.ndarray:
        flat = np.asarray(actions).reshape(len(x), 3 * self.n) / self.v_max
        return np.concatenate([x, flat], axis=1)

    def act(self, obs, rng, explore=True):
        a = self.policy(self.normalize(obs))
        if explore:
            coins = rng.random(self.n)
            uniform = rng.uniform(-self.v_max, self.v_max, (self.n, 3))
            a = np.where((coins < self.params.epsilon)[:, None], uniform, a)
        return a, a

    def observe(self, obs, record, reward, next_obs, done):
        super().observe(obs, record, reward, next_obs, done)
        r = transform_reward(reward, self.params.reward_transform)
        self.buffer.add(obs=obs, action=record, reward=r, next_obs=next_obs, done=float(done))
        if self.total_steps % self.params.learn_every == 0 and len(self.buffer) >= self.params.batch_size:
            return self.learn()
        return None

    def beta(self) -> float:
        progress = self.total_steps / self.planned_steps if self.planned_steps else 0.0
        return linear_schedule(self.params.beta_start, self.params.beta_end, progress)

    def td_targets(self, reward, next_obs, done) -> np.ndarray:
        """``r + gamma * (1 - done) * Q'(s', mu'(s'))``; terminal rows never bootstrap."""
        x_next = self.normalize(next_obs)
        q_next = self.critic_target(self.critic_input(x_next, self.policy(x_next, self.actor_targets)))[:, 0]
        return reward + self.params.gamma * np.where(done > 0, 0.0, q_next)

    def learn(self, batch_size=None):
        p = self.params
        batch_size = batch_size or p.batch_size
        if len(self.buffer) < batch_size:
            return None
        idx, weights, b = self.buffer.sample(self.rng, batch_size, self.beta())
        x = self.normalize(b["obs"])
        y = self.td_targets(b["reward"], b["next_obs"], b["done"])

        q, cache = self.critic.forward(self.critic_input(x, b["action"]))
        td = q[:, 0] - y
        critic_loss = float(np.sum(weights * td * td)) / batch_size
        grads, _ = self.critic.backward(cache, (2.0 * weights * td / batch_size)[:, None])
        clip_by_global_norm(grads, p.max_grad_norm)
        self.critic_opt.step(self.critic.params, grads)

        outs = [a.forward(x) for a in self.actors]
        joint = np.stack([o for o, _ in outs], axis=1)
        q_pi, cache = self.critic.forward(self.critic_input(x, joint))
        _, dx = self.critic.backward(cache, np.full((batch_size, 1), -1.0 / batch_size))
        for i, (actor, (_, a_cache)) in enumerate(zip(self.actors, outs)):
            lo = self.obs_dim + 3 * i
            g_act, _ = actor.backward(a_cache, dx[:, lo:lo + 3] / self.v_max)
            clip_by_global_norm(g_act, p.max_grad_norm)
            self.actor_opts[i].step(actor.params, g_act)

        soft_update(self.critic_target, self.critic, p.tau)
        for target, actor in zip(self.actor_targets, self.actors):
            soft_update(target, actor, p.tau)
        self.buffer.update_priorities(idx, td)
        self.total_updates += 1
        return {"critic_loss": critic_loss, "actor_loss": -float(np.mean(q_pi))}

    def arrays(self):
        out = {}
        for i in range(self.n):
            out.update(self.actors[i].state_dict(f"actor{i}."))
            out.update(self.actor_targets[i].state_dict(f"actor_t{i}."))
            out.update(self.actor_opts[i].state_dict(f"actor_opt{i}."))
        out.update(self.critic.state_dict("critic."))
        out.update(self.critic_target.state_dict("critic_t."))
        out.update(self.critic_opt.state_dict("critic_opt."))
        out.update(self.buffer.state_dict())
        return out

    def load_arrays(self, arrays):
        for i in range(self.n):
            self.actors[i].load_state_dict(arrays, f"actor{i}.")
            self.actor_targets[i].load_state_dict(arrays, f"actor_t{i}.")
            self.actor_opts[i].load_state_dict(arrays, f"actor_opt{i}.")
        self.critic.load_state_dict(arrays, "critic.")
        self.critic_target.load_state_dict(arrays, "critic_t.")
        self.critic_opt.load_state_dict(arrays, "critic_opt.")
        self.buffer.load_state_dict(arrays)
