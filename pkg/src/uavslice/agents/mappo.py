"""Multi-agent PPO: per-drone Gaussian actors and one shared value critic.

Each actor outputs the mean of a diagonal Gaussian over a pre-squash action
``u``; the environment receives ``v_max * tanh(u)``. The rollout stores ``u``
itself, so the log-probability of a stored action is exact under any later
policy. Advantages come from GAE over the shared team reward.
"""
from dataclasses import asdict

import numpy as np

from ..nn import MLP, Adam, clip_by_global_norm
from .base import Agent, transform_reward
from .replay import RolloutBuffer

LOG_2PI = np.log(2.0 * np.pi)
LOG_STD_BOUNDS = (-8.0, 2.0)


def gaussian_logprob(u, mu, log_std) -> np.ndarray:
    """Sum over the last axis of ``log N(u; mu, exp(log_std))``."""
    z = (u - mu) * np.exp(-log_std)
    return np.sum(-0.5 * z * z - log_std - 0.5 * LOG_2PI, axis=-1)


def squash_correction(u, v_max: float) -> np.ndarray:
    """``sum log |d(v_max tanh u)/du|``, computed without cancelling near saturation."""
    log_dtanh = 2.0 * (np.log(2.0) - u - np.logaddexp(0.0, -2.0 * u))
    return np.sum(log_dtanh + np.log(v_max), axis=-1)


def squashed_logprob(u, mu, log_std, v_max: float) -> np.ndarray:
    return gaussian_logprob(u, mu, log_std) - squash_correction(u, v_max)


def compute_advantages(rewards, values, dones, last_value: float, gamma: float, lam: float):
    """Generalised advantage estimates and the matching value targets.

    ``dones[t]`` marks that the episode ended after step ``t``; no value is
    bootstrapped across it.
    """
    rewards = np.asarray(rewards, dtype=float)
    values = np.asarray(values, dtype=float)
    dones = np.asarray(dones, dtype=float)
    T = len(rewards)
    adv = np.zeros(T)
    running = 0.0
    for t in reversed(range(T)):
        next_value = last_value if t == T - 1 else values[t + 1]
        live = 1.0 - dones[t]
        delta = rewards[t] + gamma * next_value * live - values[t]
        running = delta + gamma * lam * live * running
        adv[t] = running
    return adv, adv + values


def clipped_surrogate(ratio, adv, clip: float):
    """PPO clipped objective (to be maximised) and its derivative w.r.t. ``ratio``."""
    unclipped = ratio * adv
    clipped = np.clip(ratio, 1.0 - clip, 1.0 + clip) * adv
    objective = np.minimum(unclipped, clipped)
    # the gradient vanishes exactly where the clipped branch is the active minimum
    active = ~(((adv > 0) & (ratio > 1.0 + clip)) | ((adv < 0) & (ratio < 1.0 - clip)))
    return objective, np.where(active, adv, 0.0)


class RunningNorm:
    """Running mean and variance of value targets (the critic regresses normalised returns)."""

    def __init__(self):
        self.count = 0.0
        self.mean = 0.0
        self.var = 1.0

    def update(self, x) -> None:
        x = np.asarray(x, dtype=float)
        n, m, v = len(x), float(x.mean()), float(x.var())
        total = self.count + n
        delta = m - self.mean
        self.var = (self.count * self.var + n * v + delta * delta * self.count * n / total) / total
        self.mean += delta * n / total
        self.count = total

    @property
    def std(self) -> float:
        return float(np.sqrt(self.var)) + 1e-8

    def normalize(self, x):
        return (np.asarray(x) - self.mean) / self.std

    def denormalize(self, x):
        return np.asarray(x) * self.std + self.mean


class MAPPO(Agent):
    name = "mappo"

    def __init__(self, cfg, seed=0):
        super().__init__(cfg, seed)
        p = self.params = cfg.agents.mappo
        self.v_max = cfg.v_max
        # with state_std the head emits (mean, log-std offset); otherwise log-std is a free vector
        head = 6 if p.state_std else 3
        self.actors = [MLP((self.obs_dim, *p.hidden, head), self.init_rng, final_init_scale=0.01)
                       for _ in range(self.n)]
        self.log_std = np.full((self.n, 3), p.init_log_std)
        self.critic = MLP((self.obs_dim, *p.hidden, 1), self.init_rng)
        self.actor_opts = [Adam(a.params + [self.log_std[i:i + 1]], lr=p.lr) for i, a in enumerate(self.actors)]
        self.critic_opt = Adam(self.critic.params, lr=p.lr)
        self.rollout = RolloutBuffer(p.horizon, self.obs_dim, self.n)
        self.policy_version = 0
        self.value_norm = RunningNorm() if p.value_norm else None

    def hyperparams(self):
        return asdict(self.params)

    def split_head(self, i, out):
        """``(mu, log_std, in_range)`` from actor ``i``'s raw output."""
        if not self.params.state_std:
            return out, np.broadcast_to(self.log_std[i], out.shape), None
        raw = self.log_std[i] + out[..., 3:]
        lo, hi = LOG_STD_BOUNDS
        return out[..., :3], np.clip(raw, lo, hi), (raw > lo) & (raw < hi)

    def distribution(self, x):
        """Per-drone means and log-stds, each shaped ``(..., N, 3)``."""
        heads = [self.split_head(i, a(x))[:2] for i, a in enumerate(self.actors)]
        return np.stack([h[0] for h in heads], axis=-2), np.stack([h[1] for h in heads], axis=-2)

    def means(self, x) -> np.ndarray:
        return self.distribution(x)[0]

    def value(self, x) -> np.ndarray:
        v = self.critic(x)[..., 0]
        return self.value_norm.denormalize(v) if self.value_norm else v

    def sample(self, obs, rng, explore=True):
        """``(env_action, u, logprob per drone, value)`` for one observation."""
        x = self.normalize(obs)
        mu, log_std = self.distribution(x)
        if explore:
            u = mu + np.exp(log_std) * rng.standard_normal(mu.shape)
        else:
            u = mu
        logp = squashed_logprob(u, mu, log_std, self.v_max)
        return self.v_max * np.tanh(u), u, logp, float(self.value(x))

    def act(self, obs, rng, explore=True):
        a, u, logp, v = self.sample(obs, rng, explore)
        return a, (u, logp, v)

    def observe(self, obs, record, reward, next_obs, done):
        super().observe(obs, record, reward, next_obs, done)
        u, logp, v = record
        r = transform_reward(reward, self.params.reward_transform)
        self.rollout.add(obs, u, logp, v, r, done, self.policy_version)
        if self.rollout.full:
            last = 0.0 if done else float(self.value(self.normalize(next_obs)))
            return self.update(last)
        return None

    def update(self, last_value: float):
        p = self.params
        ro = self.rollout
        T = len(ro)
        if ro.version != self.policy_version:
            raise ValueError("rollout was collected by a different policy version")
        adv, returns = compute_advantages(ro.reward[:T], ro.value[:T], ro.done[:T], last_value, p.gamma, p.gae_lambda)
        adv_n = (adv - adv.mean()) / (adv.std() + 1e-8)
        x_all = self.normalize(ro.obs[:T])
        if self.value_norm:
            self.value_norm.update(returns)
            returns = self.value_norm.normalize(returns)
        stats = {"actor_loss": 0.0, "critic_loss": 0.0, "clip_frac": 0.0}
        n_batches = 0
        for _ in range(p.epochs):
            order = self.rng.permutation(T)
            for start in range(0, T, p.batch_size):
                mb = order[start:start + p.batch_size]
                B = len(mb)
                x, a_adv = x_all[mb], adv_n[mb]
                for i, actor in enumerate(self.actors):
                    out, cache = actor.forward(x)
                    mu, log_std, in_range = self.split_head(i, out)
                    u = ro.pre_tanh[mb, i]
                    logp = squashed_logprob(u, mu, log_std, self.v_max)
                    ratio = np.exp(logp - ro.logprob[mb, i])
                    obj, d_obj = clipped_surrogate(ratio, a_adv, p.clip)
                    dlogp = -(d_obj * ratio) / B
                    inv_var = np.exp(-2.0 * log_std)
                    diff = u - mu
                    d_mu = dlogp[:, None] * diff * inv_var
                    d_log_std = dlogp[:, None] * (diff * diff * inv_var - 1.0) - p.entropy_coef / B
                    if p.state_std:
                        d_log_std = d_log_std * in_range
                        grads, _ = actor.backward(cache, np.concatenate([d_mu, d_log_std], axis=1))
                        grads.append(np.zeros((1, 3)))
                    else:
                        grads, _ = actor.backward(cache, d_mu)
                        grads.append(d_log_std.sum(axis=0)[None, :])
                    clip_by_global_norm(grads, p.max_grad_norm)
                    self.actor_opts[i].step(actor.params + [self.log_std[i:i + 1]], grads)
                    stats["actor_loss"] -= float(np.mean(obj)) / self.n
                    stats["clip_frac"] += float(np.mean(d_obj == 0.0)) / self.n
                v, cache = self.critic.forward(x)
                err = v[:, 0] - returns[mb]
                grads, _ = self.critic.backward(cache, (2.0 * p.value_coef * err / B)[:, None])
                clip_by_global_norm(grads, p.max_grad_norm)
                self.critic_opt.step(self.critic.params, grads)
                stats["critic_loss"] += p.value_coef * float(np.mean(err * err))
                n_batches += 1
        ro.clear()
        self.policy_version += 1
        self.total_updates += 1
        return {k: v / n_batches for k, v in stats.items()}

    def arrays(self):
        out = {"log_std": self.log_std}
        for i, (actor, opt) in enumerate(zip(self.actors, self.actor_opts)):
            out.update(actor.state_dict(f"actor{i}."))
            out.update(opt.state_dict(f"actor_opt{i}."))
        out.update(self.critic.state_dict("critic."))
        out.update(self.critic_opt.state_dict("critic_opt."))
        out.update(self.rollout.state_dict())
        return out

    def load_arrays(self, arrays):
        self.log_std[...] = arrays["log_std"]
        for i, (actor, opt) in enumerate(zip(self.actors, self.actor_opts)):
            actor.load_state_dict(arrays, f"actor{i}.")
            opt.load_state_dict(arrays, f"actor_opt{i}.")
        self.critic.load_state_dict(arrays, "critic.")
        self.critic_opt.load_state_dict(arrays, "critic_opt.")
        self.rollout.load_state_dict(arrays)

    def extra_state(self):
        out = {"policy_version": self.policy_version}
        if self.value_norm:
            out["value_norm"] = [self.value_norm.count, self.value_norm.mean, self.value_norm.var]
        return out

    def load_extra_state(self, state):
        self.policy_version = state["policy_version"]
        if self.value_norm:
            self.value_norm.count, self.value_norm.mean, self.value_norm.var = state["value_norm"]
