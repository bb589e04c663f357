"""Itemised shared reward.

``total = R_w * (r_latency + r_throughput + r_sinr) + E_w * r_energy`` with
``r_energy = r_eff + r_bonus - e_total + p_low``. Both identities are
evaluated in exactly that order everywhere, so a recomputation from logged
inputs reproduces the stored floats bit for bit.
"""
from dataclasses import asdict, dataclass
from typing import Sequence, Tuple

import numpy as np

from .config import EnergyParams, SliceTargets
from .metrics import ClassAggregate

EFF_EPS = 1e-5
R_EFF_WARN = 1e3

FIELDS = ("r_latency", "r_throughput", "r_sinr", "r_eff", "r_bonus", "p_low", "e_total", "r_energy", "total")


@dataclass(frozen=True)
class RewardBreakdown:
    r_latency: float = 0.0
    r_throughput: float = 0.0
    r_sinr: float = 0.0
    r_eff: float = 0.0
    r_bonus: float = 0.0
    p_low: float = 0.0
    e_total: float = 0.0
    r_energy: float = 0.0
    total: float = 0.0

    def as_dict(self):
        return asdict(self)


def qos_reward_terms(per_drone: Sequence[Sequence[ClassAggregate]], targets: Sequence[SliceTargets],
                     weights: Sequence[float]) -> Tuple[float, float, float]:
    r_lat = r_thr = r_sinr = 0.0
    for aggs in per_drone:
        for agg, tgt, w in zip(aggs, targets, weights):
            if not agg.present:
                continue
            r_lat -= w * (agg.mean_latency_ms - tgt.latency_ms) / tgt.latency_ms
            r_thr += w * (agg.mean_throughput_mbps - tgt.throughput_mbps) / tgt.throughput_mbps
            r_sinr += w * (agg.mean_sinr_db - tgt.sinr_db) / tgt.sinr_db
    return r_lat, r_thr, r_sinr


def efficiency_reward(velocities, batteries, e_max: float = 100.0) -> float:
    if e_max <= 0:
        raise ValueError("E_max must be positive")
    speed = float(np.sum(np.linalg.norm(np.asarray(velocities, dtype=float).reshape(-1, 3), axis=1)))
    depletion = float(np.sum(e_max - np.asarray(batteries, dtype=float)))
    return -speed / (depletion + EFF_EPS)


def coverage_bonus(n_a: int) -> float:
    if n_a < 0:
        raise ValueError("count must be non-negative")
    return 5.0 * n_a


def low_battery_penalty(batteries, serving_a, threshold: float = 10.0) -> float:
    total = 0.0
    for level, has_a in zip(batteries, serving_a):
        if level < threshold:
            total += -5.0 if has_a else -10.0
    return total


def drone_energy(speeds, n_users, docked, energy: EnergyParams) -> np.ndarray:
    """Per-drone battery drain for one step; docked drones (charging at the station) spend nothing."""
    speeds = np.asarray(speeds, dtype=float)
    cost = energy.velocity_cost_coeff * speeds + energy.hover_cost + np.asarray(n_users) * energy.per_user_cost
    return np.where(np.asarray(docked, dtype=bool), 0.0, cost)


def total_energy(speeds, n_users, energy: EnergyParams, docked=None) -> float:
    speeds = np.asarray(speeds, dtype=float)
    if speeds.size == 0:
        return 0.0
    if docked is None:
        docked = np.zeros(speeds.shape, dtype=bool)
    return float(np.sum(drone_energy(speeds, n_users, docked, energy)))


def total_reward(r_latency, r_throughput, r_sinr, r_eff, r_bonus, p_low, e_total,
                 r_w: float = 4.0, e_w: float = 1.0) -> RewardBreakdown:
    r_energy = r_eff + r_bonus - e_total + p_low
    total = r_w * (r_latency + r_throughput + r_sinr) + e_w * r_energy
    return RewardBreakdown(r_latency, r_throughput, r_sinr, r_eff, r_bonus, p_low, e_total, r_energy, total)


def step_reward(per_drone, velocities, batteries, n_users, docked, serving_a, n_a_covered, cfg) -> RewardBreakdown:
    """Full reward for one step from the quantities the environment logs in ``info``."""
    r_lat, r_thr, r_sinr = qos_reward_terms(per_drone, cfg.targets, cfg.weights)
    speeds = np.linalg.norm(np.asarray(velocities, dtype=float).reshape(-1, 3), axis=1)
    r_eff = efficiency_reward(velocities, batteries, cfg.e_max)
    r_w, e_w = cfg.reward_weights
    return total_reward(
        r_lat, r_thr, r_sinr, r_eff,
        coverage_bonus(n_a_covered),
        low_battery_penalty(batteries, serving_a, cfg.b_min),
        total_energy(speeds, n_users, cfg.energy, docked),
        r_w, e_w,
    )
