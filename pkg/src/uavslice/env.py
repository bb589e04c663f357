"""The multi-UAV slicing world.

One step runs, in this fixed order::

    apply_actions -> associate_users -> channel draw + metrics -> reward
    -> update_energy -> relocate_station -> advance_users -> build_observation

QoS is measured after movement so the reward reflects the action just taken.
Constraints on positions are enforced by projection (clip, clamp, push apart)
and every projection bumps a violation counter.

Observation layout for ``N`` drones (length ``6N + 12``)::

    [0, 3N)            drone positions, drone-major (x, y, z)
    [3N, 4N)           batteries (%)
    [4N, 4N+3)         associated user counts n_A, n_B, n_C
    [4N+3, 6N+3)       horizontal drone velocities (vx, vy), drone-major
    [6N+3, 6N+12)      class QoS means (L, T, S) for A, B, C; absent -> 0

Only the horizontal velocity is exposed: that is what keeps the vector at
``6N + 12``. The vertical rate is still visible to the reward through the
full 3D velocity kept in ``WorldState``.
"""
from dataclasses import dataclass, field
from typing import Dict, Optional

import numpy as np

from . import channel as ch
from . import metrics as qm
from . import rewards as rw
from .config import CLASSES, ScenarioConfig
from .rewards import RewardBreakdown
from .state import VIOLATIONS, WorldState, make_rngs

SEP_MARGIN = 1e-9
SEP_MAX_ITER = 200


class StepError(RuntimeError):
    """Stepping a finished episode or feeding an invalid action."""


def observation_index(n_drones: int) -> Dict[str, slice]:
    n = n_drones
    return {
        "positions": slice(0, 3 * n),
        "batteries": slice(3 * n, 4 * n),
        "counts": slice(4 * n, 4 * n + 3),
        "velocities": slice(4 * n + 3, 6 * n + 3),
        "qos": slice(6 * n + 3, 6 * n + 12),
    }


def observation_scale(cfg: ScenarioConfig) -> np.ndarray:
    """Per-entry divisors that bring raw observations to roughly unit range."""
    n = cfg.n_drones
    gx, gy = cfg.grid_extent
    max_users = max(1, sum(hi for _, hi in cfg.user_count_ranges))
    qos = []
    for t in cfg.targets:
        qos += [cfg.metrics.latency_max_ms, t.throughput_mbps, t.sinr_db]
    return np.concatenate([
        np.tile([gx, gy, cfg.h_max], n),
        np.full(n, cfg.e_max),
        np.full(3, float(max_users)),
        np.full(2 * n, cfg.v_max),
        np.asarray(qos, dtype=float),
    ])


@dataclass
class StepOutcome:
    observation: np.ndarray
    reward: RewardBreakdown
    done: bool
    info: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# geometry helpers

def _clamp_positions(pos: np.ndarray, cfg: ScenarioConfig, counters: Optional[dict] = None) -> np.ndarray:
    gx, gy = cfg.grid_extent
    lo = np.array([0.0, 0.0, cfg.h_min])
    hi = np.array([gx, gy, cfg.h_max])
    out = np.clip(pos, lo, hi)
    if counters is not None:
        changed = out != pos
        counters["grid"] += int(np.count_nonzero(changed[:, :2].any(axis=1)))
        counters["altitude"] += int(np.count_nonzero(changed[:, 2]))
    return out


def pairwise_distances(pos: np.ndarray) -> np.ndarray:
    diff = pos[:, None, :] - pos[None, :, :]
    return np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))


def min_separation(pos: np.ndarray) -> float:
    if len(pos) < 2:
        return np.inf
    d = pairwise_distances(pos)
    return float(d[np.triu_indices(len(pos), 1)].min())


_OVERLAP_AXES = np.array([[-1, 0, 0], [1, 0, 0], [0, -1, 0], [0, 1, 0], [0, 0, 1], [0, 0, -1]], dtype=float)


def separate(pos: np.ndarray, cfg: ScenarioConfig, counters: Optional[dict] = None) -> np.ndarray:
    """Push drones apart until every pair is at least ``d_min`` away.

    Each violating pair moves symmetrically along its connecting axis; on an
    exact overlap only the lower id moves, along whichever in-box axis step
    lands farthest from the other drones.
    """
    pos = pos.copy()
    n = len(pos)
    if n < 2 or min_separation(pos) >= cfg.d_min:
        return pos
    target = cfg.d_min * (1.0 + SEP_MARGIN)
    pushed = set()
    gx, gy = cfg.grid_extent
    lo = np.array([0.0, 0.0, cfg.h_min])
    hi = np.array([gx, gy, cfg.h_max])
    for _ in range(SEP_MAX_ITER):
        clean = True
        for i in range(n):
            for j in range(i + 1, n):
                diff = pos[j] - pos[i]
                d = float(np.sqrt(diff @ diff))
                if d >= cfg.d_min:
                    continue
                clean = False
                pushed.add((i, j))
                if d < 1e-12:
                    # step along the admissible axis that lands farthest from every other drone, so
                    # several drones stacked on one point (e.g. docked at the station) cannot cycle
                    others = np.delete(pos, i, axis=0)
                    best, best_gap = None, -1.0
                    for axis in _OVERLAP_AXES:
                        cand = pos[i] + axis * target
                        if np.all(cand >= lo) and np.all(cand <= hi):
                            gap = float(np.min(np.linalg.norm(others - cand, axis=1)))
                            if gap > best_gap + 1e-12:
                                best, best_gap = cand, gap
                    if best is not None:
                        pos[i] = best
                    continue
                u = diff / d
                half = 0.5 * (target - d)
                pos[i] -= u * half
                pos[j] += u * half
        pos = np.clip(pos, lo, hi)
        if clean:
            break
    if counters is not None:
        counters["collision"] += len(pushed)
    return pos


# ---------------------------------------------------------------------------
# operations

def reset(cfg: ScenarioConfig, seed: Optional[int] = None):
    """Fresh world and its initial observation; deterministic in ``seed`` (default ``cfg.seed``)."""
    rngs = make_rngs(cfg.seed if seed is None else seed)
    r = rngs["init"]
    n = cfg.n_drones
    gx, gy = cfg.grid_extent
    pos = np.column_stack([
        r.uniform(0.0, gx, n), r.uniform(0.0, gy, n), r.uniform(cfg.h_min, cfg.h_max, n),
    ])
    pos = separate(pos, cfg)
    counts = [int(r.integers(lo, hi + 1)) for lo, hi in cfg.user_count_ranges]
    m = sum(counts)
    user_class = np.repeat(np.array([int(c) for c in CLASSES]), counts)
    user_pos = np.column_stack([r.uniform(0.0, gx, m), r.uniform(0.0, gy, m)])
    speed = r.uniform(*cfg.user_speed_range, m)
    station = np.array(cfg.station_init, dtype=float)
    station[:2] = np.clip(station[:2], 0.0, [gx, gy])
    state = WorldState(
        t=0, drone_pos=pos, drone_vel=np.zeros((n, 3)), battery=np.full(n, cfg.e_max),
        charging=np.zeros(n, dtype=bool), docked=np.zeros(n, dtype=bool),
        user_pos=user_pos, user_class=user_class, user_speed=speed,
        served_by=np.full(m, -1, dtype=np.int64), ever_served=np.zeros(m, dtype=bool),
        station_pos=station, rngs=rngs,
    )
    associate_users(state, cfg)
    # only associations made during a step count as service
    state.ever_served[:] = False
    counts_now = np.bincount(state.user_class[state.served_by >= 0], minlength=3)
    obs = build_observation(state, counts_now, np.full((3, 3), np.nan), cfg)
    return state, obs


def apply_actions(state: WorldState, actions, cfg: ScenarioConfig) -> WorldState:
    a = np.array(actions, dtype=float).reshape(state.n_drones, 3)
    if not np.all(np.isfinite(a)):
        raise StepError("non-finite action")
    counters = state.violations
    limit = cfg.step_limit
    old = state.drone_pos

    # low-battery drones ignore the policy and head for the station at full speed
    if np.any(state.charging):
        a[state.charging] = state.station_pos - old[state.charging]
    norms = np.linalg.norm(a, axis=1)
    over = norms > limit
    if np.any(over):
        counters["speed"] += int(np.count_nonzero(over & ~state.charging))
        a[over] *= (limit / norms[over])[:, None]

    new = _clamp_positions(old + a, cfg, counters)
    new = separate(new, cfg, counters)
    state.drone_vel = (new - old) / cfg.dt
    state.drone_pos = new
    state.docked = state.charging & (np.linalg.norm(new - state.station_pos, axis=1) <= limit)
    return state


def drone_user_distances(state: WorldState) -> np.ndarray:
    ground = np.column_stack([state.user_pos, np.zeros(state.n_users)])
    diff = state.drone_pos[:, None, :] - ground[None, :, :]
    return np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))


def associate_users(state: WorldState, cfg: ScenarioConfig, dist: Optional[np.ndarray] = None) -> np.ndarray:
    """Nearest-drone association within ``comm_range``; A users first, then B, then C.

    Ties go to the lower drone id. With ``drone_capacity > 0`` a drone takes at
    most that many users, so higher classes claim capacity first.
    """
    if dist is None:
        dist = drone_user_distances(state)
    n, m = dist.shape
    served = np.full(m, -1, dtype=np.int64)
    if m == 0:
        state.served_by = served
        return served
    eligible = (~state.charging)[:, None] & (dist <= cfg.comm_range)
    masked = np.where(eligible, dist, np.inf)
    best = np.argmin(masked, axis=0)
    reachable = np.isfinite(masked[best, np.arange(m)])
    served[reachable] = best[reachable]
    cap = cfg.drone_capacity
    if cap > 0 and np.any(np.bincount(served[reachable], minlength=n) > cap):
        served[:] = -1
        load = np.zeros(n, dtype=int)
        for cls in CLASSES:
            for user in np.nonzero((state.user_class == int(cls)) & reachable)[0]:
                order = np.lexsort((np.arange(n), masked[:, user]))
                for drone in order:
                    if not np.isfinite(masked[drone, user]):
                        break
                    if load[drone] < cap:
                        served[user] = drone
                        load[drone] += 1
                        break
    state.served_by = served
    state.ever_served |= served >= 0
    return served


def measure(state: WorldState, cfg: ScenarioConfig, dist: np.ndarray):
    """Draw every drone-user link, then compute per-user SINR/throughput/latency."""
    _, gains = ch.sample_links(state.rngs["channel"], dist, cfg.channel)
    active = ~state.charging
    sinr = ch.sinr_matrix(gains, state.served_by, active, cfg.channel)
    idx = np.nonzero(state.served_by >= 0)[0]
    own = state.served_by[idx]
    s_lin = np.maximum(sinr[idx], 1e-300)
    thr = qm.throughput_from_sinr(s_lin, cfg.metrics.bandwidth_mhz)
    speeds = np.linalg.norm(state.drone_vel, axis=1)
    lat = qm.latency_proxy(dist[own, idx] * cfg.unit_length_m, thr, speeds[own], cfg.metrics)
    values = np.column_stack([np.atleast_1d(lat), np.atleast_1d(thr), 10.0 * np.log10(s_lin)])
    cls = state.user_class[idx]
    per_drone_counts, per_drone_means = qm.grouped_means(own * 3 + cls, 3 * state.n_drones, values)
    class_counts, class_means = qm.grouped_means(cls, 3, values)
    return {
        "user_idx": idx,
        "user_metrics": values,
        "per_drone_counts": per_drone_counts.reshape(state.n_drones, 3),
        "per_drone_means": per_drone_means.reshape(state.n_drones, 3, 3),
        "class_counts": class_counts,
        "class_means": class_means,
    }


def update_energy(state: WorldState, cfg: ScenarioConfig, n_users: Optional[np.ndarray] = None) -> WorldState:
    e = cfg.energy
    if n_users is None:
        n_users = np.bincount(state.served_by[state.served_by >= 0], minlength=state.n_drones)
    speeds = np.linalg.norm(state.drone_vel, axis=1)
    battery = state.battery - rw.drone_energy(speeds, n_users, state.docked, e)
    battery = np.where(state.docked, np.minimum(battery + e.recharge_rate, e.full_charge_level), battery)
    charging = state.charging & ~(state.docked & (battery >= e.full_charge_level))
    low = ~charging & (battery < cfg.b_min)
    if np.any(low):
        state.violations["battery"] += int(np.count_nonzero(low))
        charging = charging | low
        state.served_by[np.isin(state.served_by, np.nonzero(low)[0])] = -1
    state.battery = np.clip(battery, 0.0, cfg.e_max)
    state.charging = charging
    state.docked = state.docked & charging
    return state


def relocate_station(state: WorldState, cfg: ScenarioConfig) -> WorldState:
    if state.n_users == 0:
        return state
    target = state.station_pos.copy()
    target[:2] = state.user_pos.mean(axis=0)
    step = target - state.station_pos
    dist = float(np.linalg.norm(step))
    if dist > cfg.delta_station:
        step *= cfg.delta_station / dist
    state.station_pos = state.station_pos + step
    return state


def _reflect(x: np.ndarray, upper: float) -> np.ndarray:
    x = np.where(x < 0.0, -x, x)
    x = np.where(x > upper, 2.0 * upper - x, x)
    return np.clip(x, 0.0, upper)


def advance_users(state: WorldState, cfg: ScenarioConfig) -> WorldState:
    """Random walk: each user moves with probability ``move_prob`` along a uniform heading."""
    r = state.rngs["mobility"]
    m = state.n_users
    moves = r.random(m) < cfg.move_prob
    heading = r.uniform(0.0, 2.0 * np.pi, m)
    if m == 0:
        return state
    step = state.user_speed * cfg.dt / cfg.unit_length_m * moves
    gx, gy = cfg.grid_extent
    pos = state.user_pos
    state.user_pos = np.column_stack([
        _reflect(pos[:, 0] + step * np.cos(heading), gx),
        _reflect(pos[:, 1] + step * np.sin(heading), gy),
    ])
    return state


def build_observation(state: WorldState, class_counts, class_means, cfg: ScenarioConfig) -> np.ndarray:
    gx, gy = cfg.grid_extent
    pos = np.clip(state.drone_pos, [0.0, 0.0, cfg.h_min], [gx, gy, cfg.h_max])
    qos = np.nan_to_num(np.asarray(class_means, dtype=float), nan=0.0)
    qos[np.asarray(class_counts) == 0] = 0.0
    return np.concatenate([
        pos.ravel(),
        np.clip(state.battery, 0.0, cfg.e_max),
        np.asarray(class_counts, dtype=float),
        state.drone_vel[:, :2].ravel(),
        qos.ravel(),
    ])


def covered_class_a(state: WorldState, cfg: ScenarioConfig, dist: np.ndarray) -> int:
    """Class-A users within ``coverage_range`` of at least one non-charging drone."""
    near = (dist <= cfg.coverage_range) & (~state.charging)[:, None]
    return int(np.count_nonzero(near.any(axis=0) & (state.user_class == 0)))


def per_drone_aggregates(counts: np.ndarray, means: np.ndarray):
    return [qm.aggregates_from_arrays(counts[i], means[i]) for i in range(len(counts))]


def reward_from_info(info: dict, cfg: ScenarioConfig) -> RewardBreakdown:
    """Recompute a step's reward from its ``info`` record (consistency oracle)."""
    return rw.step_reward(
        per_drone_aggregates(np.asarray(info["per_drone_counts"]), np.asarray(info["per_drone_means"], dtype=float)),
        info["velocities"], info["batteries"], info["n_users"], info["docked"], info["serving_a"],
        info["n_a_covered"], cfg,
    )


def step(state: WorldState, actions, cfg: ScenarioConfig) -> StepOutcome:
    if state.t >= cfg.max_steps:
        raise StepError(f"episode finished at t={state.t}; call reset()")
    apply_actions(state, actions, cfg)
    dist = drone_user_distances(state)
    associate_users(state, cfg, dist)
    m = measure(state, cfg, dist)

    per_drone = per_drone_aggregates(m["per_drone_counts"], m["per_drone_means"])
    n_users = m["per_drone_counts"].sum(axis=1)
    serving_a = m["per_drone_counts"][:, 0] > 0
    n_a_cov = covered_class_a(state, cfg, dist)
    speeds = np.linalg.norm(state.drone_vel, axis=1)
    batteries = state.battery.copy()
    reward = rw.step_reward(per_drone, state.drone_vel, batteries, n_users, state.docked, serving_a, n_a_cov, cfg)

    utilities = qm.drone_utilities(per_drone, cfg.targets, cfg.weights)
    energies = rw.drone_energy(speeds, n_users, state.docked, cfg.energy)
    objective = qm.scalarized_objective(utilities, energies, cfg.lambda_tradeoff)
    served_ids = m["user_idx"].copy()
    info = {
        "t": state.t,
        "per_drone_counts": m["per_drone_counts"],
        "per_drone_means": m["per_drone_means"],
        "class_counts": m["class_counts"],
        "class_means": m["class_means"],
        "velocities": state.drone_vel.copy(),
        "batteries": batteries,
        "n_users": n_users,
        "docked": state.docked.copy(),
        "serving_a": serving_a,
        "n_a_covered": n_a_cov,
        "served_ids": served_ids,
        "served": int(served_ids.size),
        "unserved": int(state.n_users - served_ids.size),
        "utilities": utilities,
        "energy": energies,
        "objective": objective,
    }

    update_energy(state, cfg, n_users)
    relocate_station(state, cfg)
    advance_users(state, cfg)
    obs = build_observation(state, m["class_counts"], m["class_means"], cfg)
    state.t += 1
    info["violations"] = dict(state.violations)
    return StepOutcome(obs, reward, state.t >= cfg.max_steps, info)


def check_invariants(state: WorldState, cfg: ScenarioConfig, prev_station: Optional[np.ndarray] = None) -> Dict[str, bool]:
    """Post-step constraint audit, independent of the projection code paths."""
    gx, gy = cfg.grid_extent
    p = state.drone_pos
    tol = 1e-9
    served = state.served_by[state.served_by >= 0]
    out = {
        "altitude": bool(np.all((p[:, 2] >= cfg.h_min - tol) & (p[:, 2] <= cfg.h_max + tol))),
        "grid": bool(np.all((p[:, 0] >= -tol) & (p[:, 0] <= gx + tol) & (p[:, 1] >= -tol) & (p[:, 1] <= gy + tol))),
        "separation": min_separation(p) >= cfg.d_min - tol,
        "battery": bool(np.all((state.battery >= 0.0) & (state.battery <= cfg.e_max))),
        # each user carries one drone id, so disjointness reduces to valid ids and no charging server
        "disjoint": bool(np.all(served < state.n_drones) and not np.any(state.charging[served])),
        "users_in_grid": bool(np.all((state.user_pos >= 0) & (state.user_pos <= [gx, gy]))),
    }
    if prev_station is not None:
        out["station"] = float(np.linalg.norm(state.station_pos - prev_station)) <= cfg.delta_station + tol
    return out


class UAVSliceEnv:
    """Stateful wrapper around the functional step API."""

    def __init__(self, cfg: ScenarioConfig):
        self.cfg = cfg
        self.state: Optional[WorldState] = None

    @property
    def obs_dim(self) -> int:
        return self.cfg.obs_dim

    @property
    def n_drones(self) -> int:
        return self.cfg.n_drones

    def reset(self, seed: Optional[int] = None) -> np.ndarray:
        self.state, obs = reset(self.cfg, seed)
        return obs

    def step(self, actions) -> StepOutcome:
        if self.state is None:
            raise StepError("reset() before step()")
        return step(self.state, actions, self.cfg)

    @property
    def rng(self) -> np.random.Generator:
        return self.state.rngs["exploration"]
