from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from uavslice import env as E
from uavslice.config import PRESETS, EnergyParams, reduced_rural


def fresh(cfg, seed=0):
    return E.reset(cfg, seed)[0]


def put_drones(state, positions):
    state.drone_pos = np.array(positions, dtype=float)
    state.drone_vel = np.zeros_like(state.drone_pos)
    n = len(positions)
    state.battery = np.full(n, 100.0)
    state.charging = np.zeros(n, dtype=bool)
    state.docked = np.zeros(n, dtype=bool)
    return state


def put_users(state, positions, classes):
    m = len(positions)
    state.user_pos = np.array(positions, dtype=float).reshape(m, 2)
    state.user_class = np.array(classes, dtype=int)
    state.user_speed = np.ones(m)
    state.served_by = np.full(m, -1)
    state.ever_served = np.zeros(m, dtype=bool)
    return state


# -- reset ------------------------------------------------------------------

def test_reset_deterministic(rural):
    a, oa = E.reset(rural, 7)
    b, ob = E.reset(rural, 7)
    assert a.equals(b) and np.array_equal(oa, ob)
    c, _ = E.reset(rural, 8)
    assert not a.equals(c)


def test_reset_contract(rural):
    s, obs = E.reset(rural, 3)
    assert obs.shape == (36,)
    assert np.all(s.battery == 100.0)
    assert s.t == 0
    assert np.allclose(s.station_pos, [2.5, 1.0, 1.0])
    for (lo, hi), c in zip(rural.user_count_ranges, range(3)):
        assert lo <= np.count_nonzero(s.user_class == c) <= hi
    assert E.check_invariants(s, rural)["altitude"]
    assert not s.ever_served.any()


def test_reset_clamps_station_to_small_grid(urban):
    s = fresh(urban)
    assert np.all(s.station_pos[:2] <= urban.grid_extent)


# -- apply_actions ----------------------------------------------------------

def test_zero_action_keeps_position(rural):
    s = fresh(rural)
    before = s.drone_pos.copy()
    E.apply_actions(s, np.zeros((4, 3)), rural)
    assert np.array_equal(s.drone_pos, before)
    assert np.all(s.drone_vel == 0)


def test_action_norm_clipped():
    cfg = replace(PRESETS["rural"], n_drones=1)
    s = put_drones(fresh(cfg), [[5.0, 5.0, 5.0]])
    E.apply_actions(s, [[2.0, 0.0, 0.0]], cfg)
    assert np.linalg.norm(s.drone_vel[0]) == pytest.approx(1.0)
    assert s.violations["speed"] == 1


def test_push_apart():
    cfg = replace(PRESETS["rural"], n_drones=2)
    s = put_drones(fresh(cfg), [[5.0, 5.0, 5.0], [5.3, 5.0, 5.0]])
    E.apply_actions(s, np.zeros((2, 3)), cfg)
    assert E.min_separation(s.drone_pos) == pytest.approx(0.5, rel=1e-6)
    assert s.drone_pos[0, 0] == pytest.approx(4.9, rel=1e-6)
    assert s.violations["collision"] == 1


def test_exact_overlap_lower_id_yields():
    cfg = replace(PRESETS["rural"], n_drones=2)
    s = put_drones(fresh(cfg), [[5.0, 5.0, 5.0], [5.0, 5.0, 5.0]])
    E.apply_actions(s, np.zeros((2, 3)), cfg)
    assert np.array_equal(s.drone_pos[1], [5.0, 5.0, 5.0])
    assert E.min_separation(s.drone_pos) >= cfg.d_min


def test_stacked_drones_at_station_separate(urban):
    # four charging drones docked on the same point used to cycle between two overlaps
    pos = E.separate(np.tile([0.39, 1.57, 1.0], (4, 1)), urban)
    assert E.min_separation(pos) >= urban.d_min
    assert np.all(pos[:, :2] <= urban.grid_extent) and np.all(pos[:, 2] >= urban.h_min)


def test_clamped_to_box_counts_violations(rural):
    cfg = replace(rural, n_drones=1)
    s = put_drones(fresh(cfg), [[0.2, 5.0, 9.8]])
    E.apply_actions(s, [[-0.5, 0.0, 0.5]], cfg)
    assert s.drone_pos[0, 0] == 0.0 and s.drone_pos[0, 2] == 10.0
    assert s.violations["grid"] == 1 and s.violations["altitude"] == 1


def test_non_finite_action_rejected(rural):
    s = fresh(rural)
    with pytest.raises(E.StepError):
        E.apply_actions(s, np.full((4, 3), np.nan), rural)


# -- association ------------------------------------------------------------

def test_user_out_of_range_unserved():
    cfg = replace(PRESETS["rural"], n_drones=1)
    s = put_users(put_drones(fresh(cfg), [[0.0, 0.0, 1.0]]), [[9.0, 9.0]], [0])
    assert E.associate_users(s, cfg)[0] == -1


def test_tie_goes_to_lower_id():
    cfg = replace(PRESETS["rural"], n_drones=2)
    s = put_users(put_drones(fresh(cfg), [[4.0, 5.0, 2.0], [6.0, 5.0, 2.0]]), [[5.0, 5.0]], [1])
    assert E.associate_users(s, cfg)[0] == 0


def test_charging_drone_serves_nobody():
    cfg = replace(PRESETS["rural"], n_drones=2)
    s = put_users(put_drones(fresh(cfg), [[5.0, 5.0, 1.0], [8.0, 8.0, 1.0]]), [[5.0, 5.0]], [0])
    s.charging[0] = True
    assert E.associate_users(s, cfg)[0] == 1


def test_capacity_prefers_class_a():
    cfg = replace(PRESETS["rural"], n_drones=1, drone_capacity=2)
    s = put_users(put_drones(fresh(cfg), [[5.0, 5.0, 1.0]]), [[5.0, 5.0]] * 4, [2, 2, 0, 1])
    served = E.associate_users(s, cfg)
    assert served.tolist() == [-1, -1, 0, 0]


@settings(max_examples=30)
@given(st.integers(0, 2 ** 32 - 1))
def test_service_sets_disjoint(seed):
    cfg = PRESETS["urban"]
    s = fresh(cfg, seed)
    E.apply_actions(s, np.random.default_rng(seed).uniform(-1, 1, (4, 3)), cfg)
    E.associate_users(s, cfg)
    sets = s.served_sets()
    for i in range(4):
        for j in range(i + 1, 4):
            assert not sets[i] & sets[j]
    d = E.drone_user_distances(s)
    for m, i in enumerate(s.served_by):
        if i >= 0:
            assert d[i, m] <= cfg.comm_range


# -- energy -----------------------------------------------------------------

def test_energy_drain_hand_case():
    cfg = replace(PRESETS["rural"], n_drones=1)
    s = put_drones(fresh(cfg), [[5.0, 5.0, 5.0]])
    s.drone_vel = np.array([[2.0, 0.0, 0.0]])
    E.update_energy(s, cfg, np.array([5]))
    assert s.battery[0] == pytest.approx(100.0 - 1.2)


def test_low_battery_switches_to_charging():
    cfg = replace(PRESETS["rural"], n_drones=1)
    s = put_users(put_drones(fresh(cfg), [[5.0, 5.0, 5.0]]), [[5.0, 5.0]], [0])
    s.battery[:] = 8.0
    E.associate_users(s, cfg)
    E.update_energy(s, cfg)
    assert s.charging[0] and s.served_by[0] == -1
    assert s.violations["battery"] == 1


def test_recharge_until_full_level():
    cfg = replace(PRESETS["rural"], n_drones=1)
    s = put_drones(fresh(cfg), [[2.5, 1.0, 1.0]])
    s.battery[:] = 88.0
    s.charging[:] = True
    s.docked[:] = True
    E.update_energy(s, cfg, np.array([0]))
    assert s.battery[0] == 90.0
    assert not s.charging[0]


def test_charging_drone_routed_to_station():
    cfg = replace(PRESETS["rural"], n_drones=1)
    s = put_drones(fresh(cfg), [[5.0, 1.0, 1.0]])
    s.charging[:] = True
    E.apply_actions(s, [[1.0, 1.0, 1.0]], cfg)
    assert np.allclose(s.drone_pos[0], [4.0, 1.0, 1.0])


def test_battery_non_increasing_without_recharge():
    cfg = replace(reduced_rural(max_steps=300), energy=EnergyParams(recharge_rate=0.0))
    s = fresh(cfg, 1)
    rng = np.random.default_rng(1)
    prev = s.battery.sum()
    for _ in range(300):
        E.step(s, rng.uniform(-1, 1, (2, 3)), cfg)
        assert s.battery.sum() <= prev + 1e-12
        prev = s.battery.sum()


# -- station and users ------------------------------------------------------

def test_station_moves_toward_centroid():
    cfg = PRESETS["rural"]
    s = put_users(fresh(cfg), [[0, 0], [2, 2], [4, 4]], [0, 1, 2])
    s.station_pos = np.array([2.0, 2.0, 1.0])
    E.relocate_station(s, cfg)
    assert np.allclose(s.station_pos, [2.0, 2.0, 1.0])
    s = put_users(fresh(cfg), [[3.0, 4.0]], [0])
    s.station_pos = np.array([0.0, 0.0, 1.0])
    E.relocate_station(s, cfg)
    assert np.allclose(s.station_pos, [0.6, 0.8, 1.0])


def test_station_idle_without_users():
    cfg = PRESETS["rural"]
    s = put_users(fresh(cfg), np.zeros((0, 2)), [])
    before = s.station_pos.copy()
    E.relocate_station(s, cfg)
    assert np.array_equal(s.station_pos, before)


def test_users_frozen_without_moves(rural):
    cfg = replace(rural, move_prob=0.0)
    s = fresh(cfg)
    before = s.user_pos.copy()
    E.advance_users(s, cfg)
    assert np.array_equal(s.user_pos, before)


def test_users_stay_in_grid(urban):
    s = fresh(urban)
    s.user_speed[:] = 250.0
    for _ in range(50):
        E.advance_users(s, urban)
    assert np.all((s.user_pos >= 0) & (s.user_pos <= 3.0))


# -- step -------------------------------------------------------------------

def test_full_episode_with_zero_actions(rural):
    s = fresh(rural)
    for _ in range(1000):
        out = E.step(s, np.zeros((4, 3)), rural)
    assert out.done and s.t == 1000
    with pytest.raises(E.StepError):
        E.step(s, np.zeros((4, 3)), rural)


def test_step_deterministic(small):
    a, b = fresh(small, 4), fresh(small, 4)
    acts = np.random.default_rng(0).uniform(-1, 1, (20, 2, 3))
    for act in acts:
        oa, ob = E.step(a, act, small), E.step(b, act, small)
        assert np.array_equal(oa.observation, ob.observation) and oa.reward == ob.reward
    assert a.equals(b)


def test_reward_matches_recomputation(small):
    s = fresh(small, 2)
    rng = np.random.default_rng(2)
    for _ in range(small.max_steps):
        out = E.step(s, rng.uniform(-1, 1, (2, 3)), small)
        assert E.reward_from_info(out.info, small) == out.reward


@pytest.mark.parametrize("n", [1, 2, 3, 4, 6])
def test_observation_layout(n):
    cfg = replace(reduced_rural(), n_drones=n)
    s = fresh(cfg)
    out = E.step(s, np.random.default_rng(n).uniform(-1, 1, (n, 3)), cfg)
    obs = out.observation
    idx = E.observation_index(n)
    assert len(obs) == 6 * n + 12 == cfg.obs_dim
    assert np.array_equal(obs[idx["positions"]], s.drone_pos.ravel())
    assert np.array_equal(obs[idx["batteries"]], s.battery)
    assert np.array_equal(obs[idx["counts"]], out.info["class_counts"])
    assert np.array_equal(obs[idx["velocities"]], s.drone_vel[:, :2].ravel())
    qos = obs[idx["qos"]].reshape(3, 3)
    for c in range(3):
        if out.info["class_counts"][c] == 0:
            assert np.all(qos[c] == 0.0)
        else:
            assert np.array_equal(qos[c], out.info["class_means"][c])
    assert E.observation_scale(cfg).shape == obs.shape


def test_env_wrapper(small):
    env = E.UAVSliceEnv(small)
    with pytest.raises(E.StepError):
        env.step(np.zeros((2, 3)))
    obs = env.reset(1)
    assert obs.shape == (env.obs_dim,)
    assert env.step(np.zeros((2, 3))).observation.shape == obs.shape


@settings(max_examples=15)
@given(st.integers(0, 2 ** 32 - 1), st.sampled_from(["urban", "rural"]))
def test_invariants_after_every_step(seed, kind):
    cfg = replace(PRESETS[kind], max_steps=60)
    s = fresh(cfg, seed)
    rng = np.random.default_rng(seed)
    for _ in range(60):
        prev = s.station_pos.copy()
        E.step(s, rng.uniform(-2, 2, (4, 3)), cfg)
        assert all(E.check_invariants(s, cfg, prev).values())
