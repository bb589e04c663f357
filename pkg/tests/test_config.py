from dataclasses import replace

import pytest

from uavslice import config as C
from uavslice.config import CLASSES, PRESETS, ConfigError, UserClass, load_scenario, reduced_rural


def test_user_class_ordering():
    assert len(UserClass) == 3
    assert UserClass.A.outranks(UserClass.B) and UserClass.B.outranks(UserClass.C)
    assert UserClass.A.outranks(UserClass.C)
    assert not UserClass.C.outranks(UserClass.A)
    assert not UserClass.B.outranks(UserClass.B)


@pytest.mark.parametrize("name,grid,d_com,coverage", [
    ("rural", (10.0, 10.0), 5.0, 3.0),
    ("urban", (3.0, 3.0), 2.0, 1.5),
])
def test_preset_geometry(name, grid, d_com, coverage):
    cfg = load_scenario(name)
    assert cfg.grid_extent == grid
    assert cfg.comm_range == d_com
    assert cfg.coverage_range == coverage
    assert cfg.n_drones == 4
    assert cfg.obs_dim == 36


@pytest.mark.parametrize("name", ["rural", "urban"])
def test_preset_tables(name):
    cfg = load_scenario(name)
    assert [(t.latency_ms, t.throughput_mbps, t.sinr_db) for t in cfg.targets] == [
        (1.0, 500.0, 25.0), (10.0, 350.0, 15.0), (40.0, 200.0, 10.0)]
    assert cfg.user_count_ranges == ((1, 90), (1, 50), (1, 40))
    assert cfg.weights == (4.5, 2.5, 1.5)
    assert cfg.reward_weights == (4.0, 1.0)
    assert cfg.e_max == 100.0 and cfg.b_min == 10.0
    assert cfg.max_steps == 1000
    assert cfg.energy.hover_cost == 0.1
    assert cfg.energy.recharge_rate == 2.0
    assert cfg.energy.full_charge_level == 90.0


def test_agent_hyperparameters_match_table():
    a = PRESETS["rural"].agents
    assert (a.mappo.gamma, a.maddpg.gamma, a.madqn.gamma) == (0.99, 1.0, 0.01)
    assert (a.mappo.tau, a.maddpg.tau, a.madqn.tau) == (0.005, 0.01, 0.01)
    assert a.mappo.clip == 0.2
    assert a.maddpg.epsilon == 0.1
    assert (a.madqn.eps_start, a.madqn.eps_min, a.madqn.eps_decay) == (1.0, 0.5, 0.9)
    for p in (a.mappo, a.maddpg, a.madqn):
        assert p.lr == 1e-3 and p.batch_size == 128 and p.hidden == (128, 128)
    assert a.maddpg.buffer_size == a.madqn.buffer_size == 50000
    assert a.maddpg.alpha == a.madqn.alpha == 0.6


def test_channel_presets_differ():
    u, r = PRESETS["urban"].channel, PRESETS["rural"].channel
    assert u.shadowing_sigma_los_db > r.shadowing_sigma_los_db
    assert u.rician_k_db < r.rician_k_db
    assert u.los_prob_d0 < r.los_prob_d0


@pytest.mark.parametrize("name", ["rural", "urban"])
def test_roundtrip(name):
    cfg = PRESETS[name]
    assert C.loads(C.dumps(cfg)) == cfg


def test_roundtrip_modified(tmp_path):
    cfg = replace(reduced_rural(), seed=5)
    path = tmp_path / "s.ini"
    C.save(cfg, path)
    assert load_scenario(str(path)) == cfg


def test_file_overrides_preset():
    text = "[world]\nscenario_kind = urban\nn_drones = 2\n\n[targets.A]\nthroughput_mbps = 600.0\n" \
           "[agents.mappo]\nstate_std = false\n"
    cfg = C.loads(text)
    assert cfg.scenario_kind == "urban" and cfg.n_drones == 2
    assert cfg.targets[0].throughput_mbps == 600.0
    assert cfg.targets[1] == PRESETS["urban"].targets[1]
    assert cfg.agents.mappo.state_std is False
    assert cfg.comm_range == 2.0


def test_weight_ordering_rejected():
    with pytest.raises(ConfigError, match="w_A > w_B"):
        C.loads("[world]\nweight_A = 1.0\nweight_B = 2.0\n")


def test_altitude_band_rejected():
    with pytest.raises(ConfigError, match="h_min"):
        C.loads("[world]\nh_min = 10.0\nh_max = 10.0\n")


@pytest.mark.parametrize("text,fragment", [
    ("[world]\nn_dronez = 3\n", "n_dronez"),
    ("[world]\nn_drones = three\n", "n_drones"),
    ("[bogus]\nx = 1\n", "bogus"),
    ("[targets.D]\nsinr_db = 1.0\n", "targets.D"),
    ("[channel]\nfoo = 1.0\n", "foo"),
    ("[agents.mappo]\nstate_std = maybe\n", "state_std"),
    ("no section header\n", "malformed"),
])
def test_parse_errors_name_field(text, fragment):
    with pytest.raises(ConfigError, match=fragment):
        C.loads(text)


def test_missing_file():
    with pytest.raises(ConfigError, match="cannot read"):
        load_scenario("/nonexistent/scenario.ini")


def test_direct_construction_validates():
    with pytest.raises(ConfigError):
        replace(PRESETS["rural"], weights=(1.0, 1.0, 1.0))
    with pytest.raises(ConfigError):
        replace(PRESETS["rural"], b_min=0.0)


def test_reduced_rural():
    cfg = reduced_rural()
    assert cfg.n_drones == 2 and cfg.max_steps == 200
    assert sum(lo for lo, _ in cfg.user_count_ranges) == 20
    assert all(lo == hi for lo, hi in cfg.user_count_ranges)
    assert cfg.obs_dim == 24
    assert [c.name for c in CLASSES] == ["A", "B", "C"]
