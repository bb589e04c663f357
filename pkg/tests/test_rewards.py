import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from uavslice import rewards as rw
from uavslice.config import TABLE_TARGETS, EnergyParams, UserClass
from uavslice.metrics import ClassAggregate

W = (4.5, 2.5, 1.5)
ABSENT = (ClassAggregate(UserClass.A), ClassAggregate(UserClass.B), ClassAggregate(UserClass.C))


def only_a(lat=1.0, thr=500.0, sinr=25.0):
    return (ClassAggregate(UserClass.A, 1, lat, thr, sinr),) + ABSENT[1:]


def test_qos_terms_on_target():
    assert rw.qos_reward_terms([only_a()], TABLE_TARGETS, W) == (0.0, 0.0, 0.0)
    assert rw.qos_reward_terms([ABSENT, ABSENT], TABLE_TARGETS, W) == (0.0, 0.0, 0.0)


def test_qos_terms_hand_cases():
    r_lat, _, _ = rw.qos_reward_terms([only_a(lat=2.0)], TABLE_TARGETS, W)
    assert r_lat == pytest.approx(-4.5)
    _, r_thr, _ = rw.qos_reward_terms([only_a(thr=1000.0)], TABLE_TARGETS, W)
    assert r_thr == pytest.approx(4.5)


@given(st.floats(1, 40), st.floats(0, 30))
def test_latency_term_non_increasing(lat, extra):
    a = rw.qos_reward_terms([only_a(lat=lat)], TABLE_TARGETS, W)[0]
    b = rw.qos_reward_terms([only_a(lat=lat + extra)], TABLE_TARGETS, W)[0]
    assert b <= a


def test_efficiency_reward():
    assert rw.efficiency_reward(np.zeros((2, 3)), [50.0, 60.0]) == 0.0
    assert rw.efficiency_reward([[2.0, 0, 0]], [90.0]) == pytest.approx(-2 / 10.00001)
    assert rw.efficiency_reward([[1.0, 0, 0]], [100.0]) == pytest.approx(-1e5)
    with pytest.raises(ValueError):
        rw.efficiency_reward([[1.0, 0, 0]], [90.0], e_max=0.0)


@pytest.mark.parametrize("n,expected", [(0, 0.0), (3, 15.0), (90, 450.0)])
def test_coverage_bonus(n, expected):
    assert rw.coverage_bonus(n) == expected


def test_low_battery_penalty():
    assert rw.low_battery_penalty([5.0], [True]) == -5.0
    assert rw.low_battery_penalty([5.0], [False]) == -10.0
    assert rw.low_battery_penalty([50.0], [False]) == 0.0
    assert rw.low_battery_penalty([5.0, 9.9, 10.0], [True, False, False]) == -15.0


def test_total_energy():
    e = EnergyParams()
    assert rw.total_energy(np.zeros(4), np.zeros(4), e) == pytest.approx(0.4)
    assert rw.total_energy([2.0], [5], e) == pytest.approx(1.2)
    assert rw.total_energy([], [], e) == 0.0
    assert rw.total_energy([2.0, 1.0], [5, 3], e, docked=[False, True]) == pytest.approx(1.2)


def test_total_reward_assembly():
    assert rw.total_reward(0, 0, 0, 0, 0, 0, 0).total == 0.0
    b = rw.total_reward(1.0, 1.0, 1.0, -2.0, 0.0, 0.0, 0.0, 4.0, 1.0)
    assert b.r_energy == -2.0 and b.total == 10.0


@given(*[st.floats(-1e6, 1e6) for _ in range(7)], st.floats(0.1, 10), st.floats(0.1, 10))
def test_identity_bit_exact(a, b, c, d, e, f, g, r_w, e_w):
    br = rw.total_reward(a, b, c, d, e, f, g, r_w, e_w)
    assert br.r_energy == br.r_eff + br.r_bonus - br.e_total + br.p_low
    assert br.total == r_w * (br.r_latency + br.r_throughput + br.r_sinr) + e_w * br.r_energy
    assert list(br.as_dict()) == list(rw.FIELDS)
