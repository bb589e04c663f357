import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from uavslice import channel as ch
from uavslice.config import PRESETS, ChannelParams

RURAL = PRESETS["rural"].channel


def test_los_probability_midpoint():
    for params in (RURAL, PRESETS["urban"].channel):
        assert ch.los_probability(params.los_prob_d0, params) == pytest.approx(0.5)


def test_los_probability_limits():
    assert ch.los_probability(1e-6, RURAL) > 0.98
    assert ch.los_probability(1e3, RURAL) < 1e-12
    with pytest.raises(ValueError):
        ch.los_probability(0.0, RURAL)


@given(st.floats(0.01, 50), st.floats(0.01, 50))
def test_los_probability_decreasing(a, b):
    lo, hi = sorted((a, b))
    assert ch.los_probability(lo, RURAL) >= ch.los_probability(hi, RURAL)


def test_deterministic_reference_link():
    p = ChannelParams(shadowing_sigma_los_db=0.0, rician_k_db=np.inf)
    rng = np.random.default_rng(0)
    link = ch.sample_link(rng, (0, 0, 0), (p.ref_distance, 0, 0), p, force_los=True)
    assert link.los and link.power_gain == pytest.approx(1.0, abs=1e-12)


def test_path_gain_nlos_never_above_los():
    d = np.linspace(0.01, 30, 500)
    assert np.all(ch.path_gain(d, False, RURAL) <= ch.path_gain(d, True, RURAL))
    assert ch.path_gain(RURAL.ref_distance, False, RURAL) == pytest.approx(1.0)


def test_path_gain_clamps_min_distance():
    assert ch.path_gain(0.0, True, RURAL) == ch.path_gain(RURAL.min_distance, True, RURAL)


def test_shadowing_spread():
    rng = np.random.default_rng(1)
    x = ch.shadowing_db(rng, 6.0, 200_000)
    assert 5.7 <= x.std() <= 6.3
    # unit mean in linear power
    assert np.mean(10 ** (x / 10)) == pytest.approx(1.0, rel=0.03)


@pytest.mark.parametrize("k_db", [9.0, 5.0, -np.inf])
def test_fading_unit_mean(k_db):
    rng = np.random.default_rng(2)
    assert ch.fading_power(rng, k_db, 400_000).mean() == pytest.approx(1.0, rel=0.01)


def test_fading_no_scatter_at_infinite_k():
    assert np.all(ch.fading_power(np.random.default_rng(3), np.inf, 100) == 1.0)


def test_force_los_keeps_stream_aligned():
    d = np.array([0.5, 3.0, 9.0])
    r1, r2 = np.random.default_rng(4), np.random.default_rng(4)
    ch.sample_links(r1, d, RURAL, force_los=True)
    ch.sample_links(r2, d, RURAL)
    assert r1.bit_generator.state == r2.bit_generator.state


def test_sinr_hand_case():
    p = ChannelParams(noise_power=0.1)
    serving = ch.LinkSample(True, 1.0, 1.0)
    lin, db = ch.compute_sinr(serving, [], p)
    assert lin == pytest.approx(10.0) and db == pytest.approx(10.0, abs=1e-9)


def test_sinr_equal_interferer_zero_db():
    p = ChannelParams(noise_power=1e-15)
    s = ch.LinkSample(True, 1.0, 1.0)
    _, db = ch.compute_sinr(s, [(ch.LinkSample(True, 1.0, 1.0), ch.Transmitter())], p)
    assert db == pytest.approx(0.0, abs=1e-9)


@given(st.floats(1e-6, 1e3), st.floats(1e-6, 1e3), st.floats(1e-6, 1e3))
def test_interferer_lowers_sinr(g_serv, g_int, g_int2):
    p = ChannelParams()
    s = ch.LinkSample(True, 1.0, g_serv)
    one = [(ch.LinkSample(False, 2.0, g_int), ch.Transmitter())]
    two = one + [(ch.LinkSample(False, 3.0, g_int2), ch.Transmitter())]
    assert ch.compute_sinr(s, two, p)[0] < ch.compute_sinr(s, one, p)[0] < ch.compute_sinr(s, [], p)[0]


@given(st.floats(0.1, 100))
def test_sinr_scale_invariance(k):
    """Scaling every received power and the noise together leaves SINR unchanged."""
    p = ChannelParams(noise_power=0.1)
    q = ChannelParams(noise_power=0.1 * k)
    s = ch.LinkSample(True, 1.0, 0.7)
    i = ch.LinkSample(True, 1.0, 0.2)
    a = ch.compute_sinr(s, [(i, ch.Transmitter())], p)[0]
    b = ch.compute_sinr(ch.LinkSample(True, 1.0, 0.7 * k), [(ch.LinkSample(True, 1.0, 0.2 * k), ch.Transmitter())], q)[0]
    assert a == pytest.approx(b, rel=1e-9)


def test_sinr_rejects_dead_link():
    with pytest.raises(ValueError):
        ch.compute_sinr(ch.LinkSample(False, 1.0, 0.0), [], RURAL)


def test_sinr_matrix_matches_scalar_path():
    rng = np.random.default_rng(5)
    gains = rng.uniform(0.01, 2.0, (3, 4))
    serving = np.array([0, 2, -1, 1])
    active = np.array([True, True, False])
    out = ch.sinr_matrix(gains, serving, active, RURAL)
    assert np.isnan(out[2])
    for m in (0, 1, 3):
        inter = [(ch.LinkSample(True, 1.0, gains[j, m]), ch.Transmitter())
                 for j in range(3) if j != serving[m] and active[j]]
        assert out[m] == pytest.approx(ch.compute_sinr(ch.LinkSample(True, 1.0, gains[serving[m], m]), inter, RURAL)[0])
