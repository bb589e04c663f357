import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from uavslice import metrics as qm
from uavslice.config import TABLE_TARGETS, MetricParams, UserClass

A, B, C = UserClass.A, UserClass.B, UserClass.C


@pytest.mark.parametrize("sinr,expected", [(1.0, 36.0), (0.0, 0.0), (1023.0, 360.0)])
def test_throughput_oracles(sinr, expected):
    assert qm.throughput_from_sinr(sinr, 36.0) == pytest.approx(expected, abs=1e-12)


def test_throughput_rejects_negative():
    with pytest.raises(ValueError):
        qm.throughput_from_sinr(-0.5)


@given(st.floats(0, 1e6), st.floats(0, 1e6))
def test_throughput_increasing_concave(a, b):
    lo, hi = sorted((a, b))
    t_lo, t_hi, t_mid = (qm.throughput_from_sinr(x) for x in (lo, hi, 0.5 * (lo + hi)))
    assert t_lo <= t_hi
    assert t_mid >= 0.5 * (t_lo + t_hi) - 1e-9


def test_latency_clamps():
    p = MetricParams(latency_kappa=0.0)
    assert qm.latency_proxy(0.0, 1e12, 0.0, p) == 1.0
    assert qm.latency_proxy(0.0, 0.0, 0.0, p) == 40.0


def test_latency_midpoint():
    p = MetricParams()
    lo, hi = qm.latency_raw_bounds(p)
    assert qm.rescale_latency(0.5 * (lo + hi), p) == pytest.approx(20.5)


@given(st.floats(0, 1e4), st.floats(0, 1e4), st.floats(0, 5))
def test_latency_in_band(d, t, v):
    assert 1.0 <= qm.latency_proxy(d, t, v) <= 40.0


@given(st.floats(0, 1e4), st.floats(0, 1e3), st.floats(0, 1e3))
def test_latency_monotone_in_throughput(d, t1, t2):
    lo, hi = sorted((t1, t2))
    assert qm.latency_proxy(d, lo, 0.0) >= qm.latency_proxy(d, hi, 0.0)


def link(uid, cls, sinr, thr, lat):
    return qm.LinkMetrics(uid, cls, sinr, thr, lat)


def test_aggregate_empty():
    aggs = qm.aggregate_class_metrics([])
    assert [a.count for a in aggs] == [0, 0, 0]
    assert all(a.mean_latency_ms is None and not a.present for a in aggs)
    assert aggs[0].as_triple() == (0.0, 0.0, 0.0)


def test_aggregate_singleton_and_mean():
    aggs = qm.aggregate_class_metrics([link(0, A, 25.0, 500.0, 1.0)])
    assert aggs[A].as_triple() == (1.0, 500.0, 25.0)
    aggs = qm.aggregate_class_metrics([link(0, A, 20.0, 400.0, 1.0), link(1, A, 30.0, 600.0, 3.0),
                                       link(2, C, 5.0, 100.0, 30.0)])
    assert aggs[A].count == 2 and aggs[A].mean_latency_ms == 2.0
    assert aggs[A].mean_sinr_db == 25.0
    assert aggs[B].count == 0 and aggs[C].count == 1


def test_aggregates_from_arrays_matches():
    per_user = [link(0, A, 20.0, 400.0, 1.0), link(1, B, 10.0, 300.0, 5.0), link(2, B, 12.0, 100.0, 7.0)]
    values = np.array([[u.latency_ms, u.throughput_mbps, u.sinr_db] for u in per_user])
    counts, means = qm.grouped_means(np.array([0, 1, 1]), 3, values)
    assert qm.aggregates_from_arrays(counts, means) == qm.aggregate_class_metrics(per_user)


def test_qos_score_oracles():
    on_target = qm.ClassAggregate(A, 1, 1.0, 500.0, 25.0)
    assert qm.qos_score(on_target, TABLE_TARGETS[0]) == 0.0
    good = qm.ClassAggregate(A, 1, 0.5, 750.0, 30.0)
    assert qm.qos_score(good, TABLE_TARGETS[0]) == pytest.approx(1.2)
    assert qm.qos_score(qm.ClassAggregate(A), TABLE_TARGETS[0]) == 0.0


def test_qos_score_negative_sinr_passes_through():
    agg = qm.ClassAggregate(C, 1, 40.0, 200.0, -10.0)
    assert qm.qos_score(agg, TABLE_TARGETS[2]) == pytest.approx(-2.0)


@given(st.floats(1, 40), st.floats(0, 1e3), st.floats(-20, 60), st.floats(0, 100))
def test_qos_score_monotone_in_throughput(lat, thr, sinr, bump):
    base = qm.qos_score(qm.ClassAggregate(B, 3, lat, thr, sinr), TABLE_TARGETS[1])
    raised = qm.qos_score(qm.ClassAggregate(B, 3, lat, thr + bump, sinr), TABLE_TARGETS[1])
    assert raised >= base


@pytest.mark.parametrize("scores,expected", [((0, 0, 0), 0.0), ((1, 1, 1), 8.5), ((1, 0, 0), 4.5)])
def test_drone_utility(scores, expected):
    assert qm.drone_utility(scores, (4.5, 2.5, 1.5)) == pytest.approx(expected)


def test_scalarized_objective():
    assert qm.scalarized_objective([1.0, 1.0], [0.5, 0.5], 1.0) == 1.0
    assert qm.scalarized_objective([2.0, 3.0], [9.0, 9.0], 0.0) == 5.0
    assert qm.scalarized_objective([], [], 1.0) == 0.0
    with pytest.raises(ValueError):
        qm.scalarized_objective([1.0], [1.0], -1.0)


@given(st.floats(0, 10), st.floats(0, 10))
def test_objective_decreasing_in_lambda(l1, l2):
    lo, hi = sorted((l1, l2))
    assert qm.scalarized_objective([1.0, 2.0], [0.3, 0.4], hi) <= qm.scalarized_objective([1.0, 2.0], [0.3, 0.4], lo)
