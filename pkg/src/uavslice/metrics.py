"""Per-link QoS metrics, class aggregation, QoS scores and the scalarised objective.

SINR enters scores and rewards in dB; the throughput mapping consumes linear
SINR. Classes with no served users are *absent*: their means are ``None`` and
their score is 0.
"""
from dataclasses import dataclass
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .config import CLASSES, MetricParams, SliceTargets, UserClass


@dataclass(frozen=True)
class LinkMetrics:
    user_id: int
    user_class: UserClass
    sinr_db: float
    throughput_mbps: float
    latency_ms: float


@dataclass(frozen=True)
class ClassAggregate:
    user_class: UserClass
    count: int = 0
    mean_latency_ms: Optional[float] = None
    mean_throughput_mbps: Optional[float] = None
    mean_sinr_db: Optional[float] = None

    @property
    def present(self) -> bool:
        return self.count > 0

    def as_triple(self) -> Tuple[float, float, float]:
        """(L, T, S) with the absent -> 0 convention used in observations."""
        if not self.present:
            return 0.0, 0.0, 0.0
        return self.mean_latency_ms, self.mean_throughput_mbps, self.mean_sinr_db


def throughput_from_sinr(sinr_linear, bandwidth_mhz: float = 36.0):
    s = np.asarray(sinr_linear, dtype=float)
    if np.any(s < 0) or np.any(np.isnan(s)):
        raise ValueError("SINR must be non-negative")
    t = bandwidth_mhz * np.log2(1.0 + s)
    return float(t) if t.ndim == 0 else t


def latency_raw_bounds(params: MetricParams) -> Tuple[float, float]:
    t_cap = params.bandwidth_mhz * np.log2(1.0 + 10.0 ** (params.sinr_cap_db / 10.0))
    return 1.0 / (t_cap + params.latency_eps), 1.0 / params.latency_eps


def latency_raw(distance_m, throughput_mbps, drone_speed, params: MetricParams):
    d = np.asarray(distance_m, dtype=float)
    t = np.asarray(throughput_mbps, dtype=float)
    return (d / params.light_speed + 1.0 / (t + params.latency_eps)) * (1.0 + params.latency_kappa * np.asarray(drone_speed))


def rescale_latency(raw, params: MetricParams):
    lo, hi = latency_raw_bounds(params)
    span = params.latency_max_ms - params.latency_min_ms
    ms = params.latency_min_ms + span * (np.asarray(raw, dtype=float) - lo) / (hi - lo)
    ms = np.clip(ms, params.latency_min_ms, params.latency_max_ms)
    return float(ms) if ms.ndim == 0 else ms


def latency_proxy(distance_m, throughput_mbps, drone_speed, params: MetricParams = MetricParams()):
    """Propagation + service delay proxy, rescaled onto the [1, 40] ms band."""
    if np.any(np.asarray(throughput_mbps) < 0) or np.any(np.asarray(distance_m) < 0):
        raise ValueError("distance and throughput must be non-negative")
    return rescale_latency(latency_raw(distance_m, throughput_mbps, drone_speed, params), params)


def aggregate_class_metrics(per_user: Iterable[LinkMetrics]) -> Tuple[ClassAggregate, ...]:
    buckets = {c: [] for c in CLASSES}
    for m in per_user:
        buckets[UserClass(m.user_class)].append(m)
    out = []
    for c in CLASSES:
        rows = buckets[c]
        if not rows:
            out.append(ClassAggregate(c))
            continue
        n = len(rows)
        out.append(ClassAggregate(
            c, n,
            sum(r.latency_ms for r in rows) / n,
            sum(r.throughput_mbps for r in rows) / n,
            sum(r.sinr_db for r in rows) / n,
        ))
    return tuple(out)


def grouped_means(group: np.ndarray, n_groups: int, values: np.ndarray):
    """Counts and per-group means (NaN where empty) of ``values`` (shape ``(n, k)``)."""
    counts = np.bincount(group, minlength=n_groups)
    sums = np.stack([np.bincount(group, weights=values[:, j], minlength=n_groups)
                     for j in range(values.shape[1])], axis=1) if len(group) else np.zeros((n_groups, values.shape[1]))
    with np.errstate(invalid="ignore", divide="ignore"):
        means = sums / counts[:, None]
    means[counts == 0] = np.nan
    return counts, means


def aggregates_from_arrays(counts: np.ndarray, means: np.ndarray) -> Tuple[ClassAggregate, ...]:
    """Build the class triple from ``counts[3]`` and ``means[3, (L, T, S)]``."""
    out = []
    for c in CLASSES:
        n = int(counts[c])
        if n == 0:
            out.append(ClassAggregate(c))
        else:
            lat, thr, sinr = (float(v) for v in means[c])
            out.append(ClassAggregate(c, n, lat, thr, sinr))
    return tuple(out)


def qos_score(agg: ClassAggregate, targets: SliceTargets) -> float:
    if not agg.present:
        return 0.0
    return ((targets.latency_ms - agg.mean_latency_ms) / targets.latency_ms
            + (agg.mean_throughput_mbps - targets.throughput_mbps) / targets.throughput_mbps
            + (agg.mean_sinr_db - targets.sinr_db) / targets.sinr_db)


def drone_utility(scores: Sequence[float], weights: Sequence[float]) -> float:
    wa, wb, wc = weights
    qa, qb, qc = scores
    return wa * qa + wb * qb + wc * qc


def scalarized_objective(utilities: Sequence[float], energies: Sequence[float], lam: float) -> float:
    if lam < 0:
        raise ValueError("trade-off parameter must be non-negative")
    return float(sum(utilities)) - lam * float(sum(energies))


def drone_utilities(per_drone: Sequence[Sequence[ClassAggregate]], targets, weights) -> List[float]:
    return [drone_utility([qos_score(a, t) for a, t in zip(aggs, targets)], weights) for aggs in per_drone]
