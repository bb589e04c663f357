"""Air-to-ground link model in the spirit of 3GPP TR 38.901.

Each link draws a LoS/NLoS state from a logistic, distance-dependent
probability, applies the matching power-law path gain, then multiplies in
log-normal shadowing and small-scale fading. Everything is in the linear power
domain and normalised so a LoS link at ``ref_distance`` has unit path gain.

Shadowing is drawn with a dB mean of ``-sigma**2 * ln(10) / 20`` so that its
linear-power mean is one; the dB spread is still ``sigma``. LoS links get
Rician fading with the configured K-factor, NLoS links get Rayleigh (K = 0).
Both fading laws have unit mean power.
"""
from dataclasses import dataclass, replace
from typing import NamedTuple, Optional, Sequence, Tuple

import numpy as np

from .config import ChannelParams

LN10_OVER_10 = np.log(10.0) / 10.0


@dataclass(frozen=True)
class LinkSample:
    los: bool
    distance: float
    power_gain: float


class Transmitter(NamedTuple):
    tx_power: float = 1.0
    gain_tx: float = 1.0


def los_probability(distance, params: ChannelParams):
    d = np.asarray(distance, dtype=float)
    if np.any(~(d > 0)):
        raise ValueError("LoS probability needs a strictly positive distance")
    # 1/(1+exp(x)) written via tanh to stay finite for large |x|
    x = params.los_prob_slope * (d - params.los_prob_d0)
    p = 0.5 * (1.0 - np.tanh(0.5 * x))
    return float(p) if p.ndim == 0 else p


def path_gain(distance, los, params: ChannelParams):
    """Deterministic large-scale gain.

    Below ``ref_distance`` both states follow the LoS exponent; beyond it NLoS
    decays with its own, steeper exponent. The gain is continuous, strictly
    decreasing in distance, and never larger for NLoS than for LoS.
    """
    d = np.maximum(np.asarray(distance, dtype=float), params.min_distance)
    rel = d / params.ref_distance
    g_los = rel ** (-params.pathloss_exp_los)
    g_nlos = np.minimum(rel, 1.0) ** (-params.pathloss_exp_los) * np.maximum(rel, 1.0) ** (-params.pathloss_exp_nlos)
    g = np.where(np.asarray(los, dtype=bool), g_los, g_nlos)
    return float(g) if g.ndim == 0 else g


def shadowing_db(rng: np.random.Generator, sigma_db, size=None):
    sigma = np.asarray(sigma_db, dtype=float)
    z = rng.standard_normal(size)
    return sigma * z - sigma ** 2 * LN10_OVER_10 / 2.0


def fading_power(rng: np.random.Generator, k_db, size=None):
    """|h|^2 for Rician fading with K-factor ``k_db`` (``-inf`` -> Rayleigh, ``inf`` -> no fading)."""
    k = 10.0 ** (np.asarray(k_db, dtype=float) / 10.0)
    x = rng.standard_normal(size)
    y = rng.standard_normal(size)
    with np.errstate(invalid="ignore", divide="ignore"):
        los_amp = np.sqrt(k / (k + 1.0))
        scatter = np.sqrt(1.0 / (2.0 * (k + 1.0)))
    los_amp = np.where(np.isinf(k), 1.0, los_amp)
    scatter = np.where(np.isinf(k), 0.0, scatter)
    return (los_amp + scatter * x) ** 2 + (scatter * y) ** 2


def sample_links(rng: np.random.Generator, distances, params: ChannelParams, force_los: Optional[bool] = None):
    """Vectorised link draw. Returns ``(los, power_gain)`` with ``distances``' shape.

    The generator is advanced by the same amount regardless of ``force_los``
    so forcing a state never shifts the downstream stream.
    """
    d = np.maximum(np.asarray(distances, dtype=float), params.min_distance)
    shape = d.shape
    u = rng.random(shape)
    if force_los is None:
        los = u < los_probability(d, params)
    else:
        los = np.full(shape, bool(force_los))
    sigma = np.where(los, params.shadowing_sigma_los_db, params.shadowing_sigma_nlos_db)
    shadow = 10.0 ** (shadowing_db(rng, sigma, shape) / 10.0)
    k_db = np.where(los, params.rician_k_db, -np.inf)
    fade = fading_power(rng, k_db, shape)
    return los, path_gain(d, los, params) * shadow * fade


def sample_link(rng: np.random.Generator, a, b, params: ChannelParams, force_los: Optional[bool] = None) -> LinkSample:
    dist = float(np.linalg.norm(np.asarray(a, dtype=float) - np.asarray(b, dtype=float)))
    dist = max(dist, params.min_distance)
    los, gain = sample_links(rng, np.array([dist]), params, force_los)
    return LinkSample(los=bool(los[0]), distance=dist, power_gain=float(gain[0]))


def link_params_d2d(params: ChannelParams) -> ChannelParams:
    """Drone-to-drone / drone-to-station links: same sampler, predominantly LoS."""
    return replace(params, los_prob_d0=2.0 * params.los_prob_d0)


def compute_sinr(serving: LinkSample, interferers: Sequence[Tuple[LinkSample, Transmitter]],
                 params: ChannelParams, serving_tx: Optional[Transmitter] = None) -> Tuple[float, float]:
    """Return ``(linear, dB)`` SINR of the serving link against co-channel interferers."""
    if not serving.power_gain > 0:
        raise ValueError("serving link must have positive power gain")
    tx = serving_tx or Transmitter(params.tx_power, params.gain_tx)
    signal = tx.tx_power * tx.gain_tx * params.gain_rx * serving.power_gain
    interference = 0.0
    for link, k in interferers:
        interference += k.tx_power * k.gain_tx * params.gain_rx * link.power_gain
    linear = signal / (interference + params.noise_power)
    return linear, 10.0 * np.log10(linear)


def sinr_matrix(gains: np.ndarray, serving: np.ndarray, active: np.ndarray, params: ChannelParams) -> np.ndarray:
    """Linear SINR for every user given a ``(n_drones, n_users)`` gain matrix.

    ``serving[m]`` is the serving drone of user ``m`` (or -1); only drones with
    ``active`` set contribute interference. Unserved users get NaN.
    """
    rx = params.tx_power * params.gain_tx * params.gain_rx * gains
    out = np.full(gains.shape[1], np.nan)
    idx = np.nonzero(serving >= 0)[0]
    if idx.size:
        own = serving[idx]
        co_channel = active[:, None] & (np.arange(gains.shape[0])[:, None] != own[None, :])
        interference = np.where(co_channel, rx[:, idx], 0.0).sum(axis=0)
        out[idx] = rx[own, idx] / (interference + params.noise_power)
    return out
