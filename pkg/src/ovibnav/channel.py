"""UAV-to-edge wireless link: channel gain, Shannon rate and payload delay.

Gain follows log-distance path loss with log-normal shadowing and optional
Rayleigh fading::

    g = g0 * (d0 / d) ** pathloss_exp * 10 ** (xi / 10) * |h|^2

Throughput units: 1 KB = 1024 bytes = 8192 bits.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from .numkernel import RngState

BITS_PER_KB = 8192


@dataclass
class LinkParams:
    bandwidth_hz: float = 1e6
    tx_power_w: float = 0.1
    noise_density_w_per_hz: float = 4e-21  # about -174 dBm/Hz
    ref_gain: float = 1e-4
    ref_distance_m: float = 1.0
    pathloss_exp: float = 2.7
    shadowing_std_db: float = 4.0
    fading: str = "rayleigh"

    def __post_init__(self):
        for name in ("bandwidth_hz", "tx_power_w", "noise_density_w_per_hz",
                     "ref_gain", "ref_distance_m", "pathloss_exp"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.shadowing_std_db < 0:
            raise ValueError("shadowing_std_db must be non-negative")
        if self.fading not in ("none", "rayleigh"):
            raise ValueError("fading must be 'none' or 'rayleigh'")

    @classmethod
    def from_dict(cls, d: dict) -> "LinkParams":
        return cls(**d)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @property
    def deterministic(self) -> bool:
        return self.shadowing_std_db == 0 and self.fading == "none"


@dataclass
class LinkSample:
    gain: float
    rate_bps: float
    delay_s: float


def mean_path_gain(params: LinkParams, distance_m) -> np.ndarray | float:
    d = np.asarray(distance_m, dtype=np.float64)
    if np.any(d <= 0):
        raise ValueError("distance must be positive")
    return params.ref_gain * (params.ref_distance_m / d) ** params.pathloss_exp


def channel_gain(params: LinkParams, distance_m, rng: RngState | None = None, size=None):
    """Draw channel gain(s) at ``distance_m``; ``size`` draws several at once."""
    g = mean_path_gain(params, distance_m)
    shape = np.shape(g) if size is None else size
    if params.shadowing_std_db > 0:
        if rng is None:
            raise ValueError("shadowing needs an rng")
        xi = params.shadowing_std_db * rng.generator.standard_normal(shape)
        g = g * 10.0 ** (xi / 10.0)
    if params.fading == "rayleigh":
        if rng is None:
            raise ValueError("fading needs an rng")
        g = g * rng.generator.exponential(1.0, shape)
    g = np.broadcast_to(g, shape) if size is not None else g
    return float(g) if np.ndim(g) == 0 else np.asarray(g, dtype=np.float64)


def shannon_rate(params: LinkParams, gain):
    g = np.asarray(gain, dtype=np.float64)
    if np.any(g < 0):
        raise ValueError("gain must be non-negative")
    snr = params.tx_power_w * g / (params.noise_density_w_per_hz * params.bandwidth_hz)
    r = params.bandwidth_hz * np.log2(1.0 + snr)
    return float(r) if np.ndim(r) == 0 else r


def transmission_delay(payload_bits, rate_bps):
    """Seconds to push ``payload_bits`` at ``rate_bps``; ``inf`` if the link is down."""
    bits = np.asarray(payload_bits, dtype=np.float64)
    rate = np.asarray(rate_bps, dtype=np.float64)
    if np.any(bits < 0):
        raise ValueError("payload must be non-negative")
    with np.errstate(divide="ignore", invalid="ignore"):
        tau = np.where(bits == 0, 0.0, np.where(rate > 0, bits / np.where(rate > 0, rate, 1.0), np.inf))
    return float(tau) if np.ndim(tau) == 0 else tau


def sample_link(params: LinkParams, distance_m: float, payload_bits: int,
                rng: RngState | None = None) -> LinkSample:
    g = channel_gain(params, distance_m, rng)
    r = shannon_rate(params, g)
    return LinkSample(g, r, transmission_delay(payload_bits, r))


@dataclass
class DelayStats:
    mean: float
    p50: float
    p95: float
    delays: np.ndarray


def simulate_link(params: LinkParams, distances, payload_bits: int, trials: int = 1000,
                  rng: RngState | None = None, bottleneck_bps: float | None = None,
                  encode_s: float = 0.0, decode_s: float = 0.0) -> DelayStats:
    """Monte-Carlo end-to-end delay over distances x trials.

    Each (distance, trial) draws its own shadowing/fading; with
    ``bottleneck_bps`` the achievable rate is capped at that value.
    Compute latencies ``encode_s``/``decode_s`` are added as constants.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    dist = np.atleast_1d(np.asarray(distances, dtype=np.float64))
    if params.deterministic:
        g = np.broadcast_to(np.atleast_1d(mean_path_gain(params, dist))[:, None], (dist.size, trials))
    else:
        rng = rng or RngState(0)
        g = np.stack([channel_gain(params, d, rng.substream(i), size=trials)
                      for i, d in enumerate(dist)])
    rate = np.atleast_1d(shannon_rate(params, g))
    if bottleneck_bps is not None:
        rate = np.minimum(rate, float(bottleneck_bps))
    delays = np.asarray(transmission_delay(payload_bits, rate)).ravel() + (encode_s + decode_s)
    # the clip is a no-op mathematically; it keeps a constant sample's mean exact
    mean = float(np.clip(np.mean(delays), delays.min(), delays.max()))
    return DelayStats(mean, float(np.percentile(delays, 50)),
                      float(np.percentile(delays, 95)), delays)


def kbps_to_bps(kbps: float) -> float:
    return float(kbps) * BITS_PER_KB
