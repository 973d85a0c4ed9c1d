import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ovibnav.channel import (
    BITS_PER_KB,
    LinkParams,
    channel_gain,
    kbps_to_bps,
    mean_path_gain,
    sample_link,
    shannon_rate,
    simulate_link,
    transmission_delay,
)
from ovibnav.numkernel import RngState


def fixed(**kw):
    base = dict(shadowing_std_db=0.0, fading="none")
    base.update(kw)
    return LinkParams(**base)


def snr_params(snr, B=1e6):
    # P * g / (N0 * B) == snr at g = 1
    return fixed(bandwidth_hz=B, tx_power_w=snr * 1e-20 * B, noise_density_w_per_hz=1e-20)


def test_gain_at_reference_distance():
    p = fixed(ref_gain=3e-4, ref_distance_m=5.0)
    assert channel_gain(p, 5.0) == 3e-4


def test_gain_inverse_square():
    p = fixed(ref_gain=1.0, pathloss_exp=2.0, ref_distance_m=1.0)
    assert channel_gain(p, 2.0) == 0.25


def test_gain_rejects_zero_distance():
    with pytest.raises(ValueError):
        channel_gain(fixed(), 0.0)


def test_gain_deterministic_mode_is_pure():
    p = fixed()
    assert channel_gain(p, 37.0) == channel_gain(p, 37.0) == mean_path_gain(p, 37.0)


def test_rayleigh_unit_mean():
    p = LinkParams(ref_gain=1.0, shadowing_std_db=0.0, fading="rayleigh")
    g = channel_gain(p, 1.0, RngState(0), size=1_000_000)
    assert abs(g.mean() - 1.0) < 0.01


def test_rayleigh_mean_at_distance():
    p = LinkParams(shadowing_std_db=0.0, fading="rayleigh")
    g = channel_gain(p, 80.0, RngState(1), size=1_000_000)
    assert g.mean() == pytest.approx(mean_path_gain(p, 80.0), rel=0.01)


def test_shadowing_mean():
    # E[10^(xi/10)] = exp((sigma ln10 / 10)^2 / 2)
    p = LinkParams(shadowing_std_db=4.0, fading="none")
    g = channel_gain(p, 10.0, RngState(2), size=1_000_000)
    want = mean_path_gain(p, 10.0) * math.exp((4.0 * math.log(10) / 10) ** 2 / 2)
    assert g.mean() == pytest.approx(want, rel=0.01)


def test_random_gain_needs_rng():
    with pytest.raises(ValueError):
        channel_gain(LinkParams(), 10.0)


def test_shannon_examples():
    assert shannon_rate(snr_params(1.0), 1.0) == 1e6
    assert shannon_rate(snr_params(3.0), 1.0) == 2e6
    assert shannon_rate(LinkParams(), 0.0) == 0.0


def test_shannon_monotone():
    gains = np.logspace(-16, -6, 50)
    r = shannon_rate(LinkParams(), gains)
    assert np.all(np.diff(r) >= 0)
    powers = np.logspace(-3, 1, 20)
    rp = [shannon_rate(LinkParams(tx_power_w=pw), 1e-10) for pw in powers]
    assert np.all(np.diff(rp) >= 0)


def test_shannon_rejects_negative_gain():
    with pytest.raises(ValueError):
        shannon_rate(LinkParams(), -1.0)


def test_delay_examples():
    assert transmission_delay(65536, 65536) == 1.0
    assert transmission_delay(0, 1234.0) == 0.0
    assert transmission_delay(8 * BITS_PER_KB, kbps_to_bps(8)) == 1.0


def test_delay_unreachable():
    assert transmission_delay(10, 0.0) == math.inf
    assert transmission_delay(0, 0.0) == 0.0


def test_delay_rejects_negative_payload():
    with pytest.raises(ValueError):
        transmission_delay(-1, 10.0)


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 10**9), st.floats(1.0, 1e9), st.sampled_from([2, 4, 8, 1024]))
def test_delay_homogeneous(bits, rate, c):
    # power-of-two scale factors keep both operands exact
    assert transmission_delay(c * bits, c * rate) == transmission_delay(bits, rate)


def test_sample_link_consistent():
    s = sample_link(fixed(), 100.0, 4096)
    assert s.rate_bps == shannon_rate(fixed(), s.gain)
    assert s.delay_s == 4096 / s.rate_bps


def test_simulate_deterministic_closed_form():
    p = fixed()
    stats = simulate_link(p, [120.0], 2048, trials=10)
    tau = 2048 / shannon_rate(p, mean_path_gain(p, 120.0))
    assert stats.mean == pytest.approx(tau, rel=0, abs=1e-12)
    assert stats.p50 == pytest.approx(tau, rel=0, abs=1e-12)


def test_simulate_bottleneck():
    stats = simulate_link(fixed(), [50.0, 100.0], 256, trials=20,
                          bottleneck_bps=kbps_to_bps(8))
    assert stats.mean == pytest.approx(256 / 65536, abs=1e-15)
    assert stats.mean == pytest.approx(0.0039, abs=1e-4)


def test_simulate_compute_latency():
    base = simulate_link(fixed(), [60.0], 512, trials=3)
    extra = simulate_link(fixed(), [60.0], 512, trials=3, encode_s=0.01, decode_s=0.02)
    assert extra.mean == pytest.approx(base.mean + 0.03, abs=1e-15)


def test_simulate_percentile_order():
    stats = simulate_link(LinkParams(), [50.0, 200.0, 800.0], 8192, trials=500, rng=RngState(3))
    assert stats.p95 >= stats.p50 >= 0
    assert stats.delays.shape == (1500,)


def test_simulate_deterministic_given_seed():
    a = simulate_link(LinkParams(), [50.0, 100.0], 1024, trials=100, rng=RngState(4))
    b = simulate_link(LinkParams(), [50.0, 100.0], 1024, trials=100, rng=RngState(4))
    assert a.delays.tobytes() == b.delays.tobytes()


def test_simulate_needs_trials():
    with pytest.raises(ValueError):
        simulate_link(fixed(), [10.0], 8, trials=0)


def test_params_validation_and_round_trip():
    with pytest.raises(ValueError):
        LinkParams(bandwidth_hz=0)
    with pytest.raises(ValueError):
        LinkParams(fading="rician")
    p = LinkParams(pathloss_exp=3.1)
    assert LinkParams.from_dict(p.to_dict()) == p
