"""
Latency over a constrained link
===============================

The UAV-to-edge channel has log-distance path loss, log-normal shadowing and
Rayleigh fading, and its Shannon rate sets how long a payload takes. A hard
cap on throughput models the 4, 8 and 12 KB/s bottlenecks.
"""

import numpy as np

from ovibnav.channel import LinkParams, channel_gain, kbps_to_bps, shannon_rate, simulate_link
from ovibnav.numkernel import RngState

link = LinkParams()
print(link)

# Average rate falls off with distance; fading spreads it out.
rng = RngState(0)
for d in (50, 200, 800, 3200):
    r = shannon_rate(link, channel_gain(link, d, rng.substream(d), size=10_000))
    print(f"{d:5d} m  mean rate {np.mean(r) / 1e6:7.2f} Mbit/s  5th pct {np.percentile(r, 5) / 1e6:7.2f}")

# Unconstrained, a few hundred bits is microseconds. Under a bottleneck the
# cap dominates and delay is just payload over cap.
for kb in (4, 8, 12):
    for k in (32, 128):
        bits = 8 * k
        s = simulate_link(link, [50, 100, 200], bits, trials=1000, rng=RngState(1, kb),
                          bottleneck_bps=kbps_to_bps(kb))
        print(f"{kb:3d} KB/s  k={k:3d}  mean {s.mean * 1e3:6.2f} ms  p95 {s.p95 * 1e3:6.2f} ms")

# Far enough out the Shannon rate drops below the cap and fading shows up
# in the tail.
s = simulate_link(link, [20_000], 1024, trials=2000, rng=RngState(2),
                  bottleneck_bps=kbps_to_bps(8))
print(f"20 km: mean {s.mean * 1e3:.2f} ms  p50 {s.p50 * 1e3:.2f} ms  p95 {s.p95 * 1e3:.2f} ms")
