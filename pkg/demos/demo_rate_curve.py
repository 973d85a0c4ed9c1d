"""
Rate against error
==================

Each codec setting (latent size k, bits per dim) fixes a payload per frame.
At a fixed frame rate that is a link budget in KB/s. Bigger payloads buy
lower error, with diminishing returns, and the Pareto flag marks settings
that no other setting beats on both axes.
"""

from pathlib import Path

from ovibnav import experiments
from ovibnav.config import ExperimentConfig

cfg = ExperimentConfig.load(Path(__file__).parent.parent / "configs" / "quick.json")
splits = experiments.load_or_make_splits(cfg)

rows = [experiments.rate_cell(cfg, k, bits, splits=splits)
        for k, bits in cfg.raw["sweeps"]["rate_grid"]]
flags = experiments.pareto_flags([r["payload_KBps"] for r in rows],
                                 [r["mean_error_m"] for r in rows])

print(f"{'k':>4} {'bits':>4} {'k_active':>8} {'payload':>8} {'KB/s':>7} {'error_m':>8}  pareto")
for r, f in sorted(zip(rows, flags), key=lambda t: t[0]["payload_bits"]):
    print(f"{r['k']:4d} {r['bits']:4d} {r['k_active']:8d} {r['payload_bits']:8d} "
          f"{r['payload_KBps']:7.3f} {r['mean_error_m']:8.2f}  {'*' if f else ''}")

# Retrieval here uses the single nearest database entry, as a plain
# nearest-neighbour index would.
