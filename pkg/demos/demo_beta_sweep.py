"""
How beta trades bits for accuracy
=================================

Raising beta pushes more latent dims to pure noise. Pruned dims cost no
bits, so the entropy of the transmitted code falls, and once informative
dims start going the localization error climbs.

Uses the quick config; the full-size version is ``ovibnav sweep-beta``.
"""

from pathlib import Path

from ovibnav import experiments
from ovibnav.config import ExperimentConfig

cfg = ExperimentConfig.load(Path(__file__).parent.parent / "configs" / "quick.json")
splits = experiments.load_or_make_splits(cfg)

print(f"{'beta':>8} {'gamma':>6} {'k_active':>8} {'entropy':>8} {'error_m':>8}")
for gamma in cfg.raw["sweeps"]["gamma"]:
    for beta in cfg.raw["sweeps"]["beta"]:
        row = experiments.beta_cell(cfg, beta, gamma, splits=splits)
        print(f"{beta:8.3g} {gamma:6.2f} {row['k_active']:8d} {row['entropy_bits']:8.1f} "
              f"{row['mean_error_m']:8.2f}")

# Entropy is measured in bits per frame on the training set, summed over the
# active dims of the 8-bit quantized code. It falls with beta while the error
# rises; the two gamma values land close together at this scale.
