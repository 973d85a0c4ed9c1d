"""
End to end: features in, position out
=====================================

A UAV sees a synthetic world through a few camera views. It compresses the
features with a trained bottleneck encoder, quantizes them and ships them
to an edge server, which localizes the frame by blending a regression head
with a lookup in a geo-tagged database.

Runs in well under a minute on the small world.
"""

import numpy as np

from ovibnav import locedge, ovib
from ovibnav.dataset import WorldConfig, make_splits

# A small world: 3 views of 16-d features, 1200 training frames spread
# uniformly, a 20 m database grid and a 120-frame drive along the roads.
world = WorldConfig(num_views=3, feature_dim=16, num_basis=96, n_train=1200, n_test=120,
                    db_spacing=20.0)
splits = make_splits(world, seed=0)
train, database, test = splits["train"], splits["database"], splits["test"]
print({name: len(ds) for name, ds in splits.items()})

# Each frame is M unit-norm view vectors, flattened for the encoder.
print("input width", train.flat.shape[1])

# Train a 12-d codec. alpha_loc weights the position loss, beta the ARD
# sparsity pressure and gamma the orthogonality of the encoder rows.
model = ovib.OvibModel.init(train.flat.shape[1], 12, seed=0, alpha_loc=0.01, beta=0.3,
                            gamma=0.01)
model, history = ovib.train(model, train, ovib.Schedule(epochs=10, lr=3e-3), seed=0)
for row in history[::3]:
    print(f"epoch {row['epoch']:2d}  total {row['total']:.4f}  recon {row['recon']:.4f}")

# Dims whose mean log alpha exceeds 3 are noise and are dropped.
mask, k_active = ovib.prune(model, train)
print("active dims", k_active, "of", model.k)

# The edge keeps the database in the same quantized form it receives.
bits = 8
db = locedge.build_database(model, database, bits=bits)
res = locedge.evaluate(model, db, test, locedge.HybridConfig(eta=0.5), bits=bits)
print("payload per frame:", res.payload_bits, "bits")
print("error (m): mean {mean:.2f}  median {median:.2f}  p90 {p90:.2f}".format(**res.summary))

# For comparison: guess the centre of the training area every time.
centre = train.positions.mean(axis=0)
print("constant guess (m): %.2f" % np.mean(locedge.localization_error(centre, test.positions)))
