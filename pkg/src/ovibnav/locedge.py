"""Edge-side localization from received latent codes.

The edge keeps a geo-tagged database of latent codes, answers
nearest-neighbour queries, and blends the retrieved position with the
codec's regression head.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

from . import ovib
from .ovib import CheckpointError, read_container, write_container

DB_MAGIC = b"OVDB"
RAW_FLOAT_BITS = 32  # unquantized latents go over the wire as float32
_METRICS = ("euclidean", "cosine")
EVAL_COLUMNS = ("frame_id", "gt_x", "gt_y", "gt_z", "est_x", "est_y", "est_z",
                "error_m", "payload_bits")


@dataclass
class GeoDatabase:
    codes: np.ndarray  # (N, k_active)
    positions: np.ndarray  # (N, 3)
    metric: str = "euclidean"
    index: str = "brute"

    def __post_init__(self):
        self.codes = np.atleast_2d(np.asarray(self.codes, dtype=np.float64))
        self.positions = np.asarray(self.positions, dtype=np.float64).reshape(-1, 3)
        if self.metric not in _METRICS:
            raise ValueError(f"metric must be one of {_METRICS}")
        if len(self.codes) != len(self.positions):
            raise ValueError("codes and positions differ in length")
        self._tree = None

    def __len__(self):
        return len(self.positions)

    @property
    def dim(self):
        return self.codes.shape[1]

    def _kdtree(self):
        if self._tree is None:
            self._tree = cKDTree(self.codes)
        return self._tree


@dataclass
class HybridConfig:
    eta_mode: str = "fixed"
    eta: float = 0.5
    adaptive_scale: float = 1.0
    k_neighbors: int = 4

    def __post_init__(self):
        if self.eta_mode not in ("fixed", "adaptive"):
            raise ValueError("eta_mode must be 'fixed' or 'adaptive'")
        if not 0.0 <= self.eta <= 1.0:
            raise ValueError("eta must lie in [0, 1]")
        if not self.adaptive_scale > 0:
            raise ValueError("adaptive_scale must be positive")
        if self.k_neighbors < 1:
            raise ValueError("k_neighbors must be >= 1")


def edge_codes(model, x, bits: int | None = None) -> np.ndarray:
    """Active-dim codes as the edge would hold them (dequantized when ``bits`` is set)."""
    code = ovib.encode(model, x)
    z = ovib.apply_mask(model, code.mu)
    if bits is not None:
        z = ovib.dequantize(ovib.quantize(z, model, bits))
    else:
        z = as_wire_floats(z)
    return z[..., model.active_dims]


def as_wire_floats(z) -> np.ndarray:
    """Round unquantized latents through float32, as they would be sent."""
    return np.asarray(z, dtype=np.float32).astype(np.float64)


def build_database(model, dataset, bits: int | None = None, metric="euclidean",
                   index="brute") -> GeoDatabase:
    if len(dataset) == 0:
        raise ValueError("database split is empty")
    return GeoDatabase(edge_codes(model, dataset.flat, bits), dataset.positions, metric, index)


def _distances(db: GeoDatabase, q: np.ndarray) -> np.ndarray:
    if db.metric == "cosine":
        qn = q / max(np.linalg.norm(q), 1e-300)
        cn = db.codes / np.maximum(np.linalg.norm(db.codes, axis=1, keepdims=True), 1e-300)
        return 1.0 - cn @ qn
    diff = db.codes - q
    return np.sqrt(np.einsum("ij,ij->i", diff, diff))


def nearest(db: GeoDatabase, query, k_neighbors: int = 1):
    """Indices and distances of the ``k`` nearest entries, ties to the lower index."""
    if len(db) == 0:
        raise ValueError("empty database")
    q = np.asarray(query, dtype=np.float64).ravel()
    if q.size != db.dim:
        raise ValueError(f"query has {q.size} dims, database has {db.dim}")
    if not 1 <= k_neighbors <= len(db):
        raise ValueError(f"k_neighbors must be in [1, {len(db)}]")
    if db.index == "kdtree" and db.metric == "euclidean":
        # every entry within the k-th tree distance, re-ranked with the brute-force
        # distance, so ties at the boundary resolve exactly as in the linear scan
        dk, _ = db._kdtree().query(q, k=[k_neighbors])
        cand = np.array(sorted(db._kdtree().query_ball_point(q, float(dk[0]) * (1 + 1e-9) + 1e-300)))
        diff = db.codes[cand] - q
        d = np.sqrt(np.einsum("ij,ij->i", diff, diff))
        order = np.lexsort((cand, d))[:k_neighbors]
        return cand[order], d[order]
    d = _distances(db, q)
    order = np.lexsort((np.arange(len(d)), d))[:k_neighbors]
    return order, d[order]


def retrieve(db: GeoDatabase, query, k_neighbors: int = 1):
    """Inverse-distance weighted position of the nearest entries.

    Returns ``(position, confidence_distance)`` where the confidence
    distance is the distance to the single nearest entry.
    """
    idx, d = nearest(db, query, k_neighbors)
    w = 1.0 / (d + 1e-9)
    pos = (w[:, None] * db.positions[idx]).sum(0) / w.sum()
    return pos, float(d[0])


def hybrid_weight(config: HybridConfig, confidence_distance: float) -> float:
    if config.eta_mode == "fixed":
        return config.eta
    # far from every database entry -> lean on the regression head
    return float(1.0 - np.exp(-confidence_distance / config.adaptive_scale))


def hybrid_estimate(model, db: GeoDatabase, z, config: HybridConfig | None = None) -> np.ndarray:
    """Blend regression and retrieval estimates for one full-width latent ``z``."""
    config = config or HybridConfig()
    z = ovib.apply_mask(model, np.asarray(z, dtype=np.float64))
    reg = ovib.localize_head(model, z)
    ret, conf = retrieve(db, z[model.active_dims], config.k_neighbors)
    eta = hybrid_weight(config, conf)
    if eta == 1.0:
        return reg
    if eta == 0.0:
        return ret
    return eta * reg + (1.0 - eta) * ret


def localization_error(est, gt) -> np.ndarray | float:
    d = np.asarray(est, dtype=np.float64) - np.asarray(gt, dtype=np.float64)
    err = np.sqrt(np.sum(d * d, axis=-1))
    return float(err) if np.ndim(err) == 0 else err


@dataclass
class EvalResult:
    frame_ids: np.ndarray
    gt: np.ndarray
    est: np.ndarray
    errors: np.ndarray
    payload_bits: int

    @property
    def summary(self) -> dict:
        e = self.errors
        return {"mean": float(np.mean(e)), "median": float(np.median(e)),
                "p90": float(np.percentile(e, 90)), "payload_bits": self.payload_bits}


def evaluate(model, db: GeoDatabase, dataset, config: HybridConfig | None = None,
             bits: int | None = None, rng=None) -> EvalResult:
    """Run the full edge pipeline over ``dataset`` and score each frame.

    Encoding is deterministic, so ``rng`` is accepted for interface symmetry
    and not consumed.
    """
    config = config or HybridConfig()
    if dataset.flat.shape[1] != model.n_in:
        raise ValueError(f"dataset has {dataset.flat.shape[1]} features per frame, "
                         f"model expects {model.n_in}")
    if db.dim != model.k_active:
        raise ValueError(f"database codes have {db.dim} dims, model has {model.k_active} active")
    z = ovib.apply_mask(model, ovib.encode(model, dataset.flat).mu)
    if bits is not None:
        q = ovib.quantize(z, model, bits)
        payload = q.payload_bits
        z = ovib.dequantize(q)
    else:
        payload = RAW_FLOAT_BITS * model.k_active
        z = as_wire_floats(z)
    est = np.array([hybrid_estimate(model, db, zi, config) for zi in z]).reshape(-1, 3)
    errors = localization_error(est, dataset.positions)
    return EvalResult(dataset.frame_ids.copy(), dataset.positions.copy(), est,
                      np.atleast_1d(errors), int(payload))


def write_eval_csv(result: EvalResult, path) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(EVAL_COLUMNS)
        for i in range(len(result.errors)):
            w.writerow([int(result.frame_ids[i]), *map(repr, map(float, result.gt[i])),
                        *map(repr, map(float, result.est[i])), repr(float(result.errors[i])),
                        result.payload_bits])


def save_database(db: GeoDatabase, path) -> None:
    header = {"n": len(db), "dim": db.dim, "metric": db.metric, "index": db.index,
              "layout": "codes (n x dim) then positions (n x 3), row-major"}
    write_container(path, DB_MAGIC, header, np.concatenate([db.codes.ravel(), db.positions.ravel()]))


def load_database(path) -> GeoDatabase:
    h, blob = read_container(Path(path), DB_MAGIC)
    n, dim = int(h["n"]), int(h["dim"])
    if blob.size != n * dim + 3 * n:
        raise CheckpointError(f"{path}: blob has {blob.size} values, expected {n * dim + 3 * n}")
    return GeoDatabase(blob[:n * dim].reshape(n, dim), blob[n * dim:].reshape(n, 3),
                       h["metric"], h.get("index", "brute"))
