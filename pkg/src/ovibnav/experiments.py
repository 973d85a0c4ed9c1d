"""Sweep cells shared by the CLI and the demo scripts.

Each cell is a pure function of (config, cell parameters, datasets) and
returns a flat row dict, so cells can run in any order or in parallel.
"""

from __future__ import annotations

import math

import numpy as np

from . import locedge, ovib
from .channel import BITS_PER_KB, kbps_to_bps, simulate_link
from .config import ExperimentConfig
from .dataset import make_splits
from .numkernel import NumericalError, RngState


def build_model(cfg: ExperimentConfig, n_in: int, *, k=None, beta=None, gamma=None,
                seed=None) -> ovib.OvibModel:
    m = cfg.raw["model"]
    w = cfg.raw["world"]
    return ovib.OvibModel.init(
        n_in, int(k if k is not None else m["k"]),
        seed=cfg.seed if seed is None else seed,
        alpha_loc=float(m["alpha_loc"]),
        beta=float(m["beta"] if beta is None else beta),
        gamma=float(m["gamma"] if gamma is None else gamma),
        init_logvar=float(m["init_logvar"]),
        num_views=int(w["num_views"]), feature_dim=int(w["feature_dim"]),
    )


def train_and_prune(cfg: ExperimentConfig, train_ds, **model_kw):
    model = build_model(cfg, train_ds.flat.shape[1], **model_kw)
    model, history = ovib.train(model, train_ds, cfg.schedule, seed=cfg.seed)
    ovib.prune(model, train_ds, float(cfg.raw["prune"]["threshold_logalpha"]))
    return model, history


def evaluate_model(cfg: ExperimentConfig, model, splits, k_neighbors=None):
    hybrid = cfg.hybrid
    if k_neighbors is not None:
        hybrid.k_neighbors = int(k_neighbors)
    db = locedge.build_database(model, splits["database"], bits=cfg.bits)
    return locedge.evaluate(model, db, splits["test"], hybrid, bits=cfg.bits)


def load_or_make_splits(cfg: ExperimentConfig):
    from .cli import dataset_paths
    from .dataset import load_dataset

    paths = dataset_paths(cfg)
    if all(p.exists() for p in paths.values()):
        return {s: load_dataset(p) for s, p in paths.items()}
    return make_splits(cfg.world, cfg.seed)


BETA_COLUMNS = ("beta", "gamma", "k", "k_active", "entropy_bits", "mean_error_m", "status")


def beta_cell(cfg: ExperimentConfig, beta: float, gamma: float, splits=None) -> dict:
    row = {"beta": float(beta), "gamma": float(gamma), "k": int(cfg.raw["model"]["k"])}
    try:
        splits = splits or load_or_make_splits(cfg)
        model, _ = train_and_prune(cfg, splits["train"], beta=beta, gamma=gamma)
        bits = cfg.bits or 8
        row["k_active"] = model.k_active
        row["entropy_bits"] = ovib.latent_entropy(model, splits["train"], bits)
        row["mean_error_m"] = evaluate_model(cfg, model, splits).summary["mean"]
        row["status"] = "ok"
    except (NumericalError, ValueError) as e:
        row.update(k_active=-1, entropy_bits=math.nan, mean_error_m=math.nan,
                   status=f"error: {e}".replace(",", ";"))
    return row


def matched_entropy_pairs(rows_a, rows_b) -> list[tuple[float, float]]:
    """Pair each row of ``rows_a`` with the ``rows_b`` row nearest in entropy.

    Returns ``(error_a, error_b)`` tuples; ties go to the earlier ``rows_b`` row.
    """
    pairs = []
    ok_b = [r for r in rows_b if r["status"] == "ok"]
    for r in rows_a:
        if r["status"] != "ok" or not ok_b:
            continue
        best = min(ok_b, key=lambda o: abs(o["entropy_bits"] - r["entropy_bits"]))
        pairs.append((r["mean_error_m"], best["mean_error_m"]))
    return pairs


RATE_COLUMNS = ("payload_KBps", "payload_bits", "payload_f32_bits", "k", "k_active", "bits",
                "mean_error_m", "frame_rate_hz", "pareto", "status")


def rate_cell(cfg: ExperimentConfig, k: int, bits: int, splits=None) -> dict:
    fr = float(cfg.raw["frame_rate_hz"])
    row = {"k": int(k), "bits": int(bits), "frame_rate_hz": fr}
    try:
        splits = splits or load_or_make_splits(cfg)
        qcfg = cfg.with_(quantizer={"enabled": True, "bits": int(bits)})
        model, _ = train_and_prune(qcfg, splits["train"], k=k)
        res = evaluate_model(qcfg, model, splits, cfg.raw["sweeps"]["rate_k_neighbors"])
        row["k_active"] = model.k_active
        row["payload_bits"] = res.payload_bits
        # the same active dims sent as raw float32, for comparison
        row["payload_f32_bits"] = locedge.RAW_FLOAT_BITS * model.k_active
        row["payload_KBps"] = res.payload_bits * fr / BITS_PER_KB
        row["mean_error_m"] = res.summary["mean"]
        row["status"] = "ok"
    except (NumericalError, ValueError) as e:
        row.update(k_active=-1, payload_bits=-1, payload_f32_bits=-1, payload_KBps=math.nan,
                   mean_error_m=math.nan, status=f"error: {e}".replace(",", ";"))
    return row


def dominated(rate, err, others) -> bool:
    """True if some (rate, err) in ``others`` is no worse in both and better in one."""
    return any(r <= rate and e <= err and (r < rate or e < err) for r, e in others)


def pareto_flags(rates, errors) -> list[bool]:
    pts = list(zip(rates, errors))
    flags = []
    for i, (r, e) in enumerate(pts):
        if not (np.isfinite(r) and np.isfinite(e)):
            flags.append(False)
            continue
        others = [p for j, p in enumerate(pts) if j != i and np.isfinite(p[0]) and np.isfinite(p[1])]
        flags.append(not dominated(r, e, others))
    return flags


LINK_COLUMNS = ("bottleneck_KBps", "k", "bits", "payload_bits", "mean_delay_s", "p50_delay_s",
                "p95_delay_s", "frame_rate_hz")


def link_rows(cfg: ExperimentConfig) -> list[dict]:
    link = cfg.raw["link"]
    params = cfg.link_params
    bits = cfg.bits or 8
    rows = []
    for bi, kb in enumerate(link["bottlenecks_KBps"]):
        for k in cfg.raw["sweeps"]["k"]:
            payload = int(k) * bits
            # same channel draws for every k, so delays compare trial by trial
            stats = simulate_link(params, link["distances_m"], payload, int(link["trials"]),
                                  RngState(cfg.seed, stream=(11, bi)),
                                  bottleneck_bps=kbps_to_bps(kb),
                                  encode_s=float(link["encode_s"]), decode_s=float(link["decode_s"]))
            rows.append({"bottleneck_KBps": float(kb), "k": int(k), "bits": bits,
                         "payload_bits": payload, "mean_delay_s": stats.mean,
                         "p50_delay_s": stats.p50, "p95_delay_s": stats.p95,
                         "frame_rate_hz": float(cfg.raw["frame_rate_hz"])})
    return rows
