"""Command-line experiment harness.

    ovibnav {gen,train,prune,eval,sweep-beta,rate-curve,link-sim}
            [--config PATH] [--seed N] [--out DIR] [--jobs N]

Every command reads the JSON config plus files in the output directory and
writes CSV/JSON/binary artifacts there. Exit codes: 0 ok, 2 config or input
error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import experiments, locedge, ovib
from .config import ExperimentConfig
from .dataset import SPLITS, ConfigError, FormatError, load_dataset, make_splits, save_dataset
from .numkernel import NumericalError

log = logging.getLogger("ovibnav")

CSV_SCHEMA_VERSION = 1
HISTORY_COLUMNS = ("epoch", "recon", "loc", "ard", "ortho", "total")


def dataset_paths(cfg: ExperimentConfig) -> dict:
    return {s: cfg.out_dir / f"{s}.ovib" for s in SPLITS}


def _fmt(v):
    if isinstance(v, bool):
        return int(v)
    if isinstance(v, float):
        return repr(v) if math.isfinite(v) else "nan"
    return v


def write_csv(path, columns, rows, schema: str) -> None:
    with open(path, "w", newline="") as f:
        f.write(f"# schema: {schema} v{CSV_SCHEMA_VERSION}\n")
        w = csv.writer(f, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(r[c]) for c in columns])


def read_csv(path) -> list[dict]:
    with open(path, newline="") as f:
        lines = [ln for ln in f if not ln.startswith("#")]
    return list(csv.DictReader(lines))


def _require(paths):
    missing = [str(p) for p in paths if not Path(p).exists()]
    if missing:
        raise ConfigError(f"missing input files: {', '.join(missing)} (run the earlier stage first)")


def _load_splits(cfg):
    paths = dataset_paths(cfg)
    _require(paths.values())
    return {s: load_dataset(p) for s, p in paths.items()}


# ----------------------------------------------------------------------------
# commands
# ----------------------------------------------------------------------------


def cmd_gen(cfg: ExperimentConfig) -> dict:
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    splits = make_splits(cfg.world, cfg.seed)
    paths = dataset_paths(cfg)
    for name, ds in splits.items():
        save_dataset(ds, paths[name])
    return paths


def cmd_train(cfg: ExperimentConfig) -> dict:
    train_path = dataset_paths(cfg)["train"]
    _require([train_path])
    train_ds = load_dataset(train_path)
    model = experiments.build_model(cfg, train_ds.flat.shape[1])
    model, history = ovib.train(model, train_ds, cfg.schedule, seed=cfg.seed)
    out = {"checkpoint": cfg.out_dir / "model.ovck", "history": cfg.out_dir / "history.csv"}
    ovib.save_checkpoint(model, out["checkpoint"])
    write_csv(out["history"], HISTORY_COLUMNS, history, "history")
    return out


def cmd_prune(cfg: ExperimentConfig) -> dict:
    ckpt = cfg.out_dir / "model.ovck"
    train_path = dataset_paths(cfg)["train"]
    _require([ckpt, train_path])
    model = ovib.load_checkpoint(ckpt)
    _, k_active = ovib.prune(model, load_dataset(train_path),
                             float(cfg.raw["prune"]["threshold_logalpha"]))
    out = {"checkpoint": cfg.out_dir / "pruned.ovck"}
    ovib.save_checkpoint(model, out["checkpoint"])
    log.info("kept %d of %d latent dims", k_active, model.k)
    return out


def _eval_checkpoint(cfg):
    pruned = cfg.out_dir / "pruned.ovck"
    return pruned if pruned.exists() else cfg.out_dir / "model.ovck"


def cmd_eval(cfg: ExperimentConfig) -> dict:
    ckpt = _eval_checkpoint(cfg)
    _require([ckpt])
    model = ovib.load_checkpoint(ckpt)
    splits = _load_splits(cfg)
    n_in = splits["test"].flat.shape[1]
    if n_in != model.n_in:
        raise ConfigError(f"dimension mismatch: test features have {n_in} dims, "
                          f"checkpoint {ckpt.name} expects {model.n_in}")
    bits = cfg.bits
    db = locedge.build_database(model, splits["database"], bits=bits)
    res = locedge.evaluate(model, db, splits["test"], cfg.hybrid, bits=bits)
    out = {"database": cfg.out_dir / "database.ovdb", "csv": cfg.out_dir / "eval.csv",
           "summary": cfg.out_dir / "summary.json"}
    locedge.save_database(db, out["database"])
    locedge.write_eval_csv(res, out["csv"])
    summary = dict(res.summary)
    summary["entropy_bits"] = ovib.latent_entropy(model, splits["test"], bits or 8)
    summary["k_active"] = model.k_active
    summary["frame_rate_hz"] = float(cfg.raw["frame_rate_hz"])
    summary["checkpoint"] = ckpt.name
    out["summary"].write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return out


def _run_cells(fn, cfg, cells, jobs):
    if jobs > 1 and len(cells) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            futures = [ex.submit(fn, cfg, *c) for c in cells]
            return [f.result() for f in futures]
    splits = experiments.load_or_make_splits(cfg)
    return [fn(cfg, *c, splits=splits) for c in cells]


def cmd_sweep_beta(cfg: ExperimentConfig, jobs: int = 1) -> dict:
    betas = [float(b) for b in cfg.raw["sweeps"]["beta"]]
    if len(betas) < 4:
        raise ConfigError("sweeps.beta needs at least 4 points")
    cells = [(b, g) for g in cfg.raw["sweeps"]["gamma"] for b in betas]
    rows = _run_cells(experiments.beta_cell, cfg, cells, jobs)
    rows.sort(key=lambda r: (r["gamma"], r["beta"]))
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    out = {"csv": cfg.out_dir / "sweep_beta.csv"}
    write_csv(out["csv"], experiments.BETA_COLUMNS, rows, "sweep_beta")
    return out


def cmd_rate_curve(cfg: ExperimentConfig, jobs: int = 1) -> dict:
    cells = [(int(k), int(b)) for k, b in cfg.raw["sweeps"]["rate_grid"]]
    rows = _run_cells(experiments.rate_cell, cfg, cells, jobs)
    flags = experiments.pareto_flags([r["payload_KBps"] for r in rows],
                                     [r["mean_error_m"] for r in rows])
    for r, f in zip(rows, flags):
        r["pareto"] = f
    rows.sort(key=lambda r: (r["payload_bits"], r["k"], r["bits"]))
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    out = {"csv": cfg.out_dir / "rate_curve.csv"}
    write_csv(out["csv"], experiments.RATE_COLUMNS, rows, "rate_curve")
    return out


def cmd_link_sim(cfg: ExperimentConfig) -> dict:
    rows = experiments.link_rows(cfg)
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    out = {"csv": cfg.out_dir / "link_sim.csv"}
    write_csv(out["csv"], experiments.LINK_COLUMNS, rows, "link_sim")
    return out


COMMANDS = {
    "gen": cmd_gen,
    "train": cmd_train,
    "prune": cmd_prune,
    "eval": cmd_eval,
    "sweep-beta": cmd_sweep_beta,
    "rate-curve": cmd_rate_curve,
    "link-sim": cmd_link_sim,
}
_PARALLEL = {"sweep-beta", "rate-curve"}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ovibnav", description=__doc__.split("\n\n")[0])
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", type=Path, help="experiment JSON config (defaults if omitted)")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.add_argument("--out", type=Path, help="override the output directory")
    p.add_argument("--jobs", type=int, default=1, help="parallel sweep cells")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    overrides = {"seed": args.seed, "out_dir": None if args.out is None else str(args.out)}
    try:
        cfg = (ExperimentConfig.load(args.config, **overrides) if args.config
               else ExperimentConfig.from_dict({}, **overrides))
        cfg.out_dir.mkdir(parents=True, exist_ok=True)
        fn = COMMANDS[args.command]
        out = fn(cfg, jobs=max(1, args.jobs)) if args.command in _PARALLEL else fn(cfg)
    except (ConfigError, FormatError, ovib.CheckpointError, OSError) as e:
        log.error("%s", e)
        return 2
    except NumericalError as e:
        log.error("numerical failure: %s", e)
        return 3
    for name, path in out.items():
        print(f"{name}: {path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
