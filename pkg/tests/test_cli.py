import json

import numpy as np
import pytest
from scipy.stats import spearmanr

from ovibnav import cli, experiments, locedge, ovib
from ovibnav.config import ExperimentConfig
from ovibnav.dataset import ConfigError, load_dataset

TINY = {
    "world": {"num_views": 2, "feature_dim": 12, "num_basis": 64, "n_train": 600, "n_test": 60,
              "db_spacing": 40.0},
    "model": {"k": 8},
    "schedule": {"epochs": 3, "lr": 3e-3},
    "link": {"trials": 50},
    "sweeps": {"beta": [0.01, 0.1, 1.0, 10.0], "gamma": [0.01], "rate_grid": [[4, 4], [8, 8]]},
}


def write_config(tmp_path, name="cfg.json", **sections):
    raw = json.loads(json.dumps(TINY))
    for key, v in sections.items():
        raw.setdefault(key, {}).update(v) if isinstance(v, dict) else raw.__setitem__(key, v)
    p = tmp_path / name
    p.write_text(json.dumps(raw))
    return p


def run(*args):
    return cli.main([str(a) for a in args])


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    """gen -> train -> prune -> eval in one output directory."""
    root = tmp_path_factory.mktemp("pipe")
    cfg = write_config(root)
    out = root / "run"
    for verb in ("gen", "train", "prune", "eval"):
        assert run(verb, "--config", cfg, "--out", out) == 0
    return cfg, out


def test_gen_outputs(pipeline):
    _, out = pipeline
    tr, db, te = (load_dataset(out / f"{s}.ovib") for s in ("train", "database", "test"))
    assert len(tr) == 600 and len(te) == 60 and len(db) == 6 * 6
    assert np.all(te.positions >= 0) and np.all(te.positions <= [200, 200, 60])
    assert (out / "train.ovib.json").exists()


def test_gen_byte_identical(pipeline, tmp_path):
    cfg, out = pipeline
    assert run("gen", "--config", cfg, "--out", tmp_path) == 0
    for s in ("train", "database", "test"):
        assert (tmp_path / f"{s}.ovib").read_bytes() == (out / f"{s}.ovib").read_bytes()


def test_seed_flag_changes_data(pipeline, tmp_path):
    cfg, out = pipeline
    assert run("gen", "--config", cfg, "--out", tmp_path, "--seed", 5) == 0
    assert (tmp_path / "test.ovib").read_bytes() != (out / "test.ovib").read_bytes()


def test_history(pipeline):
    cfg, out = pipeline
    rows = cli.read_csv(out / "history.csv")
    assert len(rows) == 3
    m = ovib.load_checkpoint(out / "model.ovck")
    for r in rows:
        parts = {k: float(r[k]) for k in cli.HISTORY_COLUMNS}
        recombined = parts["recon"] + m.alpha_loc * parts["loc"] + m.beta * parts["ard"] \
            + m.gamma * parts["ortho"]
        assert parts["total"] == pytest.approx(recombined, abs=1e-9)
    assert (out / "history.csv").read_text().startswith("# schema: history v1\n")


def test_train_byte_identical(pipeline, tmp_path):
    cfg, out = pipeline
    for s in ("train", "database", "test"):
        (tmp_path / f"{s}.ovib").write_bytes((out / f"{s}.ovib").read_bytes())
    assert run("train", "--config", cfg, "--out", tmp_path) == 0
    assert (tmp_path / "model.ovck").read_bytes() == (out / "model.ovck").read_bytes()
    assert (tmp_path / "history.csv").read_bytes() == (out / "history.csv").read_bytes()


def test_eval_summary_matches_csv(pipeline):
    _, out = pipeline
    summary = json.loads((out / "summary.json").read_text())
    errs = [float(r["error_m"]) for r in cli.read_csv(out / "eval.csv")]
    assert summary["mean"] == pytest.approx(np.mean(errs), abs=1e-9)
    for key in ("mean", "median", "p90", "payload_bits", "entropy_bits"):
        assert key in summary
    assert summary["checkpoint"] == "pruned.ovck"
    assert summary["payload_bits"] == 8 * summary["k_active"]


def test_eval_rerun_identical(pipeline):
    cfg, out = pipeline
    before = {n: (out / n).read_bytes() for n in ("eval.csv", "summary.json", "database.ovdb")}
    assert run("eval", "--config", cfg, "--out", out) == 0
    for n, b in before.items():
        assert (out / n).read_bytes() == b


def test_eval_eta_one_is_regression(pipeline, tmp_path):
    _, out = pipeline
    for n in ("train.ovib", "database.ovib", "test.ovib", "pruned.ovck"):
        (tmp_path / n).write_bytes((out / n).read_bytes())
    cfg = write_config(tmp_path, hybrid={"eta": 1.0})
    assert run("eval", "--config", cfg, "--out", tmp_path) == 0
    summary = json.loads((tmp_path / "summary.json").read_text())
    m = ovib.load_checkpoint(tmp_path / "pruned.ovck")
    te = load_dataset(tmp_path / "test.ovib")
    q = ovib.quantize(ovib.apply_mask(m, ovib.encode(m, te.flat).mu), m, 8)
    reg = ovib.localize_head(m, ovib.dequantize(q))
    assert summary["mean"] == pytest.approx(np.mean(locedge.localization_error(reg, te.positions)),
                                            abs=1e-12)


def test_missing_inputs_exit_2(tmp_path):
    cfg = write_config(tmp_path)
    assert run("train", "--config", cfg, "--out", tmp_path / "empty") == 2
    assert run("eval", "--config", cfg, "--out", tmp_path / "empty") == 2


def test_bad_config_exit_2(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text(json.dumps({"model": {"kk": 3}}))
    assert run("gen", "--config", p, "--out", tmp_path) == 2
    p.write_text("{not json")
    assert run("gen", "--config", p, "--out", tmp_path) == 2
    p.write_text(json.dumps({"world": {"feature_dim": 0}}))
    assert run("gen", "--config", p, "--out", tmp_path) == 2


def test_corrupt_checkpoint_exit_2(pipeline, tmp_path):
    cfg, out = pipeline
    for n in ("train.ovib", "database.ovib", "test.ovib"):
        (tmp_path / n).write_bytes((out / n).read_bytes())
    (tmp_path / "model.ovck").write_bytes(b"garbage")
    assert run("eval", "--config", cfg, "--out", tmp_path) == 2


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_divergence_exit_3(pipeline, tmp_path):
    _, out = pipeline
    (tmp_path / "train.ovib").write_bytes((out / "train.ovib").read_bytes())
    cfg = write_config(tmp_path, schedule={"lr": 1e200})
    assert run("train", "--config", cfg, "--out", tmp_path) == 3


def test_sweep_beta(tmp_path):
    cfg = write_config(tmp_path, schedule={"epochs": 6})
    assert run("sweep-beta", "--config", cfg, "--out", tmp_path) == 0
    rows = cli.read_csv(tmp_path / "sweep_beta.csv")
    assert [float(r["beta"]) for r in rows] == [0.01, 0.1, 1.0, 10.0]
    assert all(r["status"] == "ok" for r in rows)
    beta = [float(r["beta"]) for r in rows]
    assert spearmanr(beta, [float(r["entropy_bits"]) for r in rows]).statistic <= -0.7
    assert spearmanr(beta, [float(r["mean_error_m"]) for r in rows]).statistic >= 0.7


def test_sweep_beta_needs_four_points(tmp_path):
    cfg = write_config(tmp_path, sweeps={"beta": [0.1, 1.0]})
    assert run("sweep-beta", "--config", cfg, "--out", tmp_path) == 2


def test_sweep_parallel_matches_serial(tmp_path):
    cfg = write_config(tmp_path, sweeps={"beta": [0.01, 0.1, 1.0, 10.0], "gamma": [0.01]},
                       schedule={"epochs": 1})
    assert run("sweep-beta", "--config", cfg, "--out", tmp_path / "a") == 0
    assert run("sweep-beta", "--config", cfg, "--out", tmp_path / "b", "--jobs", 2) == 0
    assert (tmp_path / "a/sweep_beta.csv").read_bytes() == (tmp_path / "b/sweep_beta.csv").read_bytes()


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_failed_cell_is_recorded():
    cfg = ExperimentConfig.from_dict(TINY).with_(schedule={"lr": 1e200})
    row = experiments.beta_cell(cfg, 0.1, 0.01)
    assert row["status"].startswith("error") and np.isnan(row["mean_error_m"])


def test_rate_curve(tmp_path):
    cfg = write_config(tmp_path)
    assert run("rate-curve", "--config", cfg, "--out", tmp_path) == 0
    rows = cli.read_csv(tmp_path / "rate_curve.csv")
    assert len(rows) == 2
    for r in rows:
        assert int(r["payload_bits"]) == int(r["k_active"]) * int(r["bits"])
        assert float(r["payload_KBps"]) == int(r["payload_bits"]) * 10.0 / 8192
    rates = [float(r["payload_KBps"]) for r in rows]
    errs = [float(r["mean_error_m"]) for r in rows]
    for i, r in enumerate(rows):
        others = [(rates[j], errs[j]) for j in range(len(rows)) if j != i]
        assert bool(int(r["pareto"])) == (not experiments.dominated(rates[i], errs[i], others))


def test_pareto_flags_brute_force():
    g = np.random.default_rng(0)
    for _ in range(50):
        rates = list(g.integers(1, 6, 8).astype(float))
        errs = list(g.integers(1, 6, 8).astype(float))
        flags = experiments.pareto_flags(rates, errs)
        for i in range(8):
            beaten = any(rates[j] <= rates[i] and errs[j] <= errs[i]
                         and (rates[j] < rates[i] or errs[j] < errs[i]) for j in range(8))
            assert flags[i] == (not beaten)


def test_link_sim(tmp_path):
    cfg = write_config(tmp_path)
    assert run("link-sim", "--config", cfg, "--out", tmp_path) == 0
    rows = cli.read_csv(tmp_path / "link_sim.csv")
    by = {(float(r["bottleneck_KBps"]), int(r["k"])): float(r["mean_delay_s"]) for r in rows}
    for kb in (4.0, 8.0, 12.0):
        assert by[(kb, 128)] >= by[(kb, 32)]
    for k in (32, 128):
        assert by[(4.0, k)] > by[(8.0, k)] > by[(12.0, k)]


def test_link_sim_deterministic_channel(tmp_path):
    cfg = write_config(tmp_path, link={"params": {"shadowing_std_db": 0.0, "fading": "none"}})
    assert run("link-sim", "--config", cfg, "--out", tmp_path) == 0
    for r in cli.read_csv(tmp_path / "link_sim.csv"):
        assert float(r["p95_delay_s"]) == float(r["mean_delay_s"])


def test_config_rejects_unknown_keys():
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"sweeps": {"betas": [1]}})


def test_rate_curve_reports_both_sizes(tmp_path):
    cfg = write_config(tmp_path)
    assert run("rate-curve", "--config", cfg, "--out", tmp_path) == 0
    for r in cli.read_csv(tmp_path / "rate_curve.csv"):
        assert int(r["payload_f32_bits"]) == 32 * int(r["k_active"])
