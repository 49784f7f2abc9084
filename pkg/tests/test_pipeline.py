import json
from pathlib import Path

import numpy as np
import pytest

from lightrain.cli import EXIT_DATA, EXIT_NUMERIC, EXIT_OK, EXIT_USAGE, main
from lightrain.config import PipelineConfig, load_config, read_kv
from lightrain.experiments import read_report, validation_pairs
from lightrain.ingest import load_gauges, load_lightning, load_satellite
from lightrain.pipeline import STAGES, MissingArtifact, run_meanfield, stage_seed
from lightrain.synth import SynthConfig, simulate_ar1, simulate_car, synth_storm, write_dataset
from lightrain.bayes import car_precision
from lightrain.ingest import Grid

FAST = ["--iters", "300", "--burnin", "100", "--thin", "2"]


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    out = tmp_path_factory.mktemp("synth")
    assert main(["synth", "--out", str(out), "--seed", "3"]) == EXIT_OK
    return out


@pytest.fixture(scope="module")
def run_dir(dataset, tmp_path_factory):
    wd = tmp_path_factory.mktemp("run")
    assert main(["all", "--config", str(dataset / "pipeline.cfg"), "--workdir", str(wd), *FAST]) == EXIT_OK
    return wd


# -- config -------------------------------------------------------------------


def test_read_kv(tmp_path):
    p = tmp_path / "a.cfg"
    p.write_text("# comment\nn1 = 4  # trailing\n\nt0=2004-01-01T00:00:00Z\n")
    assert read_kv(p) == {"n1": "4", "t0": "2004-01-01T00:00:00Z"}
    p.write_text("just words\n")
    with pytest.raises(ValueError, match=":1:"):
        read_kv(p)


def test_load_config_overrides_and_aliases(tmp_path):
    p = tmp_path / "a.cfg"
    p.write_text("lightning = l.csv\ndt_min = 15\nT = 32\nvariants = M1, M3memory\niters = 50\n")
    cfg = load_config(p, {"iterations": 70, "dt": 30, "variant": ["M2"]})
    assert cfg.iters == 70 and cfg.dt_min == 30 and cfg.T == 16 and cfg.variants == ("M2",)
    assert cfg.path("lightning") == tmp_path / "l.csv"
    assert [v.name for v in load_config(p).mean_variants()] == ["M1", "M3memory"]
    assert load_config(p, {"memory": True}).mean_variants()[0].memory
    with pytest.raises(ValueError, match="unknown"):
        load_config(p, {"bogus": 1})
    with pytest.raises(ValueError):
        PipelineConfig(dt_min=20)
    with pytest.raises(ValueError):
        PipelineConfig(variants=("M9",))


def test_config_defaults_match_mcmc_schedule():
    m = PipelineConfig().mcmc()
    assert (m.chains, m.iterations, m.burnin, m.thin) == (2, 20000, 5000, 15)


def test_stage_seed_is_stable_and_distinct():
    assert stage_seed(0, "fit/M1") == stage_seed(0, "fit/M1")
    assert len({stage_seed(0, s) for s in STAGES}) == len(STAGES)
    assert stage_seed(0, "fit") != stage_seed(1, "fit")


# -- synthetic data -------------------------------------------------------------


def test_synth_deterministic(tmp_path):
    a = write_dataset(synth_storm(SynthConfig(seed=11)), tmp_path / "a")
    b = write_dataset(synth_storm(SynthConfig(seed=11)), tmp_path / "b")
    for k in a:
        assert Path(a[k]).read_bytes() == Path(b[k]).read_bytes()
    c = write_dataset(synth_storm(SynthConfig(seed=12)), tmp_path / "c")
    assert Path(a["lightning"]).read_bytes() != Path(c["lightning"]).read_bytes()


def test_synth_files_parse(dataset):
    strikes = load_lightning(dataset / "lightning.csv")
    assert len(strikes) == SynthConfig.n_storm + SynthConfig.n_background
    assert np.all(np.diff(strikes.t) >= 0)
    gauges = load_gauges(dataset / "gauges.csv")
    assert {g.interval_min for g in gauges} == {15}
    assert len(load_satellite(dataset / "satellite.csv")) == 8 * 100
    truth = json.loads((dataset / "truth.json").read_text())
    assert truth["Z"] == pytest.approx(24.1) and len(truth["Tt"]) == 32


def test_simulators_moments():
    rng = np.random.default_rng(0)
    x = np.array([simulate_ar1(rng, 60, 0.5, 4.0)[-1] for _ in range(4000)])
    assert x.var() == pytest.approx(1 / (4.0 * 0.75), rel=0.1)
    B = Grid(0, 0, 3, 3).adjacency(2)
    s = np.array([simulate_car(rng, B, 0.1, 2.0) for _ in range(6000)])
    cov = np.linalg.inv(car_precision(B, 0.1, 2.0).toarray())
    np.testing.assert_allclose(np.cov(s.T), cov, atol=0.05)


def test_synth_dt30(tmp_path):
    assert main(["synth", "--out", str(tmp_path), "--seed", "2", "--dt", "30"]) == EXIT_OK
    cfg = load_config(tmp_path / "pipeline.cfg")
    assert cfg.dt_min == 30 and cfg.T == 16


# -- pipeline and CLI -------------------------------------------------------------


def test_all_stages_write_manifests(run_dir):
    for stage in STAGES:
        m = json.loads((run_dir / stage / "manifest.json").read_text())
        assert m["stage"] == stage and m["outputs"]
        assert "timestamp" not in json.dumps(m)
    assert (run_dir / "predict" / "M1" / "predictions.csv").exists()


def test_report_is_well_formed(run_dir):
    rows = read_report(run_dir)
    assert [r["variant"] for r in rows] == ["M1"]
    ec = float(rows[0]["ec"])
    assert 0 <= ec <= 100
    assert validation_pairs(run_dir) > 100


def test_stage_rerun_is_byte_identical(dataset, run_dir):
    before = (run_dir / "meanfield" / "mu_M1.csv").read_bytes()
    assert main(["meanfield", "--config", str(dataset / "pipeline.cfg"), "--workdir", str(run_dir), *FAST]) == 0
    assert (run_dir / "meanfield" / "mu_M1.csv").read_bytes() == before


def test_missing_artifact(tmp_path, dataset, capsys):
    cfg = load_config(dataset / "pipeline.cfg")
    with pytest.raises(MissingArtifact, match="run the '(scan|ingest)' stage first"):
        run_meanfield(cfg, tmp_path)
    code = main(["fit", "--config", str(dataset / "pipeline.cfg"), "--workdir", str(tmp_path)])
    assert code == EXIT_DATA
    assert "stage first" in capsys.readouterr().err


def test_exit_codes(tmp_path, dataset):
    assert main(["frobnicate"]) == EXIT_USAGE
    assert main(["fit", "--chains", "two"]) == EXIT_USAGE
    assert main(["ingest", "--config", str(tmp_path / "nope.cfg")]) == EXIT_DATA
    bad = tmp_path / "bad.cfg"
    bad.write_text((dataset / "pipeline.cfg").read_text().replace("lightning.csv", str(dataset / "x.csv")))
    assert main(["ingest", "--config", str(bad), "--workdir", str(tmp_path / "w")]) == EXIT_DATA


def test_numeric_failure_exit_code(monkeypatch, dataset, tmp_path):
    import lightrain.cli as cli

    def boom(cfg, workdir):
        raise FloatingPointError("non-finite value at iteration 3")

    monkeypatch.setitem(cli.RUNNERS, "fit", boom)
    assert main(["fit", "--config", str(dataset / "pipeline.cfg"), "--workdir", str(tmp_path)]) == EXIT_NUMERIC
