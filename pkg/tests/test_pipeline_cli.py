"""Pipeline orchestration and CLI: determinism, caching, config parsing,
exit codes, sweep and report plumbing (all at smoke scale)."""

import json
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

from subnetpred.cli import EXIT_CONFIG, EXIT_OK, EXIT_STAGE, main
from subnetpred.config import (ConfigError, desk_preset, parse_config_text,
                               spec_to_dict, tiny_preset)
from subnetpred.pipeline import report, run_pipeline, sweep


def smoke_spec(seed=0, variant="moving-average"):
    spec = tiny_preset(seed=seed)
    return replace(spec, variant=variant)


def test_run_pipeline_writes_artifacts(tmp_path):
    detail = run_pipeline(smoke_spec(variant="genie"), tmp_path)
    assert (tmp_path / "trace.csv").exists()
    assert (tmp_path / "dataset.bin").exists()
    assert (tmp_path / "results.csv").exists()
    assert (tmp_path / "run_manifest.json").exists()
    # the genie variant never trains or calibrates
    assert not (tmp_path / "model.bin").exists()
    assert not (tmp_path / "calibration.json").exists()
    assert detail["ra"][0]["frac_met"] == 1.0


def test_pipeline_determinism_byte_identical(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    run_pipeline(smoke_spec(seed=5), a)
    run_pipeline(smoke_spec(seed=5), b)
    assert (a / "results.csv").read_bytes() == (b / "results.csv").read_bytes()
    assert (a / "trace.csv").read_bytes() == (b / "trace.csv").read_bytes()


def test_pipeline_caching_reuses_simulation(tmp_path):
    spec = smoke_spec(seed=6)
    run_pipeline(spec, tmp_path)
    stamp = (tmp_path / "trace.csv").stat().st_mtime_ns
    run_pipeline(replace(spec, variant="genie"), tmp_path)
    assert (tmp_path / "trace.csv").stat().st_mtime_ns == stamp
    rows = (tmp_path / "results.csv").read_text().splitlines()
    predictors = {line.split(",")[0] for line in rows[1:]}
    assert predictors == {"moving-average", "genie"}


def test_trained_variant_shares_checkpoint(tmp_path):
    spec = replace(smoke_spec(seed=7), variant="iqpt")
    run_pipeline(spec, tmp_path)
    assert (tmp_path / "model.bin").exists()
    stamp = (tmp_path / "model.bin").stat().st_mtime_ns
    run_pipeline(spec, tmp_path)     # cached
    assert (tmp_path / "model.bin").stat().st_mtime_ns == stamp


def test_split_variant_trains_via_protocol_and_matches(tmp_path):
    spec = replace(smoke_spec(seed=8), variant="iqpt-split")
    detail_split = run_pipeline(spec, tmp_path)
    detail_central = run_pipeline(replace(spec, variant="iqpt"), tmp_path)
    np.testing.assert_allclose(detail_split["coverage_per_sa"],
                               detail_central["coverage_per_sa"], atol=1e-9)
    assert (tmp_path / "model_split.bin").exists()


# ------------------------------------------------------------------- config

def test_parse_config_overrides():
    text = """
    # comment
    deployment.n_subnetworks = 8
    traffic.variant = push-pull
    traffic.intensity = 5
    traffic.n_reserved = 2
    model.d_embed = 32
    n_cycles = 1234
    variant = wiener
    eps_targets = 1e-4 1e-5
    """
    spec = parse_config_text(text, preset="tiny")
    assert spec.deployment.n_subnetworks == 8
    assert spec.traffic.variant == "push-pull"
    assert spec.traffic.intensity == 5.0
    assert spec.model.d_embed == 32
    assert spec.n_cycles == 1234
    assert spec.variant == "wiener"
    assert spec.eps_targets == (1e-4, 1e-5)


def test_parse_config_rejects_unknown_keys():
    with pytest.raises(ConfigError):
        parse_config_text("deployment.bogus = 3")
    with pytest.raises(ConfigError):
        parse_config_text("nonsense = 3")
    with pytest.raises(ConfigError):
        parse_config_text("deployment.n_subnetworks") # no '='


def test_seed_flag_rewires_all_seeds():
    spec = parse_config_text("", preset="tiny", seed=99)
    assert spec.seed == 99
    assert spec.train.seed == 99
    assert spec.deployment.rng_seed == 99


def test_spec_validation_errors():
    with pytest.raises(ConfigError):
        replace(desk_preset(), variant="nope")
    with pytest.raises(ConfigError):
        replace(desk_preset(), beta=0.0)
    with pytest.raises(ConfigError):
        parse_config_text("model.d_embed = 60")    # not divisible by heads


# ---------------------------------------------------------------------- CLI

def write_cfg(tmp_path):
    cfg = tmp_path / "exp.cfg"
    cfg.write_text("n_cycles = 600\nn_cal = 80\nn_test = 150\n"
                   "variant = moving-average\n")
    return cfg


def test_cli_simulate_and_evaluate(tmp_path):
    cfg = write_cfg(tmp_path)
    out = tmp_path / "run"
    assert main(["simulate", "--config", str(cfg), "--preset", "tiny",
                 "--out", str(out)]) == EXIT_OK
    assert (out / "trace.csv").exists()
    assert main(["evaluate", "--config", str(cfg), "--preset", "tiny",
                 "--out", str(out)]) == EXIT_OK
    assert (out / "results.csv").exists()
    config_echo = json.loads((out / "resolved_config.json").read_text())
    assert config_echo["n_cycles"] == 600


def test_cli_prepare_train_calibrate_stage_flow(tmp_path):
    out = tmp_path / "run"
    base = ["--preset", "tiny", "--out", str(out), "--seed", "3"]
    assert main(["prepare", *base]) == EXIT_OK
    assert (out / "dataset.bin").exists()
    assert main(["train", *base, "--variant", "iqpt"]) == EXIT_OK
    assert (out / "model.bin").exists()


def test_cli_config_error_exit_code(tmp_path):
    bad = tmp_path / "bad.cfg"
    bad.write_text("deployment.n_subnetworks = -3\n")
    code = main(["simulate", "--config", str(bad), "--preset", "tiny",
                 "--out", str(tmp_path / "x")])
    assert code == EXIT_CONFIG


def test_cli_report_missing_dir_exit_code(tmp_path):
    code = main(["report", "--results", str(tmp_path / "none"),
                 "--out", str(tmp_path / "rep")])
    assert code == EXIT_STAGE


def test_sweep_and_report_round_trip(tmp_path):
    spec = smoke_spec(seed=9)
    rows = sweep(spec, "m", [2, 4], tmp_path / "sweep")
    assert len(rows) == 2
    assert (tmp_path / "sweep" / "m_2" / "results.csv").exists()
    assert (tmp_path / "sweep" / "sweep_report.csv").exists()

    merged, markdown = report(tmp_path / "sweep", tmp_path / "rep")
    assert (tmp_path / "rep.csv").exists()
    assert (tmp_path / "rep.md").exists()
    assert "moving-average" in markdown
    # aggregation identity: two runs of the same predictor/eps merge to n=2
    assert all(row["n_runs"] == 2 for row in merged)


def test_report_single_run_passthrough(tmp_path):
    run_pipeline(smoke_spec(seed=10), tmp_path / "solo")
    merged, _ = report(tmp_path)
    with open(tmp_path / "solo" / "results.csv", newline="") as fh:
        import csv as csvmod
        raw = list(csvmod.DictReader(fh))
    by_eps = {float(r["eps_target"]): float(r["percentile_met"]) for r in raw}
    for row in merged:
        assert row["met_mean"] == pytest.approx(by_eps[float(row["eps_target"])])
        assert row["met_ci"] == 0.0


def test_spec_to_dict_round_trips_json():
    spec = desk_preset(seed=3)
    blob = json.dumps(spec_to_dict(spec))
    assert json.loads(blob)["deployment"]["rng_seed"] == 3
