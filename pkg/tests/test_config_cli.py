import os

import numpy as np
import pytest

from splitflow import (ConfigError, ExperimentConfig, PipelineError,
                       dump_config, emit_report, load_checkpoint, load_config,
                       parse_config, run_pipeline, stage_seed)
from splitflow.cli import main


# ---- config parsing ------------------------------------------------------------

def test_parse_defaults_from_empty_text():
    config = parse_config("")
    assert config == ExperimentConfig()


def test_parse_overrides_and_comments():
    text = """
    # experiment
    dataset_size = 128
    teacher_lr = 5e-4
    stage1_guidance_scale = none
    sampler_guidance_scale = 4.5
    emit_svg = true
    """
    config = parse_config(text)
    assert config.dataset_size == 128
    assert config.teacher_lr == 5e-4
    assert config.stage1_guidance_scale is None
    assert config.sampler_guidance_scale == 4.5
    assert config.emit_svg is True


def test_parse_rejects_unknown_key():
    with pytest.raises(ConfigError, match="unknown key"):
        parse_config("learning_rate = 0.1")


def test_parse_rejects_duplicate_key():
    with pytest.raises(ConfigError, match="duplicate"):
        parse_config("seed = 1\nseed = 2")


def test_parse_rejects_bad_value_with_location():
    with pytest.raises(ConfigError, match=":2"):
        parse_config("seed = 1\ndataset_size = many")


def test_parse_rejects_missing_equals():
    with pytest.raises(ConfigError, match="key = value"):
        parse_config("just some words")


def test_dump_parse_round_trip():
    config = ExperimentConfig(dataset_size=77, stage1_guidance_scale=7.5,
                              emit_svg=True)
    assert parse_config(dump_config(config)) == config


def test_fingerprint_tracks_content_not_formatting():
    a = parse_config("seed = 3\ndataset_size = 64")
    b = parse_config("dataset_size =   64   # comment\n\nseed=3")
    assert a.fingerprint() == b.fingerprint()
    c = parse_config("seed = 4\ndataset_size = 64")
    assert a.fingerprint() != c.fingerprint()
    assert len(a.fingerprint()) == 16


def test_stage_seed_is_stable_and_stage_dependent():
    assert stage_seed(0, "teacher") == stage_seed(0, "teacher")
    assert stage_seed(0, "teacher") != stage_seed(0, "distill")
    assert stage_seed(0, "teacher") != stage_seed(1, "teacher")
    assert 0 <= stage_seed(12345, "eval") < 2 ** 64


# ---- report emission --------------------------------------------------------------

def test_emit_report_empty_records(tmp_path):
    path = tmp_path / "empty.csv"
    emit_report([], path, columns=["iteration", "loss"])
    assert path.read_text() == "iteration,loss\n"


def test_emit_report_single_record(tmp_path):
    path = tmp_path / "one.csv"
    emit_report([{"iteration": 0, "loss": 0.123456789}], path,
                columns=["iteration", "loss"])
    assert path.read_text() == "iteration,loss\n0,0.123457\n"


def test_emit_report_byte_identical_re_emission(tmp_path):
    records = [{"iteration": i, "loss": 1.0 / (i + 1)} for i in range(5)]
    p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
    emit_report(records, p1, columns=["iteration", "loss"])
    emit_report(records, p2, columns=["iteration", "loss"])
    assert p1.read_bytes() == p2.read_bytes()


# ---- pipeline ----------------------------------------------------------------------

def tiny_config(tmp_path, **overrides):
    base = dict(
        dataset_size=64, model_hidden=8, model_layers=2,
        model_time_embed_dim=8,
        teacher_iterations=5, teacher_batch_size=16,
        stage1_iterations=5, stage1_batch_size=16,
        stage2_iterations=3, stage2_batch_size=8,
        eval_n_seeds=2, eval_sample_count=32,
        seed=0, output_dir=str(tmp_path / "run"))
    base.update(overrides)
    return ExperimentConfig(**base)


def test_pipeline_produces_all_artifacts(tmp_path):
    config = tiny_config(tmp_path)
    run_pipeline(config, ["teacher", "distill", "refine", "eval"])
    expected = ["teacher.ckpt", "losses_teacher.csv",
                "student_stage1.ckpt", "losses_stage1.csv",
                "student_stage2.ckpt", "regularizer.ckpt",
                "discriminator.ckpt", "losses_stage2.csv",
                "metrics.csv", "metrics_summary.csv"]
    for name in expected:
        assert os.path.exists(os.path.join(config.output_dir, name)), name
    _, meta = load_checkpoint(os.path.join(config.output_dir, "teacher.ckpt"))
    assert meta["config_fingerprint"] == config.fingerprint()


def test_pipeline_rerun_is_idempotent(tmp_path):
    config = tiny_config(tmp_path)
    run_pipeline(config, ["teacher"])
    path = os.path.join(config.output_dir, "teacher.ckpt")
    before = open(path, "rb").read()
    mtime = os.path.getmtime(path)
    run_pipeline(config, ["teacher"])    # skipped: outputs exist
    assert open(path, "rb").read() == before
    assert os.path.getmtime(path) == mtime


def test_pipeline_missing_prior_stage_named(tmp_path):
    config = tiny_config(tmp_path)
    with pytest.raises(PipelineError, match="teacher"):
        run_pipeline(config, ["distill"])
    run_pipeline(config, ["teacher"])
    with pytest.raises(PipelineError, match="distill"):
        run_pipeline(config, ["refine"])


def test_pipeline_rejects_unknown_stage(tmp_path):
    with pytest.raises(PipelineError, match="unknown stages"):
        run_pipeline(tiny_config(tmp_path), ["deploy"])


def test_pipeline_svg_emission(tmp_path):
    config = tiny_config(tmp_path, emit_svg=True)
    run_pipeline(config, ["teacher"])
    svg = os.path.join(config.output_dir, "losses_teacher.svg")
    assert os.path.exists(svg)
    assert open(svg).read().startswith("<svg")


# ---- CLI ------------------------------------------------------------------------

def write_tiny_config_file(tmp_path, **overrides):
    config = tiny_config(tmp_path, **overrides)
    path = tmp_path / "exp.cfg"
    path.write_text(dump_config(config))
    return str(path), config


@pytest.mark.parametrize("command", ["train-teacher", "distill", "refine",
                                     "eval", "pipeline", "sample",
                                     "diagnose-isc"])
def test_cli_dry_run_touches_nothing(tmp_path, capsys, command):
    cfg_path, config = write_tiny_config_file(tmp_path)
    # sample's dry run still needs a checkpoint path to report
    argv = [command, "--config", cfg_path, "--dry-run"]
    if command == "sample":
        argv += ["--checkpoint", "whatever.ckpt"]
    assert main(argv) == 0
    out = capsys.readouterr().out
    assert config.fingerprint() in out
    assert not os.path.exists(config.output_dir)


def test_cli_pipeline_then_sample_and_diagnose(tmp_path, capsys):
    cfg_path, config = write_tiny_config_file(tmp_path)
    assert main(["pipeline", "--config", cfg_path]) == 0
    capsys.readouterr()

    assert main(["sample", "--config", cfg_path, "--num", "4"]) == 0
    sample_path = capsys.readouterr().out.strip()
    lines = open(sample_path).read().strip().splitlines()
    assert len(lines) == 5    # header + 4 samples

    assert main(["sample", "--config", cfg_path, "--num", "4",
                 "--steps", "4"]) == 0
    capsys.readouterr()

    assert main(["diagnose-isc", "--config", cfg_path, "--trials", "50"]) == 0
    out = capsys.readouterr().out
    assert "splitting-identity residual" in out
    assert "0.375" in out
    assert "splitting fraction" in out


def test_cli_sample_without_checkpoint_fails_cleanly(tmp_path, capsys):
    cfg_path, _ = write_tiny_config_file(tmp_path)
    assert main(["sample", "--config", cfg_path]) == 2
    assert "no student checkpoint" in capsys.readouterr().err


def test_cli_seed_override(tmp_path, capsys):
    cfg_path, config = write_tiny_config_file(tmp_path)
    assert main(["train-teacher", "--config", cfg_path, "--seed", "9",
                 "--dry-run"]) == 0
    out = capsys.readouterr().out
    assert config.fingerprint() not in out    # seed changes the fingerprint


def test_cli_rejects_bad_config_file(tmp_path):
    path = tmp_path / "bad.cfg"
    path.write_text("warp_speed = 9\n")
    with pytest.raises(ConfigError, match="unknown key"):
        main(["train-teacher", "--config", str(path), "--dry-run"])
