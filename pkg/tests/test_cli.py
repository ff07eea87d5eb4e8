import json

import numpy as np
import pytest

from kahler_surgery import flow
from kahler_surgery.cli import EXIT_FAIL, EXIT_INPUT, EXIT_OK, main
from kahler_surgery.errors import ConfigurationError, PreconditionError
from kahler_surgery.mmp import blowup_p2, example_class, lattice_to_dict
from kahler_surgery.pipeline import BASE_COLUMNS, PipelineConfig, emit_plots_data, read_timeseries
from kahler_surgery.validation import read_json, validate

SMALL = {"params": {"n": 2, "a0": 1, "b0": 4, "N": 64}, "directions": 4, "levels": 16}


def _write(path, doc):
    path.write_text(json.dumps(doc))
    return str(path)


@pytest.fixture(scope="module")
def small_pipeline(tmp_path_factory):
    root = tmp_path_factory.mktemp("pipeline")
    cfg = _write(root / "config.json", SMALL)
    code = main(["pipeline", "--config", cfg, "--out", str(root / "out"), "--figures"])
    return root / "out", code


# ------------------------------------------------------------------- mmp

def test_mmp_command(tmp_path, capsys):
    src = _write(tmp_path / "lat.json", lattice_to_dict(blowup_p2(1), example_class(1, 4)))
    out = tmp_path / "schedule.json"
    assert main(["mmp", "--input", src, "--output", str(out)]) == EXIT_OK
    doc = read_json(out, "schedule")
    assert doc["terminal"] == "CollapseFano" and doc["terminal_time"] == "4/3"
    assert doc["steps"][0]["absolute_time"] == "1"
    assert "terminal_time=4/3" in capsys.readouterr().out


def test_mmp_rejects_unknown_field(tmp_path):
    doc = lattice_to_dict(blowup_p2(1), example_class(1, 4))
    doc["extra"] = 1
    assert main(["mmp", "--input", _write(tmp_path / "lat.json", doc), "--out", str(tmp_path / "s.json")]) == EXIT_INPUT


def test_missing_input_file(tmp_path):
    assert main(["mmp", "--input", str(tmp_path / "nope.json"), "--out", str(tmp_path / "s.json")]) == EXIT_INPUT


# ---------------------------------------------------------------- config

def test_config_roundtrip_and_defaults():
    cfg = PipelineConfig.from_dict(SMALL)
    assert cfg.seed == 0 and cfg.threshold_factor == 3.0
    again = PipelineConfig.from_dict(cfg.to_dict())
    assert again == cfg
    validate(cfg.to_dict(), "pipeline_config")


@pytest.mark.parametrize("patch", [{"bogus": 1}, {"delta": 1.5}, {"threshold_factor": 1.0},
                                   {"params": {"n": 2, "a0": 1, "b0": 4, "N": 64, "dt": 0.1}},
                                   {"params": {"n": 2, "a0": 1}}])
def test_config_schema_rejections(patch):
    with pytest.raises(ConfigurationError):
        PipelineConfig.from_dict({**SMALL, **patch})


def test_misconfigured_inequality(tmp_path, capsys):
    doc = {**SMALL, "params": {"n": 2, "a0": 1, "b0": 3, "N": 64}}
    with pytest.raises(PreconditionError):
        PipelineConfig.from_dict(doc)
    code = main(["pipeline", "--config", _write(tmp_path / "c.json", doc), "--out", str(tmp_path / "o")])
    assert code == EXIT_INPUT
    assert "a0(n+1) < b0(n-1)" in capsys.readouterr().err


def test_flow_command_rejects_unknown_params(tmp_path):
    cfg = _write(tmp_path / "p.json", {"n": 2, "a0": 1, "b0": 4, "speed": 2})
    assert main(["flow", "--config", cfg, "--out", str(tmp_path / "run")]) == EXIT_INPUT


# ---------------------------------------------------------------- pipeline

def test_pipeline_outputs(small_pipeline):
    out, code = small_pipeline
    assert code in (EXIT_OK, EXIT_FAIL)
    report = read_json(out / "pipeline.json", "pipeline")
    assert code == (EXIT_OK if report["verdict"] == "Pass" else EXIT_FAIL)
    assert all(s["status"] == "ok" for s in report["stages"].values())
    for name in ("schedule.json", "run/run.json", "limit.csv", "continuation.json", "estimates.json",
                 "gh.json", "timeseries.csv"):
        assert (out / name).exists(), name
    for fig in ("class.png", "diameter_volume.png", "gh.png", "monitors.png"):
        assert (out / "figures" / fig).stat().st_size > 0


def test_timeseries_columns_and_roundtrip(small_pipeline):
    out, _ = small_pipeline
    data = read_timeseries(out / "timeseries.csv")
    assert list(data)[: len(BASE_COLUMNS)] == list(BASE_COLUMNS)
    traj = flow.load_trajectory(out / "run")
    k = len(traj.snapshots)
    assert np.array_equal(data["t"][:k], traj.times)
    assert np.array_equal(data["a"][:k], [s.profile.a for s in traj.snapshots])
    assert np.all(np.isfinite(data["volume_ratio"]))


def test_plots_command_is_deterministic(small_pipeline):
    out, _ = small_pipeline
    before = (out / "timeseries.csv").read_bytes()
    assert main(["plots", "--run", str(out)]) == EXIT_OK
    assert (out / "timeseries.csv").read_bytes() == before


def test_plots_needs_a_run(tmp_path):
    with pytest.raises(ConfigurationError):
        emit_plots_data(tmp_path)
    assert main(["plots", "--run", str(tmp_path)]) == EXIT_INPUT


def test_verify_and_gh_commands(small_pipeline, tmp_path):
    out, _ = small_pipeline
    code = main(["verify", "--run", str(out / "run"), "--continuation", str(out), "--out", str(tmp_path / "e.json")])
    assert code in (EXIT_OK, EXIT_FAIL)
    assert read_json(tmp_path / "e.json", "estimates")["verdict"] in ("Pass", "Fail")
    code = main(["gh", "--run", str(out / "run"), "--limit", str(out / "limit"), "--dirs", "4",
                 "--levels", "16", "--out", str(tmp_path / "g.json")])
    assert code in (EXIT_OK, EXIT_FAIL)
    assert "after" not in read_json(tmp_path / "g.json", "gh")["final"]
