import json

import pytest

from evansflow.cli import (ExperimentConfig, config_from_dict, emit_report, load_config, main,
                           run_experiment)
from evansflow.errors import ConfigError


def write_config(tmp_path, **extra):
    raw = {"model": {"builtin": "hyperbolic_burgers"}, "eps": [0.2], "out": str(tmp_path / "out")}
    raw.update(extra)
    path = tmp_path / "config.json"
    path.write_text(json.dumps(raw))
    return path


@pytest.fixture(scope="module")
def full_run(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("full")
    config = load_config(write_config(tmp))
    return config, run_experiment(config)


def test_full_run_is_stable(full_run):
    config, report = full_run
    assert report.verdict == "stable"
    assert report.exit_code == 0
    zc = json.loads((config.out_dir / "zero_count_eps0p2.json").read_text())
    assert zc["winding"] == 0
    for name in ("validate.json", "family.csv", "profile_eps0p2.csv", "dispersion_eps0p2.csv",
                 "sweep_eps0p2.csv", "report.json"):
        assert (config.out_dir / name).exists()


def test_report_serialization_is_deterministic(full_run):
    _, report = full_run
    first = emit_report(report, "json")
    assert first == emit_report(report, "json")
    parsed = json.loads(first)
    assert parsed["verdict"] == "stable"
    assert json.loads(json.dumps(parsed)) == parsed
    text = emit_report(report, "text")
    assert text.splitlines()[-1].startswith("verdict: stable")


def test_flipped_flux_fails_validation(tmp_path):
    model = {"n": 1, "k": 1, "u_star": [0.0], "delta": 0.45, "B": [[1.0]],
             "f": [{"exponents": [2], "component": 0, "coefficient": 1.0}],
             "g": [{"exponents": [1], "component": 0, "coefficient": 1.0}]}
    code = main(["full", "--config", str(write_config(tmp_path, model=model))])
    assert code == 2


def test_empty_eps_list_is_validation_only(tmp_path, capsys):
    code = main(["full", "--config", str(write_config(tmp_path)), "--eps", "",
                 "--format", "json"])
    assert code == 0
    out = json.loads(capsys.readouterr().out)
    assert out["stages"].pop("validate") == "ok"
    assert set(out["stages"].values()) == {"skipped"}
    assert out["verdict"] == "passed"


def test_stop_after_family(tmp_path, capsys):
    code = main(["family", "--config", str(write_config(tmp_path)), "--format", "json"])
    assert code == 0
    out = json.loads(capsys.readouterr().out)
    assert set(out["stages"]) == {"validate", "family"}


def test_bad_config_is_a_precondition_error(tmp_path):
    path = tmp_path / "broken.json"
    path.write_text("{not json")
    assert main(["validate", "--config", str(path)]) == 2
    with pytest.raises(ConfigError):
        config_from_dict({"eps": [0.1]})
    with pytest.raises(ConfigError):
        config_from_dict({"model": "builtin:nope"})


def test_config_rejects_nonpositive_constants(burgers, tmp_path):
    with pytest.raises(ConfigError):
        ExperimentConfig(burgers, [0.1], tmp_path, r0=0.0)
