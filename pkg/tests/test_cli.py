import yaml
from typer.testing import CliRunner

from momentvv.cli import app

runner = CliRunner()


def test_cases_list_shows_bundled_cases():
    result = runner.invoke(app, ["cases", "list"])
    assert result.exit_code == 0
    for name in ("case1", "case2", "case3", "surrogate"):
        assert name in result.output


def test_init_writes_loadable_config(tmp_path):
    target = tmp_path / "run.yaml"
    result = runner.invoke(app, ["init", "--output", str(target)])
    assert result.exit_code == 0
    data = yaml.safe_load(target.read_text())
    assert data["case"] == "surrogate"
    assert data["mode"] == "verify"


def test_run_surrogate_exits_with_verdict_code(tmp_path):
    out = tmp_path / "surrogate"
    result = runner.invoke(app, ["run", "--case", "surrogate", "--dmax", "3", "--out", str(out)])
    assert result.exit_code == 0, result.output
    assert (tmp_path / "surrogate.txt").exists()
    report = yaml.safe_load((tmp_path / "surrogate.yaml").read_text())
    assert report["verdict"] == "validated"


def test_simulate_only_run_is_inconclusive(tmp_path):
    out = tmp_path / "sim"
    result = runner.invoke(
        app,
        ["run", "--case", "surrogate", "--mode", "simulate", "--grid", "3", "--step", "0.01", "--out", str(out)],
    )
    assert result.exit_code == 2, result.output


def test_unknown_case_is_a_usage_error(tmp_path):
    result = runner.invoke(app, ["run", "--case", "nope", "--out", str(tmp_path / "x")])
    assert result.exit_code == 3
    assert "Unknown cases" in result.output


def test_f16_case_with_missing_aero_file_is_a_usage_error(tmp_path):
    result = runner.invoke(
        app, ["run", "--case", "case1", "--aero", str(tmp_path / "absent.txt"), "--out", str(tmp_path / "x")]
    )
    assert result.exit_code == 3
