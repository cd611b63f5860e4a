import json

import pytest
import yaml

from momentvv.aero import ConfigError
from momentvv.backends import SolverSpec
from momentvv.mc import SimConfig
from momentvv.relax import BoundEntry, BoundSequence
from momentvv.runner import (
    RunConfig,
    ValidationReport,
    ValidationRunner,
    decide_verdict,
    overall_verdict,
    render_table,
    write_reports,
)


def _report(*entries, threshold=3e-3, **kwargs):
    bounds = BoundSequence()
    for entry in entries:
        bounds.add(entry)
    return ValidationReport("c", "lqr", "verify", threshold, bounds=bounds, **kwargs)


def _strip_timing(data):
    for report in data["reports"]:
        for entry in report["bounds"]:
            entry.pop("cpu_seconds")
    return data


def test_verdict_follows_final_bound():
    assert decide_verdict(_report(BoundEntry(1, 1.0, "optimal", 0.0), BoundEntry(2, 1e-3, "optimal", 0.0))) == "validated"
    assert decide_verdict(_report(BoundEntry(1, 1e-3, "optimal", 0.0), BoundEntry(2, 0.5, "optimal", 0.0))) == "not-validated"
    assert decide_verdict(_report(BoundEntry(1, 1e-4, "inaccurate", 0.0))) == "inconclusive"
    assert decide_verdict(_report(BoundEntry(1, float("nan"), "exported", 0.0))) == "inconclusive"
    assert decide_verdict(_report(BoundEntry(1, float("nan"), "infeasible", 0.0))) == "not-validated"
    assert decide_verdict(_report()) == "inconclusive"


def test_overall_verdict():
    def r(verdict):
        return _report(verdict=verdict)

    assert overall_verdict([r("validated"), r("validated")]) == "validated"
    assert overall_verdict([r("validated"), r("inconclusive")]) == "inconclusive"
    assert overall_verdict([r("inconclusive"), r("not-validated")]) == "not-validated"


def test_surrogate_verification_is_validated_and_reproducible(tmp_path):
    config = RunConfig(case="surrogate", mode="verify", d_max=3, output=str(tmp_path / "run"))
    reports = ValidationRunner(config).run()
    assert len(reports) == 1
    report = reports[0]
    assert report.verdict == "validated"
    assert [e.order for e in report.bounds.entries] == [1, 2, 3]
    assert report.bounds.entries[0].bound == pytest.approx(1.0, abs=1e-5)
    assert report.heuristic_x0 is not None

    text_path, yaml_path = write_reports(reports, tmp_path / "run")
    assert "Rel Ord" in text_path.read_text()
    first = yaml.safe_load(yaml_path.read_text())
    assert first["verdict"] == "validated"

    again = ValidationRunner(config).run()
    write_reports(again, tmp_path / "again")
    second = yaml.safe_load((tmp_path / "again.yaml").read_text())
    assert _strip_timing(first) == _strip_timing(second)


def test_simulate_mode_reports_monte_carlo_only(tmp_path):
    config = RunConfig(
        case="surrogate",
        mode="simulate",
        sim=SimConfig(step=1e-3, grid=5),
        output=str(tmp_path / "sim"),
        dump_trajectory=True,
    )
    report = ValidationRunner(config).run()[0]
    assert report.bounds.entries == []
    assert report.mc is not None and report.mc.diverged == 0
    assert report.verdict == "inconclusive"
    dump = tmp_path / "sim_linear_trajectory.txt"
    assert dump.read_text().startswith("# momentvv trajectory dump")
    assert "Monte-Carlo J" in render_table([report])


def test_export_mode_writes_problem_files(tmp_path):
    config = RunConfig(
        case="surrogate",
        mode="export-sdp",
        d_max=2,
        solver=SolverSpec(export_dir=str(tmp_path / "sdpa")),
        output=str(tmp_path / "export"),
        log_solves=True,
    )
    reports = ValidationRunner(config).run()
    assert reports[0].verdict == "inconclusive"
    assert {e.status for e in reports[0].bounds.entries} == {"exported"}
    assert (tmp_path / "sdpa" / "surrogate_linear_d1.dat-s").exists()
    assert (tmp_path / "sdpa" / "surrogate_linear_d2.dat-s").exists()

    log_lines = [
        line
        for line in (tmp_path / "export_solves.ndjson").read_text().splitlines()
        if line and not line.startswith("#")
    ]
    assert len(log_lines) == 2
    assert json.loads(log_lines[0])["result"]["status"] == "exported"


def test_compare_mode_runs_both_variants(tmp_path):
    config = RunConfig(
        case="surrogate", mode="compare", d_max=1, sim=SimConfig(step=1e-2, grid=3), output=str(tmp_path / "cmp")
    )
    reports = ValidationRunner(config).run()
    assert len(reports) == 2
    assert all(r.mc is not None and r.bounds.final is not None for r in reports)


def test_run_config_yaml_errors(tmp_path):
    path = tmp_path / "run.yaml"
    path.write_text("d_max: 0\n")
    with pytest.raises(ConfigError, match="Invalid run config"):
        RunConfig.from_yaml(path)


def test_run_config_yaml_round_trip(tmp_path):
    path = tmp_path / "run.yaml"
    path.write_text(yaml.safe_dump(RunConfig(case="case1", d_max=2).model_dump()))
    loaded = RunConfig.from_yaml(path)
    assert loaded.case == "case1"
    assert loaded.d_max == 2
    assert loaded.solver.type == "embedded"
