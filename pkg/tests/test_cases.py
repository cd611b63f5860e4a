from pathlib import Path

import pytest
import yaml

from momentvv.aero import ConfigError
from momentvv.cases import CaseLibrary, CaseSpec, build_closed_loop

CASES = Path(__file__).resolve().parents[1] / "config" / "cases"


def test_library_has_bundled_cases():
    library = CaseLibrary()
    assert {"case1", "case2", "case3", "surrogate"} <= set(library.library)
    case3 = library.get(["case3"])[0]
    assert case3.time_cells == [0.0, 3.0, 9.0, 30.0]
    assert case3.mrac.alr_sign == -1
    assert case3.reference_degree == 8
    assert case3.plant_degree == 3


def test_unknown_case_raises_key_error():
    with pytest.raises(KeyError, match="nope"):
        CaseLibrary().get(["case1", "nope"])


@pytest.mark.parametrize("name", ["case1", "case2", "case3", "surrogate"])
def test_yaml_files_match_bundled_defaults(name):
    from_file = CaseSpec.from_yaml(CASES / f"{name}.yaml")
    bundled = CaseLibrary().get([name])[0]
    assert from_file.command == bundled.command
    assert from_file.Lambda == bundled.Lambda
    assert from_file.horizon == bundled.horizon
    assert from_file.time_cells == bundled.time_cells
    assert from_file.mrac.Gamma == bundled.mrac.Gamma
    assert from_file.mrac.alr_sign == bundled.mrac.alr_sign
    assert from_file.plant_degree == bundled.plant_degree
    assert from_file.elevator_limit == bundled.elevator_limit
    assert from_file.reference_degree == bundled.reference_degree
    assert {k: tuple(v) for k, v in from_file.state_box.items()} == {
        k: tuple(v) for k, v in bundled.state_box.items()
    }


def test_resolve_accepts_yaml_path(tmp_path):
    data = {
        "name": "mine",
        "model": "linear",
        "linear": {"rate": -2.0},
        "angle_units": "rad",
        "horizon": 1.0,
        "mrac_enabled": False,
        "initial_box": {"x": [-0.5, 0.5]},
        "state_box": {"x": [-1.0, 1.0]},
        "sweep_vars": ["x"],
    }
    path = tmp_path / "mine.yaml"
    path.write_text(yaml.safe_dump(data))
    case = CaseLibrary().resolve(str(path))
    assert case.name == "mine"
    loop = build_closed_loop(case)
    assert loop.variant == "linear"
    assert loop.system.initial_set.bound("x") == pytest.approx((-0.5, 0.5))


def test_invalid_yaml_reports_line(tmp_path):
    path = tmp_path / "broken.yaml"
    path.write_text("name: broken\nhorizon: [1.0\n")
    with pytest.raises(ConfigError, match="broken.yaml"):
        CaseSpec.from_yaml(path)


def test_invalid_fields_raise_config_error(tmp_path):
    path = tmp_path / "bad.yaml"
    path.write_text("name: bad\nhorizon: -1.0\n")
    with pytest.raises(ConfigError, match="Invalid case file"):
        CaseSpec.from_yaml(path)


def test_time_cells_must_cover_horizon():
    with pytest.raises(ValueError, match="time_cells"):
        CaseSpec(name="x", horizon=10.0, time_cells=[0.0, 3.0, 9.0])


def test_linear_model_needs_section():
    with pytest.raises(ValueError, match="linear"):
        CaseSpec(name="x", model="linear")


def test_f16_case_needs_aero():
    case = CaseLibrary().get(["case1"])[0]
    with pytest.raises(ConfigError, match="aerodynamic"):
        build_closed_loop(case, "lqr")


def test_surrogate_normalization():
    loop = build_closed_loop(CaseLibrary().get(["surrogate"])[0])
    assert loop.system.horizon == 1.0
    assert loop.raw.horizon == 10.0
    assert loop.system.states == ("x",)
    assert loop.threshold == pytest.approx(3e-3)


def test_plant_refit_degree_is_validated():
    assert CaseSpec(name="full", plant_degree=None).plant_degree is None
    with pytest.raises(ValueError):
        CaseSpec(name="too-low", plant_degree=1)
    with pytest.raises(ValueError):
        CaseSpec(name="no-range", elevator_limit=0.0)
