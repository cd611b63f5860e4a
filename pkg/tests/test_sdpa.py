import numpy as np
import pytest

from momentvv.cases import CaseLibrary, build_closed_loop
from momentvv.poly import DimensionError
from momentvv.relax import build
from momentvv.sdp import LmiBlock, LmiStandardForm, lower
from momentvv.sdpa import (
    SdpaFormatError,
    export_sdpa,
    import_sdpa_solution,
    parse_sdpa,
    read_sdpa,
    solution_summary,
    write_sdpa,
)


def _scalar_form() -> LmiStandardForm:
    block = LmiBlock("s", 1, np.array([[-3.0]]), np.array([0]), np.array([[[1.0]]]))
    return LmiStandardForm(np.array([1.0]), np.zeros((0, 1)), np.zeros(0), (block,))


def _assert_same(a: LmiStandardForm, b: LmiStandardForm) -> None:
    m = a.num_vars
    assert b.num_vars == m
    assert np.array_equal(a.c, b.c)
    assert np.array_equal(a.A, b.A)
    assert np.array_equal(a.b, b.b)
    assert len(a.blocks) == len(b.blocks)
    for x, y in zip(a.blocks, b.blocks):
        assert np.array_equal(x.const, y.const)
        assert np.array_equal(x.dense(m), y.dense(m))


def test_scalar_block_lines():
    lines = export_sdpa(_scalar_form()).splitlines()
    assert lines[0].startswith("*")
    assert lines[1:] == ["1", "1", "1", "1.0", "0 1 1 1 3.0", "1 1 1 1 1.0"]


def test_equalities_become_negative_lp_block():
    sdp = LmiBlock("s", 2, np.zeros((2, 2)), np.array([0, 1]), np.array([np.eye(2), [[0.0, 1.0], [1.0, 0.0]]]))
    form = LmiStandardForm(np.array([1.0, 0.0]), np.array([[1.0, -1.0]]), np.array([2.0]), (sdp,))
    lines = export_sdpa(form).splitlines()
    assert lines[2] == "2"
    assert lines[3] == "2 -2"
    assert "0 2 1 1 2.0" in lines and "0 2 2 2 -2.0" in lines
    assert "2 2 1 1 -1.0" in lines and "2 2 2 2 1.0" in lines
    # upper triangle only
    assert "2 1 2 1 1.0" not in lines
    _assert_same(form, parse_sdpa("\n".join(lines)))


def test_moment_problem_round_trip(tmp_path):
    loop = build_closed_loop(CaseLibrary().get(["surrogate"])[0])
    for d in (1, 2):
        form = lower(build(loop.system, loop.terminal_cost, loop.running_cost, d))
        path = write_sdpa(form, tmp_path / f"order{d}.dat-s", title=f"surrogate d={d}")
        _assert_same(form, read_sdpa(path))


def test_export_is_deterministic():
    form = _scalar_form()
    assert export_sdpa(form, "x") == export_sdpa(form, "x")


def test_truncated_problem_reports_line():
    with pytest.raises(SdpaFormatError) as info:
        parse_sdpa("1\n1\n")
    assert info.value.line == 3


def test_malformed_entry_reports_line():
    text = "* header\n1\n1\n1\n1.0\n0 1 1 3.0\n"
    with pytest.raises(SdpaFormatError, match="line 6"):
        parse_sdpa(text)


def test_entry_outside_block_reports_line():
    text = "1\n1\n1\n1.0\n1 1 2 2 1.0\n"
    with pytest.raises(SdpaFormatError, match="line 5"):
        parse_sdpa(text)


def test_import_xvec_solution():
    text = "phase.value = pdOPT\nobjValPrimal = 3.0\nxVec = \n{3.0}\n"
    assert np.array_equal(import_sdpa_solution(text, num_vars=1), np.array([3.0]))
    assert solution_summary(text) == {"phase.value": "pdOPT", "objValPrimal": "3.0"}


def test_import_tolerates_comments_and_whitespace():
    plain = import_sdpa_solution("1.5 -2.0\n")
    noisy = import_sdpa_solution("* solver output\n\n   1.5,   -2.0   \n# done\n")
    assert np.array_equal(plain, noisy)


def test_unterminated_xvec_reports_opening_line():
    text = "objValPrimal = 1\nxVec = \n{1.0, 2.0\n3.0\n"
    with pytest.raises(SdpaFormatError) as info:
        import_sdpa_solution(text)
    assert info.value.line == 3


def test_solution_dimension_mismatch():
    with pytest.raises(DimensionError):
        import_sdpa_solution("1.0 2.0\n", num_vars=3)
