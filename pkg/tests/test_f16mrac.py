import logging
import math
from pathlib import Path

import numpy as np
import pytest

from momentvv.aero import AeroCoeffs, AircraftParams, load_aero
from momentvv.cases import CaseLibrary, build_closed_loop
from momentvv.dynamics import VectorField
from momentvv.f16mrac import (
    FitToleranceError,
    MracConfig,
    ModelError,
    build_adaptive_law,
    build_short_period,
    closed_loop_split,
    fit_reference_trajectory,
    linearize,
    lqr_reference,
    plant_registry,
    reduce_short_period,
    reference_response,
    solve_lyapunov,
)
from momentvv.poly import Polynomial, VarRegistry, taylor_trig

DATA = Path(__file__).resolve().parents[1] / "config" / "aero"


@pytest.fixture(scope="module")
def morelli():
    return load_aero(DATA / "morelli_f16.txt")


@pytest.fixture(scope="module")
def synthetic():
    return load_aero(DATA / "synthetic.txt")


def test_lyapunov_identity_case():
    P = solve_lyapunov(-np.eye(3), 2.0 * np.eye(3))
    assert np.allclose(P, np.eye(3), atol=1e-12)


def test_lyapunov_residual_on_random_stable_matrices():
    rng = np.random.default_rng(7)
    for _ in range(100):
        M = rng.normal(size=(3, 3))
        A = M - (np.max(np.linalg.eigvals(M).real) + 0.5) * np.eye(3)
        R = np.diag(rng.uniform(0.1, 10.0, size=3))
        P = solve_lyapunov(A, R)
        residual = A.T @ P + P @ A + R
        scale = max(1.0, np.linalg.norm(P) * np.linalg.norm(A))
        assert np.linalg.norm(residual) <= 1e-10 * scale
        assert np.all(np.linalg.eigvalsh(P) > 0)


def test_lyapunov_rejects_unstable_reference():
    with pytest.raises(ModelError, match="not Hurwitz"):
        solve_lyapunov(np.diag([-1.0, 0.5, -2.0]), np.eye(3))


def test_lyapunov_rejects_indefinite_weight():
    with pytest.raises(ModelError, match="positive definite"):
        solve_lyapunov(-np.eye(3), np.diag([1.0, -1.0, 1.0]))


def test_reference_response_first_order_step():
    times = np.linspace(0.0, 3.0, 7)
    x = reference_response(-np.eye(3), np.array([1.0, 0.0, 0.0]), 2.0, times)
    assert x.shape == (7, 3)
    assert np.allclose(x[:, 0], 2.0 * (1.0 - np.exp(-times)), atol=1e-12)
    assert np.allclose(x[:, 1:], 0.0)


def test_reference_fit_meets_tolerance():
    reg = VarRegistry(["t"]).freeze()
    pieces = fit_reference_trajectory(
        -np.eye(3), np.array([1.0, 0.0, 0.0]), 1.0, [(0.0, 1.0)], 6, registry=reg, horizon=1.0
    )
    assert len(pieces) == 1
    first, second, _ = pieces[0]
    for tau in (0.0, 0.3, 0.5, 1.0):
        assert abs(first.eval([tau]) - (1.0 - math.exp(-tau))) < 1e-6
    assert second.is_zero()


def test_reference_fit_over_several_partitions():
    reg = VarRegistry(["t"]).freeze()
    pieces = fit_reference_trajectory(
        -np.eye(3),
        np.array([1.0, 0.0, 0.0]),
        1.0,
        [(0.0, 1.0), (1.0, 4.0)],
        6,
        registry=reg,
        horizon=4.0,
    )
    # polynomials are in tau = t / horizon
    assert abs(pieces[1][0].eval([0.5]) - (1.0 - math.exp(-2.0))) < 1e-4


def test_reference_fit_reports_achieved_error():
    reg = VarRegistry(["t"]).freeze()
    with pytest.raises(FitToleranceError) as info:
        fit_reference_trajectory(
            -np.eye(3), np.array([1.0, 0.0, 0.0]), 1.0, [(0.0, 1.0)], 1, registry=reg, horizon=1.0
        )
    assert info.value.achieved > 1e-3
    assert info.value.suggested_degree == 3


def test_reference_fit_rejects_gaps():
    reg = VarRegistry(["t"]).freeze()
    with pytest.raises(ModelError, match="do not tile"):
        fit_reference_trajectory(
            -np.eye(3),
            np.array([1.0, 0.0, 0.0]),
            1.0,
            [(0.0, 0.4), (0.5, 1.0)],
            4,
            registry=reg,
            horizon=1.0,
        )


def test_short_period_linearization_matches_coefficients(synthetic):
    p = AircraftParams()
    plant = build_short_period(p, synthetic)
    lin = linearize(plant)
    assert lin.states == ("alpha", "q")
    assert lin.inputs == ("de", "beta")

    k_qa = p.q_bar * p.S * p.c_bar / (2.0 * p.m * p.V_T**2)
    k_a = p.q_bar * p.S / (p.m * p.V_T)
    k_m = p.q_bar * p.S * p.c_bar / p.J_y
    assert lin.A[0, 1] == pytest.approx(1.0 - 30.0 * k_qa)
    assert lin.B[0, 0] == pytest.approx(-0.4 * k_a)
    assert lin.B[1, 0] == pytest.approx(k_m * (-0.6 - 0.35 * 0.4))


def test_linearization_split_is_exact(morelli):
    plant = build_short_period(AircraftParams(), morelli)
    lin = linearize(plant)
    rng = np.random.default_rng(11)
    for _ in range(20):
        point = rng.uniform(-0.3, 0.3, size=4)
        x, u = point[:2], point[2:]
        for i, comp in enumerate(plant.components):
            expected = lin.A[i] @ x + lin.B[i] @ u + lin.residual[i].eval(point)
            assert comp.eval(point) == pytest.approx(expected, rel=1e-9, abs=1e-9)
    origin = np.zeros(4)
    for residual in lin.residual:
        for name in ("alpha", "q", "de", "beta"):
            assert abs(residual.partial(name).eval(origin)) < 1e-9


def test_missing_coefficient_is_a_model_error():
    from momentvv.aero import parse_aero

    with pytest.raises(ModelError, match="missing"):
        build_short_period(AircraftParams(), parse_aero("Cx 0 0 0 1.0\n"))


def test_lqr_reference_is_hurwitz_for_bundled_gains(morelli):
    ref = lqr_reference(build_short_period(AircraftParams(), morelli), MracConfig())
    assert ref.A_r.shape == (3, 3)
    assert np.allclose(ref.A_r[0], [0.0, 1.0, 0.0])
    assert np.all(np.linalg.eigvals(ref.A_r).real < 0)


def test_adaptive_law_for_single_channel():
    cfg = MracConfig(alr_sign=-1)
    reg = VarRegistry(["e_int", "alpha", "q", "W2"]).freeze()
    e_int, alpha, q, w2 = (Polynomial.variable(reg, n) for n in reg)
    law = build_adaptive_law(cfg, np.eye(3), np.array([0.0, 0.0, 1.0]), reg, [e_int, alpha, q])
    assert law.states == ("W2",)
    expected = 2000.0 * (alpha * q - 12.0 * w2 - 0.001 * q * q * w2)
    assert law.components[0].allclose(expected)


def test_adaptive_law_needs_a_learning_rate():
    cfg = MracConfig(Gamma=[0.0, 0.0, 0.0])
    reg = VarRegistry(["e_int", "alpha", "q"]).freeze()
    error = [Polynomial.variable(reg, n) for n in reg]
    with pytest.raises(ModelError):
        build_adaptive_law(cfg, np.eye(3), np.ones(3), reg, error)


def test_mrac_config_validates_lengths():
    with pytest.raises(ValueError):
        MracConfig(K_1=[1.0, 2.0])
    with pytest.raises(ValueError):
        MracConfig(Gamma=[-1.0, 0.0, 0.0])


def test_case1_variants_structure(morelli):
    case = CaseLibrary().get(["case1"])[0]
    lqr = build_closed_loop(case, "lqr", aero=morelli)
    mrac = build_closed_loop(case, "lqr+mrac", aero=morelli)
    assert lqr.system.states == ("e_int", "alpha", "q")
    assert mrac.system.states == ("e_int", "alpha", "q", "W2")
    assert len(lqr.system.cells) == 1
    assert lqr.system.horizon == 1.0
    lo, hi = lqr.system.initial_set.bound("alpha")
    assert lo == pytest.approx(-1.0 / 3.0) and hi == pytest.approx(1.0 / 3.0)
    lo, hi = lqr.system.global_set.bound("alpha")
    assert lo == pytest.approx(-1.0) and hi == pytest.approx(1.0)
    assert mrac.system.max_field_degree >= lqr.system.max_field_degree


def test_case2_has_three_disturbance_cells(morelli):
    case = CaseLibrary().get(["case2"])[0]
    loop = build_closed_loop(case, "lqr", aero=morelli)
    assert len(loop.system.cells) == 3
    disturbances = [cell.field.metadata["disturbance"] for cell in loop.system.cells]
    assert disturbances == [1.0, 0.0, 0.0]


def test_closed_loop_split_per_cell(morelli):
    case = CaseLibrary().get(["case2"])[0]
    loop = build_closed_loop(case, "lqr", aero=morelli)
    splits = closed_loop_split(loop.system)
    assert len(splits) == 3
    assert all(split.A.shape == (3, 3) for split in splits)


def test_terminal_set_must_fit_in_state_box(synthetic):
    case = CaseLibrary().get(["case1"])[0].model_copy(
        update={"command": 29.0, "enforce_terminal_set": True}
    )
    with pytest.raises(ModelError, match="not contained"):
        build_closed_loop(case, "lqr", aero=synthetic)


def test_mrac_without_learning_rates_is_rejected(synthetic):
    case = CaseLibrary().get(["case1"])[0]
    case = case.model_copy(update={"mrac": MracConfig(Gamma=[0.0, 0.0, 0.0])})
    with pytest.raises(ModelError, match="all-zero Gamma"):
        build_closed_loop(case, "lqr+mrac", aero=synthetic)


def test_weight_law_recovery_sign_sets_weight_stability():
    assert MracConfig().alr_sign == 1
    reg = VarRegistry(["e_int", "alpha", "q", "W2"]).freeze()
    error = [Polynomial.variable(reg, n) for n in ("e_int", "alpha", "q")]
    origin = np.zeros(len(reg))
    rates = {}
    for sign in (1, -1):
        law = build_adaptive_law(MracConfig(alr_sign=sign), np.eye(3), np.ones(3), reg, error)
        rates[sign] = law.components[0].partial("W2").eval(origin)
    assert rates[1] == pytest.approx(24000.0)
    assert rates[-1] == pytest.approx(-24000.0)


def test_gravity_only_plant():
    params = AircraftParams(T_thrust=0.0)
    plant = build_short_period(params, AeroCoeffs.zeros())
    reg = plant.registry
    q = Polynomial.variable(reg, "q")
    expected = q + (params.g / params.V_T) * taylor_trig("cos", "alpha", 2, reg)
    assert plant.component("alpha").allclose(expected)
    assert plant.component("q").is_zero()


def test_thrust_only_plant():
    params = AircraftParams(g=0.0)
    plant = build_short_period(params, AeroCoeffs.zeros())
    reg = plant.registry
    q = Polynomial.variable(reg, "q")
    k_thrust = params.T_thrust / (params.m * params.V_T)
    expected = q - k_thrust * taylor_trig("sin", "alpha", 3, reg)
    assert plant.component("alpha").allclose(expected)
    assert plant.component("q").is_zero()


def _cubic_plant() -> VectorField:
    reg = plant_registry()
    alpha, q, de, beta = (Polynomial.variable(reg, n) for n in reg)
    alpha_dot = q - 0.5 * alpha + 0.2 * alpha**3 - 0.1 * de + 0.3 * beta
    q_dot = -2.0 * alpha - q + 3.0 * de + 0.5 * de * alpha - 0.05 * q * q * alpha
    return VectorField(reg, (alpha_dot, q_dot), ("alpha", "q"))


def test_plant_refit_reproduces_a_field_already_in_the_basis():
    plant = _cubic_plant()
    bounds = {"alpha": (-0.5, 0.5), "q": (-0.9, 0.9), "de": (-0.4, 0.4)}
    reduced = reduce_short_period(plant, bounds, 3, sideslip=(2.0, 0.1))
    reg = plant.registry
    alpha = Polynomial.variable(reg, "alpha")
    beta = 2.0 * alpha + 0.1
    mapping = {n: Polynomial.variable(reg, n) for n in ("alpha", "q", "de")}
    mapping["beta"] = beta
    for got, comp in zip(reduced.components, plant.components):
        assert got.allclose(comp.compose(reg, mapping), atol=1e-9, rtol=1e-9)
    assert reduced.metadata["degree"] == 3
    assert max(reduced.metadata["refit_deviation"]) < 1e-9


def test_plant_refit_drops_elevator_products_beyond_degree():
    reg = plant_registry()
    alpha, q, de, _ = (Polynomial.variable(reg, n) for n in reg)
    plant = VectorField(reg, (q, de**3 + alpha * alpha * de), ("alpha", "q"))
    bounds = {"alpha": (-0.5, 0.5), "q": (-0.9, 0.9), "de": (-0.4, 0.4)}
    reduced = reduce_short_period(plant, bounds, 3)
    de_index = reg.index("de")
    for comp in reduced.components:
        assert comp.degree <= 3
        for mono in comp.terms:
            assert mono.exponent(de_index) <= 1
            if mono.exponent(de_index):
                assert mono.degree <= 2
    with pytest.raises(ModelError):
        reduce_short_period(plant, bounds, 1)


@pytest.mark.parametrize("variant", ["lqr", "lqr+mrac"])
def test_bundled_cases_use_cubic_refit(morelli, variant):
    # case3 MRAC carries the time polynomials of the reference fit
    for name in ("case1", "case2"):
        case = CaseLibrary().get([name])[0]
        assert case.plant_degree == 3
        loop = build_closed_loop(case, variant, aero=morelli)
        assert loop.system.max_field_degree <= 3


def test_unreduced_plant_keeps_full_degree(morelli):
    case = CaseLibrary().get(["case1"])[0].model_copy(update={"plant_degree": None})
    loop = build_closed_loop(case, "lqr", aero=morelli)
    assert loop.system.max_field_degree > 3


def test_case3_mrac_assembly(morelli):
    case = CaseLibrary().get(["case3"])[0]
    loop = build_closed_loop(case, "lqr+mrac", aero=morelli)
    assert loop.system.states == ("e_int", "alpha", "q", "W2")
    assert len(loop.system.cells) == 3
    assert loop.command_final == pytest.approx(math.radians(5.0))
    # time cells 0-3 s, 3-9 s and 9-30 s in units of the 30 s horizon
    for tau, owner in ((0.05, 0), (0.2, 1), (0.6, 2)):
        point = loop.system.point(tau, [0.0, 0.0, 0.0, 0.0])
        inside = [cell.region.contains(point) for cell in loop.system.cells]
        assert inside == [k == owner for k in range(3)]


def test_reference_degree_is_raised_until_the_fit_passes(morelli, caplog):
    case = CaseLibrary().get(["case3"])[0].model_copy(update={"reference_degree": 2})
    with caplog.at_level(logging.WARNING, logger="momentvv.f16mrac"):
        loop = build_closed_loop(case, "lqr+mrac", aero=morelli)
    assert len(loop.system.cells) == 3
    assert "retrying" in caplog.text


def test_case1_weight_rate_vanishes_at_origin(morelli):
    loop = build_closed_loop(CaseLibrary().get(["case1"])[0], "lqr+mrac", aero=morelli)
    w_dot = loop.system.cells[0].field.component("W2")
    for t in (0.0, 0.37, 1.0):
        assert abs(w_dot.eval(loop.system.point(t, [0.0, 0.0, 0.0, 0.0]))) < 1e-12
