import math

import numpy as np
import pytest

from momentvv.poly import (
    DimensionError,
    Monomial,
    PolyEvaluator,
    Polynomial,
    RegistryMismatchError,
    UnknownVariableError,
    VarRegistry,
    monomials_up_to,
    taylor_trig,
)

NAMES = ("t", "x", "y", "z")


def _registry() -> VarRegistry:
    return VarRegistry(NAMES).freeze()


def _random_poly(rng: np.random.Generator, registry: VarRegistry, max_degree: int = 4) -> Polynomial:
    terms = {}
    for _ in range(rng.integers(1, 6)):
        exps = rng.integers(0, 3, size=len(registry))
        while exps.sum() > max_degree:
            exps[rng.integers(0, len(registry))] = 0
        terms[Monomial.from_exponents(exps.tolist())] = float(rng.normal())
    return Polynomial(registry, terms)


def test_registry_is_append_only_and_identity_compared():
    reg = VarRegistry(["x"])
    assert reg.add("y") == 1
    assert reg.add("x") == 0
    reg.freeze()
    with pytest.raises(RuntimeError):
        reg.add("z")
    with pytest.raises(UnknownVariableError):
        reg.index("w")
    other = VarRegistry(["x", "y"])
    with pytest.raises(RegistryMismatchError):
        Polynomial.variable(reg, "x") + Polynomial.variable(other, "x")


def test_partial_of_monomial_product():
    reg = VarRegistry(["x", "y"]).freeze()
    x, y = Polynomial.variable(reg, "x"), Polynomial.variable(reg, "y")
    p = x**2 * y**3
    assert p.partial("x") == 2 * x * y**3
    assert p.partial("y") == 3 * x**2 * y**2


def test_substitute_affine_binomial_expansion():
    reg = VarRegistry(["x"]).freeze()
    x = Polynomial.variable(reg, "x")
    result = (x**2).substitute_affine("x", 2.0, 1.0)
    assert result.allclose(4 * x**2 + 4 * x + 1)


def test_eval_dimension_mismatch():
    reg = VarRegistry(["x", "y"]).freeze()
    with pytest.raises(DimensionError):
        Polynomial.variable(reg, "x").eval([1.0])


def test_zero_polynomial_degree_is_zero():
    reg = VarRegistry(["x"]).freeze()
    assert Polynomial.zero(reg).degree == 0
    assert Polynomial.zero(reg).is_zero()


def test_ring_axioms_on_random_polynomials():
    rng = np.random.default_rng(0)
    reg = _registry()
    for _ in range(1000):
        p, q, r = (_random_poly(rng, reg) for _ in range(3))
        assert ((p + q) + r).allclose(p + (q + r))
        assert ((p * q) * r).allclose(p * (q * r), atol=1e-12, rtol=1e-12)
        assert (p * q).allclose(q * p)
        assert (p + q).allclose(q + p)
        assert (p * (q + r)).allclose(p * q + p * r, atol=1e-12, rtol=1e-12)


def test_leibniz_rule_on_random_polynomials():
    rng = np.random.default_rng(1)
    reg = _registry()
    for _ in range(1000):
        p, q = _random_poly(rng, reg), _random_poly(rng, reg)
        var = NAMES[rng.integers(0, len(NAMES))]
        assert (p * q).partial(var).allclose(p.partial(var) * q + p * q.partial(var))


def test_evaluation_is_a_ring_homomorphism():
    rng = np.random.default_rng(2)
    reg = _registry()
    for _ in range(1000):
        p, q = _random_poly(rng, reg), _random_poly(rng, reg)
        point = rng.uniform(-1.0, 1.0, size=len(reg))
        assert math.isclose((p * q).eval(point), p.eval(point) * q.eval(point), rel_tol=1e-10, abs_tol=1e-12)
        assert math.isclose((p + q).eval(point), p.eval(point) + q.eval(point), rel_tol=1e-10, abs_tol=1e-12)


def test_affine_substitution_matches_evaluation():
    rng = np.random.default_rng(3)
    reg = _registry()
    for _ in range(1000):
        p = _random_poly(rng, reg)
        a, b = rng.uniform(-2, 2, size=2)
        var = int(rng.integers(0, len(reg)))
        point = rng.uniform(-1.0, 1.0, size=len(reg))
        shifted = point.copy()
        shifted[var] = a * point[var] + b
        assert math.isclose(
            p.substitute_affine(var, a, b).eval(point), p.eval(shifted), rel_tol=1e-9, abs_tol=1e-10
        )


def test_monomials_up_to_count_and_order():
    monos = monomials_up_to([0, 1, 2], 4)
    assert len(monos) == math.comb(3 + 4, 4)
    degrees = [m.degree for m in monos]
    assert degrees == sorted(degrees)
    assert monos[0] == Monomial()
    assert len(set(monos)) == len(monos)


def test_taylor_trig_coefficients():
    reg = VarRegistry(["a"]).freeze()
    s = taylor_trig("sin", "a", 3, reg)
    c = taylor_trig("cos", "a", 2, reg)
    assert s.coefficient(Monomial.var(0)) == 1.0
    assert s.coefficient(Monomial.var(0, 3)) == pytest.approx(-1 / 6)
    assert c.coefficient(Monomial()) == 1.0
    assert c.coefficient(Monomial.var(0, 2)) == pytest.approx(-0.5)
    assert abs(s.eval([0.1]) - math.sin(0.1)) < 1e-6


def test_compose_substitutes_polynomials():
    src = VarRegistry(["u"]).freeze()
    dst = VarRegistry(["x", "y"]).freeze()
    u = Polynomial.variable(src, "u")
    x, y = Polynomial.variable(dst, "x"), Polynomial.variable(dst, "y")
    composed = (u**2 + 1).compose(dst, {"u": x + y})
    assert composed.allclose(x**2 + 2 * x * y + y**2 + 1)


def test_poly_evaluator_agrees_with_eval():
    rng = np.random.default_rng(4)
    reg = _registry()
    polys = [_random_poly(rng, reg) for _ in range(5)]
    evaluator = PolyEvaluator(polys)
    points = rng.uniform(-1, 1, size=(50, len(reg)))
    batch = evaluator.evaluate(points)
    for i, point in enumerate(points):
        for j, poly in enumerate(polys):
            assert batch[i, j] == pytest.approx(poly.eval(point), rel=1e-12, abs=1e-12)
