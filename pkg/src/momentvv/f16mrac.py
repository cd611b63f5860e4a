# Copyright 2025 Nic Cravino. All rights reserved.
# SPDX-License-Identifier: Apache-2.0

"""F-16 short-period model, LQR baseline and MRAC augmentation as polynomial systems.

The plant is the longitudinal short-period pair (alpha, q) with sin/cos replaced
by truncated Taylor series. Integral action on the angle-of-attack error gives the
tracking state e_int, and the adaptive weights follow a squared-error
e-modification law with an adaptive-loop-recovery term. `assemble_closed_loop`
turns a `CaseSpec` into a normalized `ClosedLoop` ready for relaxation or
simulation.
"""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass
from typing import TYPE_CHECKING, Dict, List, Literal, Mapping, Optional, Sequence, Tuple

import numpy as np
import scipy.linalg
from pydantic import BaseModel, Field, field_validator

from .aero import AeroCoeffs, AircraftParams
from .dynamics import (
    Cell,
    ClosedLoop,
    Normalization,
    PiecewiseSystem,
    SemialgebraicSet,
    VectorField,
    box,
    normalize,
)
from .poly import PolyEvaluator, Polynomial, VarRegistry, monomials_up_to, taylor_trig

if TYPE_CHECKING:
    from .cases import CaseSpec

logger = logging.getLogger(__name__)

PLANT_STATES = ("alpha", "q")
PLANT_INPUTS = ("de", "beta")
TRACKING_STATES = ("e_int", "alpha", "q")
ANGULAR_STATES = frozenset(TRACKING_STATES)
# power-basis fits in tau lose precision on short partitions beyond this
MAX_REFERENCE_DEGREE = 10


class ModelError(ValueError):
    """Raised when the aircraft or controller data cannot produce a valid model."""


class FitToleranceError(ModelError):
    """Raised when a reference fit misses its tolerance at the requested degree."""

    def __init__(self, achieved: float, tol: float, degree: int) -> None:
        self.achieved = achieved
        self.tol = tol
        self.degree = degree
        self.suggested_degree = degree + 2
        super().__init__(
            f"Reference fit error {achieved:.3e} exceeds {tol:.1e} at degree {degree}; "
            f"try degree {self.suggested_degree}"
        )


class MracConfig(BaseModel):
    """Controller data: LQR gain, reference model and adaptive-law gains."""

    K_1: List[float] = Field(default_factory=lambda: [-10.0, -10.8756, -6.0565])
    Gamma: List[float] = Field(
        default_factory=lambda: [0.0, 2000.0, 0.0], description="Diagonal learning rates"
    )
    k_e: float = Field(0.001, gt=0, description="e-modification gain")
    k_w: float = Field(12.0, gt=0, description="Adaptive-loop-recovery gain")
    R_lyap: List[float] = Field(
        default_factory=lambda: [0.1, 100.0, 100.0], description="Diagonal of the Lyapunov weight"
    )
    basis: Literal["identity"] = "identity"
    W0: List[float] = Field(default_factory=lambda: [0.0, 0.0, 0.0])
    B_r: List[float] = Field(default_factory=lambda: [-1.0, 0.0, 0.0])
    A_r: Optional[List[List[float]]] = Field(
        None, description="Reference matrix; derived as A - B K_1 when omitted"
    )
    alr_sign: Literal[1, -1] = Field(
        1, description="Sign of the k_w recovery term in the weight law"
    )

    @field_validator("K_1", "B_r", "W0")
    @classmethod
    def _three_entries(cls, value: List[float]) -> List[float]:
        if len(value) != 3:
            raise ValueError(f"expected 3 entries, got {len(value)}")
        return value

    @field_validator("Gamma")
    @classmethod
    def _nonnegative_rates(cls, value: List[float]) -> List[float]:
        if len(value) != 3 or any(g < 0 for g in value):
            raise ValueError("Gamma must be 3 non-negative diagonal entries")
        return value

    @field_validator("R_lyap")
    @classmethod
    def _positive_weights(cls, value: List[float]) -> List[float]:
        if len(value) != 3 or any(r <= 0 for r in value):
            raise ValueError("R_lyap must be 3 positive diagonal entries")
        return value

    @property
    def active(self) -> Tuple[int, ...]:
        return tuple(i for i, g in enumerate(self.Gamma) if g != 0.0)

    def weight_name(self, index: int) -> str:
        return f"W{index + 1}"


@dataclass(frozen=True)
class Linearization:
    """field = A (x - p) + B (u - p) + residual, exactly."""

    A: np.ndarray
    B: np.ndarray
    states: Tuple[str, ...]
    inputs: Tuple[str, ...]
    residual: Tuple[Polynomial, ...]


@dataclass(frozen=True)
class ReferenceModel:
    A: np.ndarray
    B: np.ndarray
    A_r: np.ndarray
    B_r: np.ndarray


def plant_registry() -> VarRegistry:
    return VarRegistry(PLANT_STATES + PLANT_INPUTS).freeze()


def build_short_period(
    params: AircraftParams,
    aero: AeroCoeffs,
    sin_order: int = 3,
    cos_order: int = 2,
) -> VectorField:
    """Short-period (alpha, q) dynamics with inputs (de, beta) and pitch attitude taken as zero."""
    missing = aero.missing()
    if missing:
        raise ModelError(f"Aerodynamic data is missing coefficient(s): {', '.join(missing)}")

    reg = plant_registry()
    mapping = {name: Polynomial.variable(reg, name) for name in ("alpha", "de", "beta")}
    C = {name: aero[name].compose(reg, mapping) for name in aero.polys}
    q = Polynomial.variable(reg, "q")
    sin_a = taylor_trig("sin", "alpha", sin_order, reg)
    cos_a = taylor_trig("cos", "alpha", cos_order, reg)

    p = params
    k_qa = p.q_bar * p.S * p.c_bar / (2.0 * p.m * p.V_T**2)
    k_a = p.q_bar * p.S / (p.m * p.V_T)
    k_thrust = p.T_thrust / (p.m * p.V_T)
    k_g = p.g / p.V_T
    k_qq = p.q_bar * p.S * p.c_bar / (2.0 * p.J_y * p.V_T)
    k_m = p.q_bar * p.S * p.c_bar / p.J_y

    alpha_dot = (
        (1.0 + k_qa * (C["Czq"] * cos_a - C["Cxq"] * sin_a)) * q
        + k_a * (C["Cz"] * cos_a - C["Cx"] * sin_a)
        - k_thrust * sin_a
        + k_g * cos_a
    )
    q_dot = k_qq * (p.c_bar * C["Cmq"] + p.Delta * C["Czq"]) * q + k_m * (
        C["Cm"] + (p.Delta / p.c_bar) * C["Cz"]
    )
    degree = max(alpha_dot.degree, q_dot.degree)
    logger.debug("Short-period field degree %d", degree)
    return VectorField(
        reg,
        (alpha_dot, q_dot),
        PLANT_STATES,
        {"sin_order": sin_order, "cos_order": cos_order, "degree": degree},
    )


def reduce_short_period(
    plant: VectorField,
    bounds: Mapping[str, Tuple[float, float]],
    degree: int,
    sideslip: Optional[Tuple[float, float]] = None,
    nodes: int = 9,
) -> VectorField:
    """Least-squares refit of the short-period field onto a low-degree basis.

    The field is sampled on a Chebyshev grid over `bounds` (alpha, q and de, in
    radians) after substituting beta = slope * alpha + offset, or beta = 0. The
    elevator stays affine and multiplies monomials of degree at most
    `degree - 2`, so a control law with bilinear weight terms keeps the closed
    loop within `degree`.
    """
    if degree < 2:
        raise ModelError(f"Plant refit degree must be at least 2, got {degree}")
    reg = plant.registry
    alpha = Polynomial.variable(reg, "alpha")
    slope, offset = sideslip if sideslip is not None else (0.0, 0.0)
    mapping = {
        "alpha": alpha,
        "q": Polynomial.variable(reg, "q"),
        "de": Polynomial.variable(reg, "de"),
        "beta": slope * alpha + offset,
    }
    comps = [comp.compose(reg, mapping) for comp in plant.components]

    names = ("alpha", "q", "de")
    de_index = reg.index("de")
    basis = [
        mono
        for mono in monomials_up_to([reg.index(n) for n in names], degree)
        if mono.exponent(de_index) == 0 or (mono.exponent(de_index) == 1 and mono.degree < degree)
    ]

    cheb = np.polynomial.chebyshev.chebpts2(nodes)
    axes = []
    for name in names:
        lo, hi = bounds[name]
        axes.append(0.5 * (hi + lo) + 0.5 * (hi - lo) * cheb)
    points = np.zeros((nodes ** len(names), len(reg)))
    for name, grid in zip(names, np.meshgrid(*axes, indexing="ij")):
        points[:, reg.index(name)] = grid.ravel()

    targets = PolyEvaluator(comps).evaluate(points)
    design = PolyEvaluator([Polynomial(reg, {mono: 1.0}) for mono in basis]).evaluate(points)
    norms = np.linalg.norm(design, axis=0)
    coef = np.linalg.lstsq(design / norms, targets, rcond=None)[0] / norms[:, None]
    deviation = np.max(np.abs(design @ coef - targets), axis=0)

    reduced = tuple(
        Polynomial(reg, dict(zip(basis, coef[:, k].tolist()))) for k in range(len(comps))
    )
    logger.info(
        "Plant refit to degree %d on %d samples; max deviation alpha' %.3g, q' %.3g",
        degree,
        points.shape[0],
        deviation[0],
        deviation[1],
    )
    metadata = dict(plant.metadata)
    metadata.update(
        {"degree": max(c.degree for c in reduced), "refit_deviation": tuple(deviation.tolist())}
    )
    return VectorField(reg, reduced, plant.states, metadata)


def linearize(
    field: VectorField,
    point: Optional[Mapping[str, float]] = None,
    time_var: str = "t",
) -> Linearization:
    """Jacobian split of a polynomial field; time enters the residual."""
    reg = field.registry
    point = dict(point or {})
    inputs = tuple(n for n in reg if n not in field.states and n != time_var)
    coords = np.array([point.get(n, 0.0) for n in reg])

    def jacobian(names: Sequence[str]) -> np.ndarray:
        return np.array(
            [[comp.partial(name).eval(coords) for name in names] for comp in field.components]
        ).reshape(len(field.components), len(names))

    A = jacobian(field.states)
    B = jacobian(inputs)
    residual = []
    for i, comp in enumerate(field.components):
        affine = Polynomial.zero(reg)
        for j, name in enumerate(field.states):
            affine = affine + A[i, j] * (Polynomial.variable(reg, name) - point.get(name, 0.0))
        for j, name in enumerate(inputs):
            affine = affine + B[i, j] * (Polynomial.variable(reg, name) - point.get(name, 0.0))
        residual.append(comp - affine)
    return Linearization(A, B, field.states, inputs, tuple(residual))


def tracking_field(plant: VectorField) -> VectorField:
    """Plant augmented with e_int' = alpha (zero command), over (e_int, alpha, q, de, beta)."""
    reg = VarRegistry(("e_int",) + PLANT_STATES + PLANT_INPUTS).freeze()
    mapping = {name: Polynomial.variable(reg, name) for name in plant.registry}
    comps = (Polynomial.variable(reg, "alpha"),) + tuple(
        comp.compose(reg, mapping) for comp in plant.components
    )
    return VectorField(reg, comps, TRACKING_STATES)


def lqr_reference(plant: VectorField, cfg: MracConfig) -> ReferenceModel:
    """(A, B) at the origin and the reference model A_r = A - B K_1."""
    lin = linearize(tracking_field(plant))
    A = lin.A
    B = lin.B[:, [lin.inputs.index("de")]]
    if cfg.A_r is not None:
        A_r = np.asarray(cfg.A_r, dtype=float)
        if A_r.shape != (3, 3):
            raise ModelError(f"A_r must be 3x3, got shape {A_r.shape}")
    else:
        A_r = A - B @ np.asarray(cfg.K_1, dtype=float).reshape(1, 3)
    B_r = np.asarray(cfg.B_r, dtype=float).reshape(3, 1)
    return ReferenceModel(A, B, A_r, B_r)


def _require_hurwitz(A_r: np.ndarray) -> None:
    eig = np.linalg.eigvals(A_r)
    if np.any(eig.real >= 0):
        listing = ", ".join(f"{z.real:+.4g}{z.imag:+.4g}j" for z in eig)
        raise ModelError(f"Reference matrix is not Hurwitz; eigenvalues: {listing}")


def solve_lyapunov(A_r: np.ndarray, R: np.ndarray) -> np.ndarray:
    """P with A_r^T P + P A_r + R = 0."""
    A_r = np.asarray(A_r, dtype=float)
    R = np.asarray(R, dtype=float)
    if R.ndim == 1:
        R = np.diag(R)
    _require_hurwitz(A_r)
    if not np.allclose(R, R.T):
        raise ModelError("Lyapunov weight R must be symmetric")
    try:
        np.linalg.cholesky(R)
    except np.linalg.LinAlgError as exc:
        raise ModelError("Lyapunov weight R must be positive definite") from exc
    P = scipy.linalg.solve_continuous_lyapunov(A_r.T, -R)
    P = 0.5 * (P + P.T)
    try:
        np.linalg.cholesky(P)
    except np.linalg.LinAlgError as exc:
        raise ModelError("Lyapunov solution is not positive definite") from exc
    return P


def build_adaptive_law(
    cfg: MracConfig,
    P: np.ndarray,
    B: np.ndarray,
    registry: VarRegistry,
    error: Sequence[Polynomial],
    basis_states: Sequence[str] = TRACKING_STATES,
) -> VectorField:
    """Weight dynamics Gamma (Phi s + sign k_w Phi_x Phi_x^T W - k_e s^2 W), s = e^T P B."""
    active = cfg.active
    if not active:
        raise ModelError("Adaptive law requested with an all-zero Gamma")
    PB = (np.asarray(P) @ np.asarray(B).reshape(-1, 1)).ravel()
    s = Polynomial.zero(registry)
    for e_i, pb_i in zip(error, PB):
        s = s + float(pb_i) * e_i
    s_sq = s * s

    phi = [Polynomial.variable(registry, name) for name in basis_states]
    phi_x = [[phi_i.partial(name) for name in basis_states] for phi_i in phi]
    weights = [
        Polynomial.variable(registry, cfg.weight_name(i))
        if i in active
        else Polynomial.constant(registry, cfg.W0[i])
        for i in range(len(phi))
    ]

    comps = []
    for i in active:
        recovery = Polynomial.zero(registry)
        for j in range(len(phi)):
            outer = Polynomial.zero(registry)
            for k in range(len(basis_states)):
                outer = outer + phi_x[i][k] * phi_x[j][k]
            if not outer.is_zero():
                recovery = recovery + outer * weights[j]
        comp = phi[i] * s + (cfg.alr_sign * cfg.k_w) * recovery - cfg.k_e * s_sq * weights[i]
        comps.append(cfg.Gamma[i] * comp)
    names = tuple(cfg.weight_name(i) for i in active)
    return VectorField(registry, tuple(comps), names, {"alr_sign": cfg.alr_sign})


def reference_response(
    A_r: np.ndarray,
    B_r: np.ndarray,
    r: float,
    times: np.ndarray,
    x0: Optional[np.ndarray] = None,
) -> np.ndarray:
    """Exact response of x' = A_r x + B_r r, sampled at `times` (shape (len(times), n))."""
    n = A_r.shape[0]
    M = np.zeros((n + 1, n + 1))
    M[:n, :n] = A_r
    M[:n, n] = np.asarray(B_r, dtype=float).ravel() * r
    start = np.zeros(n + 1)
    start[:n] = 0.0 if x0 is None else np.asarray(x0, dtype=float)
    start[n] = 1.0
    return np.array([(scipy.linalg.expm(M * t) @ start)[:n] for t in np.asarray(times, dtype=float)])


def fit_reference_trajectory(
    A_r: np.ndarray,
    B_r: np.ndarray,
    r: float,
    partitions: Sequence[Tuple[float, float]],
    degree: int,
    *,
    registry: VarRegistry,
    horizon: float,
    time_var: str = "t",
    scales: Optional[Sequence[float]] = None,
    tol: float = 1e-3,
    x0: Optional[np.ndarray] = None,
    samples: int = 401,
) -> List[Tuple[Polynomial, ...]]:
    """Per-partition polynomial fits, in normalized time, of the reference-model response."""
    A_r = np.asarray(A_r, dtype=float)
    _require_hurwitz(A_r)
    edges = [partitions[0][0]] + [b for _, b in partitions]
    if abs(edges[0]) > 1e-12 or abs(edges[-1] - horizon) > 1e-9 * max(1.0, horizon) or any(
        partitions[k][1] != partitions[k + 1][0] for k in range(len(partitions) - 1)
    ):
        raise ModelError(f"Partitions {list(partitions)} do not tile [0, {horizon}]")
    n = A_r.shape[0]
    weight = np.ones(n) if scales is None else np.asarray(scales, dtype=float)

    pieces: List[Tuple[Polynomial, ...]] = []
    worst = 0.0
    previous_end: Optional[np.ndarray] = None
    for start, end in partitions:
        times = np.linspace(start, end, samples)
        exact = reference_response(A_r, B_r, r, times, x0)
        tau = times / horizon
        polys = []
        fitted = np.empty_like(exact)
        for k in range(n):
            if np.allclose(exact[:, k], 0.0, atol=1e-15):
                coef = np.zeros(1)
            else:
                series = np.polynomial.Chebyshev.fit(tau, exact[:, k], degree)
                coef = series.convert(kind=np.polynomial.Polynomial).coef
            fitted[:, k] = np.polynomial.polynomial.polyval(tau, coef)
            tau_poly = Polynomial.variable(registry, time_var)
            poly = Polynomial.zero(registry)
            for power, c in enumerate(coef):
                if c:
                    poly = poly + float(c) * tau_poly**power
            polys.append(poly)
        worst = max(worst, float(np.max(np.abs((fitted - exact) * weight))))
        if previous_end is not None:
            worst = max(worst, float(np.max(np.abs((fitted[0] - previous_end) * weight))))
        previous_end = fitted[-1]
        pieces.append(tuple(polys))
    if worst > tol:
        raise FitToleranceError(worst, tol, degree)
    logger.debug("Reference fit over %d partition(s), max error %.2e", len(partitions), worst)
    return pieces


def _to_radians(case: "CaseSpec", name: str, value: float) -> float:
    if case.angle_units == "deg" and name in ANGULAR_STATES:
        return math.radians(value)
    return value


def _scales(
    case: "CaseSpec",
    names: Sequence[str],
    state_bounds: Mapping[str, Tuple[float, float]],
) -> List[float]:
    """Diagonal of D for radian states: explicit per-unit scales, else 1 / box half-width."""
    out = []
    for name in names:
        if case.scales and name in case.scales:
            scale = case.scales[name]
            if case.angle_units == "deg" and name in ANGULAR_STATES:
                scale *= 180.0 / math.pi
        else:
            lo, hi = state_bounds[name]
            scale = 1.0 / max(abs(lo), abs(hi))
        out.append(scale)
    return out


def _cell_layout(case: "CaseSpec") -> List[Tuple[Tuple[float, float], str, float]]:
    """(time window, alpha region, disturbance) for every cell, time-major."""
    if case.time_cells:
        edges = list(case.time_cells)
        windows = [(edges[k], edges[k + 1]) for k in range(len(edges) - 1)]
    else:
        windows = [(0.0, case.horizon)]
    if case.disturbance is not None:
        regions = [("inside", case.disturbance.amplitude), ("below", 0.0), ("above", 0.0)]
    else:
        regions = [("all", 0.0)]
    return [(window, region, d) for window, (region, d) in itertools.product(windows, regions)]


def _region(
    base: SemialgebraicSet,
    case: "CaseSpec",
    t: Polynomial,
    alpha: Polynomial,
    window: Tuple[float, float],
    region: str,
) -> SemialgebraicSet:
    extra = []
    if case.time_cells:
        start, end = window
        extra.append((t - start) * (end - t))
    if case.disturbance is not None:
        w = case.disturbance.half_width
        if region == "inside":
            extra.append(w * w - alpha * alpha)
        elif region == "below":
            extra.append(-w - alpha)
        else:
            extra.append(alpha - w)
    return base.with_constraints(*extra)


def assemble_closed_loop(
    case: "CaseSpec",
    params: AircraftParams,
    aero: AeroCoeffs,
    cfg: Optional[MracConfig] = None,
) -> ClosedLoop:
    """Normalized piecewise closed loop for one case; `case.mrac_enabled` picks the variant."""
    cfg = cfg or case.mrac
    if case.mrac_enabled and not cfg.active:
        raise ModelError("MRAC enabled with an all-zero Gamma")
    plant = build_short_period(params, aero, case.sin_order, case.cos_order)
    if case.plant_degree is not None:
        limit = case.elevator_limit
        if case.angle_units == "deg":
            limit = math.radians(limit)
        fit_box = {
            name: (_to_radians(case, name, lo), _to_radians(case, name, hi))
            for name, (lo, hi) in case.state_box.items()
            if name in PLANT_STATES
        }
        fit_box["de"] = (-limit, limit)
        sideslip = (
            (case.sideslip.slope, case.sideslip.offset) if case.sideslip is not None else None
        )
        plant = reduce_short_period(plant, fit_box, case.plant_degree, sideslip)
    ref = lqr_reference(plant, cfg)
    active = cfg.active if case.mrac_enabled else ()
    states = TRACKING_STATES + tuple(cfg.weight_name(i) for i in active)

    reg = VarRegistry(("t",) + states).freeze()
    t = Polynomial.variable(reg, "t")
    x = [Polynomial.variable(reg, name) for name in TRACKING_STATES]
    alpha, q = x[1], x[2]
    weights = [
        Polynomial.variable(reg, cfg.weight_name(i)) if i in active else Polynomial.constant(reg, w0)
        for i, w0 in enumerate(cfg.W0)
    ]

    # boxes, in radians for the tracking states
    state_bounds: Dict[str, Tuple[float, float]] = {
        name: (_to_radians(case, name, lo), _to_radians(case, name, hi))
        for name, (lo, hi) in case.state_box.items()
    }
    initial_bounds: Dict[str, Tuple[float, float]] = {"e_int": (-case.epsilon, case.epsilon)}
    initial_bounds.update(
        {
            name: (_to_radians(case, name, lo), _to_radians(case, name, hi))
            for name, (lo, hi) in case.initial_box.items()
        }
    )
    for i in active:
        name = cfg.weight_name(i)
        state_bounds.setdefault(name, (-30.0, 30.0))
        initial_bounds[name] = (cfg.W0[i] - case.epsilon, cfg.W0[i] + case.epsilon)
    missing = [name for name in states if name not in state_bounds or name not in initial_bounds]
    if missing:
        raise ModelError(f"Case {case.name} has no box for state(s): {', '.join(missing)}")
    X = box(reg, {name: state_bounds[name] for name in states})
    X0 = box(reg, {name: initial_bounds[name] for name in states})
    scales = _scales(case, states, state_bounds)

    r = _to_radians(case, "alpha", case.command)
    h_T = -((r - alpha) ** 2)
    X_T = X
    if case.enforce_terminal_set:
        lo, hi = state_bounds["alpha"]
        half = math.sqrt(case.terminal_threshold)
        if r - half < lo or r + half > hi:
            raise ModelError("Terminal set X_T is not contained in X")
        X_T = X.with_constraints(case.terminal_threshold + h_T)

    layout = _cell_layout(case)
    windows = sorted({window for window, _, _ in layout})
    if r == 0.0 or not active:
        references = {window: (Polynomial.zero(reg),) * 3 for window in windows}
    else:
        degree = case.reference_degree
        while True:
            try:
                fitted = fit_reference_trajectory(
                    ref.A_r,
                    ref.B_r,
                    r,
                    windows,
                    degree,
                    registry=reg,
                    horizon=case.horizon,
                    scales=scales[:3],
                )
                break
            except FitToleranceError as exc:
                if exc.suggested_degree > MAX_REFERENCE_DEGREE:
                    raise
                logger.warning("%s; retrying", exc)
                degree = exc.suggested_degree
            except ModelError as exc:
                raise ModelError(f"Cannot resolve the reference trajectory: {exc}") from exc
        # fits are in tau = t / T while the raw system runs in seconds
        references = {
            window: tuple(p.substitute_affine("t", 1.0 / case.horizon, 0.0) for p in piece)
            for window, piece in zip(windows, fitted)
        }
    P = solve_lyapunov(ref.A_r, np.asarray(cfg.R_lyap)) if active else None

    beta = (
        case.sideslip.slope * alpha + case.sideslip.offset
        if case.sideslip is not None
        else Polynomial.zero(reg)
    )
    u = Polynomial.zero(reg)
    for gain, x_i in zip(cfg.K_1, x):
        u = u - gain * x_i
    if case.mrac_enabled:
        for w_i, phi_i in zip(weights, x):
            u = u - w_i * phi_i

    cells = []
    for window, region, d in layout:
        mapping = {"alpha": alpha, "q": q, "de": case.Lambda * (u + d), "beta": beta}
        comps = [alpha - r] + [comp.compose(reg, mapping) for comp in plant.components]
        if active:
            error = [x_i - xr_i for x_i, xr_i in zip(x, references[window])]
            comps.extend(build_adaptive_law(cfg, P, ref.B, reg, error).components)
        field_ = VectorField(reg, tuple(comps), states, {"cell": len(cells), "disturbance": d})
        cells.append(Cell(_region(X, case, t, alpha, window, region), field_))

    raw = PiecewiseSystem(
        registry=reg,
        cells=tuple(cells),
        global_set=X,
        initial_set=X0,
        terminal_set=X_T,
        horizon=case.horizon,
    )
    nm = Normalization(states, tuple(scales), case.horizon)
    system = normalize(raw, nm)
    variant = "lqr+mrac" if case.mrac_enabled else "lqr"
    logger.info(
        "Assembled %s (%s): %d cell(s), %d state(s), field degree %d",
        case.name,
        variant,
        len(cells),
        len(states),
        system.max_field_degree,
    )
    return ClosedLoop(
        name=case.name,
        variant=variant,
        system=system,
        raw=raw,
        terminal_cost=h_T.substitute_affine("alpha", 1.0 / nm.scales[1], 0.0),
        running_cost=Polynomial.zero(reg),
        threshold=case.terminal_threshold,
        sweep_vars=tuple(case.sweep_vars),
        output_var="alpha",
        command_final=r,
    )


def closed_loop_split(system: PiecewiseSystem) -> List[Linearization]:
    """Per-cell linear/residual split of a closed-loop field at the origin."""
    return [linearize(cell.field, time_var=system.time_var) for cell in system.cells]
