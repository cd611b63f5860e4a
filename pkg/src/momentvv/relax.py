# Copyright 2025 Nic Cravino. All rights reserved.
# SPDX-License-Identifier: Apache-2.0

"""Order-d moment relaxation of the occupation-measure problem.

Decision variables are the truncated moment vectors of the initial measure,
the terminal measure and one occupation measure per cell. Constraints are the
mass normalization, the weak-form Liouville equation tested against monomials,
and positive semidefiniteness of every moment and localizing matrix.

Boundary measures carry moments in the states only: time is pinned by
substitution (0 for the initial measure, the horizon for the terminal one).
Occupation measures carry moments in (t, x) with the localizing constraint
t (T - t) >= 0.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Dict, List, Literal, Mapping, Optional, Sequence, Tuple

import numpy as np

from .dynamics import PiecewiseSystem, SemialgebraicSet
from .poly import Monomial, Polynomial, monomials_up_to

if TYPE_CHECKING:
    from .sdp import SolveResult

logger = logging.getLogger(__name__)

MeasureKind = Literal["initial", "terminal", "occupation"]
TestFamily = Literal["fitting", "graded"]


class RelaxationOrderError(ValueError):
    """Raised when the requested order cannot index the problem data."""

    def __init__(self, order: int, required: int) -> None:
        self.order = order
        self.required = required
        super().__init__(f"Relaxation order {order} is too small; minimum order is {required}")


class DegreeOverflowError(ValueError):
    """Raised when a constraint needs a moment beyond the indexed degree."""


class SolveStatusError(RuntimeError):
    """Raised when a solve ends infeasible, unbounded or out of iterations."""

    def __init__(self, status: str, diagnostics: str) -> None:
        self.status = status
        self.diagnostics = diagnostics
        super().__init__(f"Relaxation solve ended with status {status!r}: {diagnostics}")


@dataclass(frozen=True, eq=False)
class MeasureVar:
    name: str
    kind: MeasureKind
    support: SemialgebraicSet
    variables: Tuple[int, ...]
    pinned_time: Optional[float] = None
    cell: Optional[int] = None


@dataclass(eq=False)
class MomentIndex:
    """Graded-lex moment monomials per measure, laid out back to back in y."""

    measures: Tuple[MeasureVar, ...]
    degree: int
    monomials: Tuple[Tuple[Monomial, ...], ...] = field(init=False)
    offsets: Tuple[int, ...] = field(init=False)
    size: int = field(init=False)
    _lookup: Tuple[Dict[Monomial, int], ...] = field(init=False, repr=False)

    def __post_init__(self) -> None:
        monomials, offsets, lookup = [], [], []
        offset = 0
        for measure in self.measures:
            monos = tuple(monomials_up_to(measure.variables, self.degree))
            monomials.append(monos)
            offsets.append(offset)
            lookup.append({mono: offset + k for k, mono in enumerate(monos)})
            offset += len(monos)
        self.monomials = tuple(monomials)
        self.offsets = tuple(offsets)
        self._lookup = tuple(lookup)
        self.size = offset

    def position(self, name: str) -> int:
        for k, measure in enumerate(self.measures):
            if measure.name == name:
                return k
        raise KeyError(f"Unknown measure {name!r}")

    def index(self, measure: int, mono: Monomial) -> int:
        try:
            return self._lookup[measure][mono]
        except KeyError:
            raise DegreeOverflowError(
                f"Moment {mono.powers} of {self.measures[measure].name} is beyond degree {self.degree}"
            ) from None

    def count(self, measure: int) -> int:
        return len(self.monomials[measure])

    def vector(self, moments: Mapping[str, Mapping[Monomial, float]]) -> np.ndarray:
        """Stack per-measure moment maps into a y vector (missing moments are zero)."""
        y = np.zeros(self.size)
        for k, measure in enumerate(self.measures):
            values = moments.get(measure.name, {})
            for mono, value in values.items():
                if mono in self._lookup[k]:
                    y[self._lookup[k][mono]] = value
        return y


@dataclass(frozen=True)
class LinearRow:
    coeffs: Mapping[int, float]
    rhs: float = 0.0
    label: str = ""


@dataclass(frozen=True, eq=False)
class MatrixDescriptor:
    """Symmetric matrix whose (i, j) entry is sum of vals * y[vars] over the upper triangle."""

    measure: str
    label: str
    basis: Tuple[Monomial, ...]
    rows: np.ndarray
    cols: np.ndarray
    variables: np.ndarray
    values: np.ndarray

    @property
    def size(self) -> int:
        return len(self.basis)

    def evaluate(self, y: np.ndarray) -> np.ndarray:
        n = self.size
        out = np.zeros((n, n))
        np.add.at(out, (self.rows, self.cols), self.values * np.asarray(y)[self.variables])
        off = self.rows != self.cols
        np.add.at(out, (self.cols[off], self.rows[off]), self.values[off] * np.asarray(y)[self.variables[off]])
        return out


@dataclass(eq=False)
class MomentLmiProblem:
    index: MomentIndex
    order: int
    objective: np.ndarray
    equalities: List[LinearRow]
    psd_blocks: List[MatrixDescriptor]
    test_monomials: List[Monomial]
    skipped: List[str] = field(default_factory=list)

    @property
    def size(self) -> int:
        return self.index.size

    def equality_system(self) -> Tuple[np.ndarray, np.ndarray]:
        A = np.zeros((len(self.equalities), self.size))
        b = np.zeros(len(self.equalities))
        for r, row in enumerate(self.equalities):
            for var, coeff in row.coeffs.items():
                A[r, var] += coeff
            b[r] = row.rhs
        return A, b

    def residuals(self, y: np.ndarray) -> Tuple[np.ndarray, List[float]]:
        """Equality residuals A y - b and the minimum eigenvalue of every block."""
        A, b = self.equality_system()
        eigs = [float(np.linalg.eigvalsh(block.evaluate(y))[0]) for block in self.psd_blocks]
        return A @ y - b, eigs


@dataclass(frozen=True)
class BoundEntry:
    order: int
    bound: float
    status: str
    wall_time: float
    gap: float = float("nan")
    iterations: int = 0

    @property
    def inexact(self) -> bool:
        return self.status != "optimal"


@dataclass
class BoundSequence:
    """Bounds B_d for d = 1..d_max, in order."""

    entries: List[BoundEntry] = field(default_factory=list)

    def add(self, entry: BoundEntry) -> None:
        self.entries.append(entry)
        self.entries.sort(key=lambda e: e.order)

    @property
    def final(self) -> Optional[BoundEntry]:
        return self.entries[-1] if self.entries else None

    def is_monotone(self, tol: float = 1e-6) -> bool:
        solved = [e.bound for e in self.entries if e.status == "optimal"]
        return all(b <= a + tol for a, b in zip(solved, solved[1:]))


def _pin_time(poly: Polynomial, measure: MeasureVar, time_index: int) -> Polynomial:
    if measure.pinned_time is None:
        return poly
    return poly.substitute(time_index, measure.pinned_time)


def _measures(system: PiecewiseSystem) -> Tuple[MeasureVar, ...]:
    t_index = system.time_index
    states = system.state_indices
    t = Polynomial.variable(system.registry, system.time_var)
    window = t * (system.horizon - t)
    out = [
        MeasureVar("mu0", "initial", system.initial_set, states, pinned_time=0.0),
        MeasureVar("muT", "terminal", system.terminal_set, states, pinned_time=system.horizon),
    ]
    occupation_vars = tuple(sorted((t_index,) + states))
    for j, cell in enumerate(system.cells):
        out.append(
            MeasureVar(
                f"mu{j + 1}",
                "occupation",
                cell.region.with_constraints(window),
                occupation_vars,
                cell=j,
            )
        )
    return tuple(out)


def minimum_order(
    system: PiecewiseSystem, terminal_cost: Polynomial, running_cost: Optional[Polynomial] = None
) -> int:
    degrees = [terminal_cost.degree, system.initial_set.max_degree, system.terminal_set.max_degree]
    if running_cost is not None:
        degrees.append(running_cost.degree)
    degrees.extend(cell.region.max_degree for cell in system.cells)
    degrees.append(2)  # t (T - t) on every occupation measure
    return max(1, math.ceil(max(degrees) / 2))


def liouville_row(v: Monomial, system: PiecewiseSystem, index: MomentIndex) -> LinearRow:
    """Weak Liouville identity for test function v:
    int v dmu_T - int v dmu_0 - sum_j int (dv/dt + grad v . f_j) dmu_j = 0.
    """
    registry = system.registry
    t_index = system.time_index
    poly = Polynomial(registry, {v: 1.0})
    coeffs: Dict[int, float] = {}

    def put(measure: int, p: Polynomial, sign: float) -> None:
        for mono, c in p.terms.items():
            k = index.index(measure, mono)
            coeffs[k] = coeffs.get(k, 0.0) + sign * c

    for k, measure in enumerate(index.measures):
        if measure.kind == "terminal":
            put(k, poly.substitute(t_index, system.horizon), 1.0)
        elif measure.kind == "initial":
            put(k, poly.substitute(t_index, 0.0), -1.0)
        else:
            field_ = system.cells[measure.cell].field  # type: ignore[index]
            integrand = poly.partial(t_index)
            for state, comp in zip(field_.states, field_.components):
                dv = poly.partial(state)
                if not dv.is_zero():
                    integrand = integrand + dv * comp
            put(k, integrand, -1.0)
    return LinearRow({k: c for k, c in coeffs.items() if c != 0.0}, 0.0, f"liouville {v.powers}")


def _fits(v: Monomial, system: PiecewiseSystem, degree: int) -> bool:
    """Whether every Liouville integrand of v stays within the indexed degree."""
    if v.degree == 0:
        return True
    t_index = system.time_index
    for cell in system.cells:
        for var, _ in v.powers:
            if var == t_index:
                need = v.degree - 1
            else:
                comp = cell.field.component(system.registry.name(var))
                need = v.degree - 1 + comp.degree
            if need > degree:
                return False
    return True


def _matrix(
    index: MomentIndex,
    measure: int,
    basis: Sequence[Monomial],
    weight: Polynomial,
    label: str,
) -> MatrixDescriptor:
    rows, cols, variables, values = [], [], [], []
    weight_terms = weight.items()
    for i, u in enumerate(basis):
        for j in range(i, len(basis)):
            uv = u * basis[j]
            for mono, c in weight_terms:
                rows.append(i)
                cols.append(j)
                variables.append(index.index(measure, uv * mono))
                values.append(c)
    return MatrixDescriptor(
        measure=index.measures[measure].name,
        label=label,
        basis=tuple(basis),
        rows=np.asarray(rows, dtype=np.intp),
        cols=np.asarray(cols, dtype=np.intp),
        variables=np.asarray(variables, dtype=np.intp),
        values=np.asarray(values, dtype=float),
    )


def moment_matrix(index: MomentIndex, measure: int, d: int) -> MatrixDescriptor:
    basis = monomials_up_to(index.measures[measure].variables, d)
    registry = index.measures[measure].support.registry
    return _matrix(index, measure, basis, Polynomial.constant(registry, 1.0), "moment")


def localizing_matrix(
    index: MomentIndex, measure: int, p: Polynomial, d: int
) -> Optional[MatrixDescriptor]:
    """Localizing matrix of p, or None (with a warning) when p's degree exceeds 2d."""
    if p.degree > 2 * d:
        logger.warning(
            "Skipping localizing constraint of degree %d on %s at order %d",
            p.degree,
            index.measures[measure].name,
            d,
        )
        return None
    basis = monomials_up_to(index.measures[measure].variables, d - math.ceil(p.degree / 2))
    return _matrix(index, measure, basis, p, f"localizing deg {p.degree}")


def build(
    system: PiecewiseSystem,
    terminal_cost: Polynomial,
    running_cost: Optional[Polynomial],
    d: int,
    test_family: TestFamily = "fitting",
) -> MomentLmiProblem:
    """Assemble the order-d moment LMI for min int h_T dmu_T + sum_j int h dmu_j."""
    required = minimum_order(system, terminal_cost, running_cost)
    if d < required:
        raise RelaxationOrderError(d, required)
    degree = 2 * d
    t_index = system.time_index
    index = MomentIndex(_measures(system), degree)

    objective = np.zeros(index.size)
    for k, measure in enumerate(index.measures):
        if measure.kind == "terminal":
            cost = terminal_cost.substitute(t_index, system.horizon)
        elif measure.kind == "occupation" and running_cost is not None:
            cost = running_cost
        else:
            continue
        for mono, c in cost.terms.items():
            objective[index.index(k, mono)] += c

    equalities = [LinearRow({index.index(0, Monomial()): 1.0}, 1.0, "mass")]
    tests: List[Monomial] = []
    all_vars = tuple(sorted((t_index,) + system.state_indices))
    max_field = system.max_field_degree
    for v in monomials_up_to(all_vars, degree):
        if test_family == "graded":
            if v.degree and v.degree > degree - max_field:
                continue
        elif not _fits(v, system, degree):
            continue
        equalities.append(liouville_row(v, system, index))
        tests.append(v)

    blocks: List[MatrixDescriptor] = []
    skipped: List[str] = []
    for k, measure in enumerate(index.measures):
        blocks.append(moment_matrix(index, k, d))
        for g in measure.support.constraints:
            g = _pin_time(g, measure, t_index)
            if g.degree == 0:
                if g.coefficient(Monomial()) < 0:
                    blocks.append(
                        _matrix(index, k, [Monomial()], g, "localizing deg 0")
                    )
                continue
            block = localizing_matrix(index, k, g, d)
            if block is None:
                skipped.append(f"{measure.name}: constraint of degree {g.degree}")
            else:
                blocks.append(block)

    logger.info(
        "Order %d relaxation: %d moments, %d equalities (%d test functions), %d PSD blocks",
        d,
        index.size,
        len(equalities),
        len(tests),
        len(blocks),
    )
    return MomentLmiProblem(index, d, objective, equalities, blocks, tests, skipped)


def extract_bound(problem: MomentLmiProblem, result: "SolveResult") -> float:
    """B_d = -J_d for optimal or inaccurate solves."""
    if result.status in ("optimal", "inaccurate"):
        return -float(result.objective)
    raise SolveStatusError(
        result.status,
        f"order {problem.order}, primal infeasibility {result.primal_infeasibility:.2e}, "
        f"dual infeasibility {result.dual_infeasibility:.2e}, {result.iterations} iterations",
    )


def heuristic_initial_condition(problem: MomentLmiProblem, y: np.ndarray) -> np.ndarray:
    """First-order moments of the initial measure divided by its mass (normalized units)."""
    measure = problem.index.position("mu0")
    mass = y[problem.index.index(measure, Monomial())]
    firsts = [
        y[problem.index.index(measure, Monomial.var(var))]
        for var in problem.index.measures[measure].variables
    ]
    return np.asarray(firsts) / (mass if mass else 1.0)


def moment_counts(problem: MomentLmiProblem) -> Dict[str, int]:
    return {m.name: problem.index.count(k) for k, m in enumerate(problem.index.measures)}
