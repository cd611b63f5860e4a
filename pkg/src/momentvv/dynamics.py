# Copyright 2025 Nic Cravino. All rights reserved.
# SPDX-License-Identifier: Apache-2.0

"""Semialgebraic sets, polynomial vector fields and piecewise systems.

A `PiecewiseSystem` is the object every other module works from: the relaxation
builder reads its cells and sets, the simulator dispatches on them, and the
F-16 assembly produces one. Everything here is immutable once built.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Dict, Mapping, Optional, Sequence, Tuple

import numpy as np

from .poly import DimensionError, Polynomial, RegistryMismatchError, VarRegistry

CONTAINMENT_TOL = 1e-9


class PartitionExitError(RuntimeError):
    """Raised when a point lies in none of the cells of a piecewise system."""


@dataclass(frozen=True, eq=False)
class SemialgebraicSet:
    """{x : p_k(x) >= 0 for every k}; `bounds` remembers box extents when known."""

    registry: VarRegistry
    constraints: Tuple[Polynomial, ...] = ()
    bounds: Tuple[Tuple[str, float, float], ...] = ()

    def __post_init__(self) -> None:
        for constraint in self.constraints:
            if constraint.registry is not self.registry:
                raise RegistryMismatchError("Set constraint is not over the set's registry")

    @property
    def max_degree(self) -> int:
        return max((g.degree for g in self.constraints), default=0)

    def bound(self, name: str) -> Optional[Tuple[float, float]]:
        for var, lo, hi in self.bounds:
            if var == name:
                return (lo, hi)
        return None

    def contains(self, point: Sequence[float], tol: float = CONTAINMENT_TOL) -> bool:
        return all(g.eval(point) >= -tol for g in self.constraints)

    def with_constraints(self, *extra: Polynomial) -> "SemialgebraicSet":
        return SemialgebraicSet(self.registry, self.constraints + tuple(extra), self.bounds)

    def intersect(self, other: "SemialgebraicSet") -> "SemialgebraicSet":
        if other.registry is not self.registry:
            raise RegistryMismatchError("Cannot intersect sets over different registries")
        merged: Dict[str, Tuple[float, float]] = {name: (lo, hi) for name, lo, hi in self.bounds}
        for name, lo, hi in other.bounds:
            if name in merged:
                old_lo, old_hi = merged[name]
                merged[name] = (max(lo, old_lo), min(hi, old_hi))
            else:
                merged[name] = (lo, hi)
        return SemialgebraicSet(
            self.registry,
            self.constraints + other.constraints,
            tuple((name, lo, hi) for name, (lo, hi) in merged.items()),
        )


def box(registry: VarRegistry, bounds: Mapping[str, Tuple[float, float]]) -> SemialgebraicSet:
    """One quadratic constraint (hi - x)(x - lo) >= 0 per bounded coordinate."""
    constraints = []
    for name, (lo, hi) in bounds.items():
        if hi < lo:
            raise ValueError(f"Empty interval for {name}: [{lo}, {hi}]")
        x = Polynomial.variable(registry, name)
        constraints.append((hi - x) * (x - lo))
    return SemialgebraicSet(
        registry,
        tuple(constraints),
        tuple((name, float(lo), float(hi)) for name, (lo, hi) in bounds.items()),
    )


@dataclass(frozen=True, eq=False)
class VectorField:
    """Polynomial right-hand side driving `states`; other registry variables are inputs or time."""

    registry: VarRegistry
    components: Tuple[Polynomial, ...]
    states: Tuple[str, ...]
    metadata: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if len(self.components) != len(self.states):
            raise DimensionError(
                f"Vector field has {len(self.components)} components for {len(self.states)} states"
            )
        for name in self.states:
            self.registry.index(name)
        for comp in self.components:
            if comp.registry is not self.registry:
                raise RegistryMismatchError("Vector field component is not over the field's registry")

    @classmethod
    def over(
        cls,
        registry: VarRegistry,
        components: Sequence[Polynomial],
        time_var: str = "t",
        **metadata: Any,
    ) -> "VectorField":
        """Field whose states are every registry variable except the time variable."""
        states = tuple(name for name in registry if name != time_var)
        return cls(registry, tuple(components), states, dict(metadata))

    @property
    def degree(self) -> int:
        return max((c.degree for c in self.components), default=0)

    def component(self, state: str) -> Polynomial:
        return self.components[self.states.index(state)]


@dataclass(frozen=True, eq=False)
class Cell:
    region: SemialgebraicSet
    field: VectorField


@dataclass(frozen=True)
class Normalization:
    """z = D x with D = diag(scales), tau = t / horizon."""

    states: Tuple[str, ...]
    scales: Tuple[float, ...]
    horizon: float

    def __post_init__(self) -> None:
        if len(self.states) != len(self.scales):
            raise DimensionError(f"{len(self.scales)} scales given for {len(self.states)} states")
        if any(s <= 0 for s in self.scales):
            raise ValueError(f"Normalization scales must be strictly positive, got {self.scales}")
        if self.horizon <= 0:
            raise ValueError(f"Horizon must be positive, got {self.horizon}")

    @classmethod
    def from_box_halfwidths(
        cls, region: SemialgebraicSet, states: Sequence[str], horizon: float
    ) -> "Normalization":
        scales = []
        for name in states:
            extent = region.bound(name)
            if extent is None:
                raise ValueError(f"No box bound recorded for state {name!r}")
            scales.append(1.0 / max(abs(extent[0]), abs(extent[1])))
        return cls(tuple(states), tuple(scales), float(horizon))

    def normalize_state(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(x, dtype=float) * np.asarray(self.scales)

    def denormalize_state(self, z: np.ndarray) -> np.ndarray:
        return np.asarray(z, dtype=float) / np.asarray(self.scales)


@dataclass(frozen=True, eq=False)
class PiecewiseSystem:
    """Cells (X_j, f_j) plus the global, initial and terminal sets over one registry."""

    registry: VarRegistry
    cells: Tuple[Cell, ...]
    global_set: SemialgebraicSet
    initial_set: SemialgebraicSet
    terminal_set: SemialgebraicSet
    horizon: float
    time_var: str = "t"
    normalization: Optional[Normalization] = None

    def __post_init__(self) -> None:
        if not self.cells:
            raise ValueError("A piecewise system needs at least one cell")
        if self.horizon <= 0:
            raise ValueError(f"Horizon must be positive, got {self.horizon}")
        expected = tuple(name for name in self.registry if name != self.time_var)
        for cell in self.cells:
            if cell.region.registry is not self.registry or cell.field.registry is not self.registry:
                raise RegistryMismatchError("Cell is not over the system registry")
            if cell.field.states != expected:
                raise DimensionError(
                    f"Cell field drives {cell.field.states}, system states are {expected}"
                )
        for region in (self.global_set, self.initial_set, self.terminal_set):
            if region.registry is not self.registry:
                raise RegistryMismatchError("System set is not over the system registry")

    @property
    def states(self) -> Tuple[str, ...]:
        return self.cells[0].field.states

    @property
    def time_index(self) -> int:
        return self.registry.index(self.time_var)

    @property
    def state_indices(self) -> Tuple[int, ...]:
        return tuple(self.registry.index(name) for name in self.states)

    @property
    def max_field_degree(self) -> int:
        return max(cell.field.degree for cell in self.cells)

    def point(self, t: float, x: Sequence[float]) -> np.ndarray:
        """Registry-ordered coordinates of (t, x)."""
        x = np.asarray(x, dtype=float).ravel()
        if x.shape[0] != len(self.states):
            raise DimensionError(f"State has {x.shape[0]} entries, system has {len(self.states)}")
        out = np.empty(len(self.registry))
        out[self.time_index] = t
        out[list(self.state_indices)] = x
        return out

    def points(self, times, X: np.ndarray) -> np.ndarray:
        """Registry-ordered rows for a batch of states at one time or at per-row times."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != len(self.states):
            raise DimensionError(f"States have {X.shape[1]} entries, system has {len(self.states)}")
        out = np.empty((X.shape[0], len(self.registry)))
        out[:, self.time_index] = times
        out[:, list(self.state_indices)] = X
        return out


def normalize(system: PiecewiseSystem, nm: Normalization) -> PiecewiseSystem:
    """Rewrite the system in z = D x and tau = t / T, so the horizon becomes 1."""
    if tuple(nm.states) != system.states:
        raise DimensionError(f"Normalization covers {nm.states}, system states are {system.states}")
    time_var = system.time_var

    def rescale(poly: Polynomial) -> Polynomial:
        for name, scale in zip(nm.states, nm.scales):
            poly = poly.substitute_affine(name, 1.0 / scale, 0.0)
        return poly.substitute_affine(time_var, nm.horizon, 0.0)

    def rescale_set(region: SemialgebraicSet) -> SemialgebraicSet:
        scale_of = dict(zip(nm.states, nm.scales))
        bounds = []
        for name, lo, hi in region.bounds:
            if name in scale_of:
                bounds.append((name, lo * scale_of[name], hi * scale_of[name]))
            elif name == time_var:
                bounds.append((name, lo / nm.horizon, hi / nm.horizon))
            else:
                bounds.append((name, lo, hi))
        return SemialgebraicSet(
            region.registry, tuple(rescale(g) for g in region.constraints), tuple(bounds)
        )

    cells = []
    for cell in system.cells:
        components = tuple(
            rescale(comp) * (nm.horizon * scale)
            for comp, scale in zip(cell.field.components, nm.scales)
        )
        field_ = VectorField(
            system.registry, components, cell.field.states, dict(cell.field.metadata)
        )
        cells.append(Cell(rescale_set(cell.region), field_))

    return PiecewiseSystem(
        registry=system.registry,
        cells=tuple(cells),
        global_set=rescale_set(system.global_set),
        initial_set=rescale_set(system.initial_set),
        terminal_set=rescale_set(system.terminal_set),
        horizon=1.0,
        time_var=time_var,
        normalization=nm,
    )


def contains(region: SemialgebraicSet, point: Sequence[float]) -> bool:
    return region.contains(point)


def active_cell(system: PiecewiseSystem, t: float, x: Sequence[float]) -> int:
    """Lowest index of a cell containing (t, x)."""
    point = system.point(t, x)
    for index, cell in enumerate(system.cells):
        if cell.region.contains(point):
            return index
    raise PartitionExitError(f"State left the state-space partition at t={t:g}")


@dataclass(frozen=True, eq=False)
class ClosedLoop:
    """A normalized system together with the costs and threshold it is judged by.

    `terminal_cost` is h_T over the normalized registry (minimized, so the
    worst-case squared terminal error is -h_T).
    """

    name: str
    variant: str
    system: PiecewiseSystem
    raw: PiecewiseSystem
    terminal_cost: Polynomial
    running_cost: Polynomial
    threshold: float
    sweep_vars: Tuple[str, ...]
    output_var: str
    command_final: float = 0.0
