# Copyright 2025 Nic Cravino. All rights reserved.
# SPDX-License-Identifier: Apache-2.0

"""Validation cases: the bundled F-16 scenarios plus a linear surrogate."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Literal, Optional, Tuple

import yaml
from pydantic import BaseModel, Field, ValidationError, model_validator

from .aero import AeroCoeffs, AircraftParams, ConfigError
from .dynamics import Cell, ClosedLoop, Normalization, PiecewiseSystem, VectorField, box, normalize
from .f16mrac import MracConfig, assemble_closed_loop
from .poly import Polynomial, VarRegistry

Interval = Tuple[float, float]


class DisturbanceSpec(BaseModel):
    """Step disturbance added to the control inside |alpha| <= half_width (radians)."""

    amplitude: float = 1.0
    half_width: float = Field(0.0233, gt=0)


class SideslipSpec(BaseModel):
    """beta = slope * alpha + offset."""

    slope: float
    offset: float = 0.0


class LinearModelSpec(BaseModel):
    """Scalar surrogate x' = rate * x."""

    rate: float
    state: str = "x"


class CaseSpec(BaseModel):
    name: str
    description: str = ""
    model: Literal["f16", "linear"] = "f16"
    command: float = Field(0.0, description="Command r, in angle_units")
    Lambda: float = Field(1.0, ge=0.0, le=1.0, description="Control effectiveness")
    disturbance: Optional[DisturbanceSpec] = None
    sideslip: Optional[SideslipSpec] = None
    horizon: float = Field(10.0, gt=0, description="Final time T [s]")
    mrac_enabled: bool = True
    epsilon: float = Field(1e-3, gt=0, description="Half-width of the e_int and weight initial boxes")
    angle_units: Literal["deg", "rad"] = "deg"
    initial_box: Dict[str, Interval] = Field(default_factory=dict)
    state_box: Dict[str, Interval] = Field(default_factory=dict)
    scales: Optional[Dict[str, float]] = Field(
        None, description="Diagonal of the normalizing matrix, per angle unit; default 1/half-width"
    )
    time_cells: Optional[List[float]] = Field(None, description="Time-cell breakpoints [s]")
    terminal_threshold: float = Field(3e-3, gt=0)
    enforce_terminal_set: bool = False
    sin_order: int = Field(3, ge=1)
    cos_order: int = Field(2, ge=0)
    reference_degree: int = Field(8, ge=1)
    plant_degree: Optional[int] = Field(
        3, ge=2, description="Degree of the least-squares plant refit; None keeps the Taylor model"
    )
    elevator_limit: float = Field(
        25.0, gt=0, description="Elevator range of the plant refit, in angle_units"
    )
    sweep_vars: List[str] = Field(default_factory=lambda: ["alpha", "q"])
    mrac: MracConfig = Field(default_factory=MracConfig)
    linear: Optional[LinearModelSpec] = None

    @model_validator(mode="after")
    def _consistent(self) -> "CaseSpec":
        if self.model == "linear" and self.linear is None:
            raise ValueError("linear model cases need a 'linear' section")
        if self.time_cells is not None:
            edges = self.time_cells
            if len(edges) < 2 or edges[0] != 0.0 or abs(edges[-1] - self.horizon) > 1e-9:
                raise ValueError("time_cells must start at 0 and end at the horizon")
            if any(b <= a for a, b in zip(edges, edges[1:])):
                raise ValueError("time_cells must be strictly increasing")
        for name, (lo, hi) in {**self.initial_box, **self.state_box}.items():
            if hi < lo:
                raise ValueError(f"empty interval for {name}")
        if self.scales and any(v <= 0 for v in self.scales.values()):
            raise ValueError("scales must be strictly positive")
        return self

    @classmethod
    def from_yaml(cls, path: Path) -> "CaseSpec":
        path = Path(path)
        try:
            data = yaml.safe_load(path.read_text())
        except yaml.YAMLError as exc:
            mark = getattr(exc, "problem_mark", None)
            where = f"{path}:{mark.line + 1}" if mark is not None else str(path)
            raise ConfigError(f"{where}: {exc}") from exc
        except OSError as exc:
            raise ConfigError(f"Cannot read case file {path}: {exc}") from exc
        try:
            return cls(**(data or {}))
        except ValidationError as exc:
            raise ConfigError(f"Invalid case file {path}: {exc}") from exc


def _f16_boxes() -> Dict[str, Dict[str, Interval]]:
    return {
        "initial_box": {"alpha": (-10.0, 10.0), "q": (-10.0, 10.0)},
        "state_box": {"e_int": (-10.0, 10.0), "alpha": (-30.0, 30.0), "q": (-50.0, 50.0)},
    }


_F16_SCALES = {"e_int": 1 / 10, "alpha": 1 / 30, "q": 1 / 50, "W2": 1 / 30}


@dataclass
class CaseLibrary:
    library: Dict[str, CaseSpec] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.library:
            self.library.update(self._defaults())

    def _defaults(self) -> Dict[str, CaseSpec]:
        mrac = MracConfig(alr_sign=-1)
        return {
            "case1": CaseSpec(
                name="case1",
                description="Nominal flight: r = 0, full control effectiveness",
                horizon=10.0,
                scales=_F16_SCALES,
                mrac=mrac,
                **_f16_boxes(),
            ),
            "case2": CaseSpec(
                name="case2",
                description="Step disturbance near alpha = 0 with control effectiveness 0.4",
                Lambda=0.4,
                disturbance=DisturbanceSpec(amplitude=1.0, half_width=0.0233),
                horizon=10.0,
                scales=_F16_SCALES,
                mrac=mrac,
                **_f16_boxes(),
            ),
            "case3": CaseSpec(
                name="case3",
                description="5 deg command, sideslip buildup, control effectiveness 0.4",
                command=5.0,
                Lambda=0.4,
                sideslip=SideslipSpec(slope=15.0, offset=0.1),
                horizon=30.0,
                time_cells=[0.0, 3.0, 9.0, 30.0],
                scales=_F16_SCALES,
                mrac=mrac,
                **_f16_boxes(),
            ),
            "surrogate": CaseSpec(
                name="surrogate",
                description="Stable scalar system x' = -x, worst terminal x^2 is exp(-20)",
                model="linear",
                linear=LinearModelSpec(rate=-1.0),
                angle_units="rad",
                horizon=10.0,
                mrac_enabled=False,
                initial_box={"x": (-1.0, 1.0)},
                state_box={"x": (-1.0, 1.0)},
                sweep_vars=["x"],
            ),
        }

    def get(self, names: Iterable[str]) -> List[CaseSpec]:
        names = list(names)
        missing = [name for name in names if name not in self.library]
        if missing:
            raise KeyError(f"Unknown cases: {', '.join(missing)}")
        return [self.library[name] for name in names]

    def resolve(self, ref: str) -> CaseSpec:
        """A bundled case name or a path to a case YAML file."""
        if ref in self.library:
            return self.library[ref]
        path = Path(ref)
        if path.suffix in {".yaml", ".yml"} or path.exists():
            return CaseSpec.from_yaml(path)
        return self.get([ref])[0]


def assemble_surrogate(case: CaseSpec) -> ClosedLoop:
    """x' = rate * x with the terminal cost -(r - x(T))^2."""
    if case.linear is None:
        raise ConfigError(f"Case {case.name} has no linear model section")
    name = case.linear.state
    reg = VarRegistry(("t", name)).freeze()
    x = Polynomial.variable(reg, name)
    field_ = VectorField(reg, (case.linear.rate * x,), (name,))
    X = box(reg, {name: case.state_box[name]})
    X0 = box(reg, {name: case.initial_box[name]})
    h_T = -((case.command - x) ** 2)
    X_T = X.with_constraints(case.terminal_threshold + h_T) if case.enforce_terminal_set else X
    raw = PiecewiseSystem(reg, (Cell(X, field_),), X, X0, X_T, case.horizon)
    if case.scales and name in case.scales:
        nm = Normalization((name,), (case.scales[name],), case.horizon)
    else:
        nm = Normalization.from_box_halfwidths(X, (name,), case.horizon)
    return ClosedLoop(
        name=case.name,
        variant="linear",
        system=normalize(raw, nm),
        raw=raw,
        terminal_cost=h_T.substitute_affine(name, 1.0 / nm.scales[0], 0.0),
        running_cost=Polynomial.zero(reg),
        threshold=case.terminal_threshold,
        sweep_vars=tuple(case.sweep_vars),
        output_var=name,
        command_final=case.command,
    )


def build_closed_loop(
    case: CaseSpec,
    variant: Literal["lqr", "lqr+mrac"] = "lqr+mrac",
    aero: Optional[AeroCoeffs] = None,
    params: Optional[AircraftParams] = None,
    alr_sign: Optional[int] = None,
) -> ClosedLoop:
    """Assemble the closed loop a case describes, for one controller variant."""
    if case.model == "linear":
        return assemble_surrogate(case)
    if aero is None:
        raise ConfigError(f"Case {case.name} needs aerodynamic data (--aero)")
    update: Dict[str, object] = {"mrac_enabled": case.mrac_enabled and variant == "lqr+mrac"}
    if alr_sign is not None:
        update["mrac"] = case.mrac.model_copy(update={"alr_sign": alr_sign})
    return assemble_closed_loop(case.model_copy(update=update), params or AircraftParams(), aero)
