# Copyright 2025 Nic Cravino. All rights reserved.
# SPDX-License-Identifier: Apache-2.0

"""Aircraft properties and polynomial aerodynamic coefficient data.

Coefficient files hold one term per line::

    # name  e_alpha  e_de  e_beta  value
    Cz      1        0     0       -4.211369

Angles are in radians. Lines starting with ``#`` and blank lines are ignored.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Mapping, Tuple

from pydantic import BaseModel, Field

from .poly import Monomial, Polynomial, VarRegistry

COEFFICIENTS = ("Cx", "Cz", "Cm", "Cxq", "Czq", "Cmq")
AERO_VARIABLES = ("alpha", "de", "beta")

# Variables each coefficient may depend on (indices into AERO_VARIABLES).
_ALLOWED = {
    "Cx": {0, 1},
    "Cz": {0, 1, 2},
    "Cm": {0, 1},
    "Cxq": {0},
    "Czq": {0},
    "Cmq": {0},
}


class ConfigError(ValueError):
    """Raised for malformed data or case files; the message carries file and line."""


class AircraftParams(BaseModel):
    """Short-period airframe properties in slug/ft/s units."""

    m: float = Field(636.94, gt=0, description="Mass [slugs]")
    S: float = Field(300.0, gt=0, description="Wing area [ft^2]")
    c_bar: float = Field(11.32, gt=0, description="Mean aerodynamic chord [ft]")
    Delta: float = Field(0.35 * 11.32, gt=0, description="Centre-of-gravity offset [ft]")
    T_thrust: float = Field(8000.0, ge=0, description="Thrust [lbf]")
    V_T: float = Field(502.0, gt=0, description="True airspeed [ft/s]")
    q_bar: float = Field(299.0027, gt=0, description="Dynamic pressure [lbf/ft^2]")
    g: float = Field(32.17, ge=0, description="Gravity [ft/s^2]")
    J_y: float = Field(55814.0, gt=0, description="Pitch moment of inertia [slug ft^2]")


@dataclass(frozen=True)
class AeroCoeffs:
    """The six coefficient polynomials over the (alpha, de, beta) registry."""

    registry: VarRegistry
    polys: Mapping[str, Polynomial]

    def __post_init__(self) -> None:
        for name, poly in self.polys.items():
            if name not in _ALLOWED:
                raise ConfigError(f"Unknown aerodynamic coefficient {name!r}")
            if poly.registry is not self.registry:
                raise ConfigError(f"Coefficient {name} is not over the aero registry")
            used = {self.registry.index(v) for v in poly.variables_used()}
            if not used <= _ALLOWED[name]:
                extra = sorted(AERO_VARIABLES[i] for i in used - _ALLOWED[name])
                raise ConfigError(f"Coefficient {name} may not depend on {', '.join(extra)}")

    def __getitem__(self, name: str) -> Polynomial:
        if name not in self.polys:
            raise ConfigError(f"Aerodynamic data is missing coefficient {name}")
        return self.polys[name]

    def missing(self) -> Tuple[str, ...]:
        return tuple(name for name in COEFFICIENTS if name not in self.polys)

    @classmethod
    def zeros(cls) -> "AeroCoeffs":
        registry = aero_registry()
        return cls(registry, {name: Polynomial.zero(registry) for name in COEFFICIENTS})


def aero_registry() -> VarRegistry:
    return VarRegistry(AERO_VARIABLES).freeze()


def parse_aero(text: str, source: str = "<string>") -> AeroCoeffs:
    registry = aero_registry()
    terms: Dict[str, Dict[Monomial, float]] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        fields = line.split()
        if len(fields) != 5:
            raise ConfigError(
                f"{source}:{lineno}: expected 'NAME e_alpha e_de e_beta value', got {raw.strip()!r}"
            )
        name = fields[0]
        if name not in _ALLOWED:
            raise ConfigError(f"{source}:{lineno}: unknown coefficient {name!r}")
        try:
            exponents = [int(tok) for tok in fields[1:4]]
            value = float(fields[4])
        except ValueError as exc:
            raise ConfigError(f"{source}:{lineno}: {exc}") from exc
        if any(e < 0 for e in exponents):
            raise ConfigError(f"{source}:{lineno}: exponents must be non-negative")
        if any(e and i not in _ALLOWED[name] for i, e in enumerate(exponents)):
            raise ConfigError(f"{source}:{lineno}: {name} may not depend on that variable")
        mono = Monomial.from_exponents(exponents)
        bucket = terms.setdefault(name, {})
        bucket[mono] = bucket.get(mono, 0.0) + value
    polys = {name: Polynomial(registry, bucket) for name, bucket in terms.items()}
    return AeroCoeffs(registry, polys)


def load_aero(path: Path) -> AeroCoeffs:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"Cannot read aerodynamic data {path}: {exc}") from exc
    return parse_aero(text, source=str(path))
