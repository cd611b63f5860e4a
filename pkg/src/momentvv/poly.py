# Copyright 2025 Nic Cravino. All rights reserved.
# SPDX-License-Identifier: Apache-2.0

"""Sparse multivariate polynomials over a shared, append-only variable registry.

Every polynomial carries the registry it was built on. Arithmetic between
polynomials of different registries is refused, so a variable index always
means the same symbol inside one verification problem.
"""

from __future__ import annotations

import itertools
import math
from collections import Counter
from dataclasses import dataclass
from typing import Dict, Iterable, Iterator, List, Mapping, Sequence, Tuple, Union

import numpy as np


class RegistryMismatchError(ValueError):
    """Raised when polynomials from different registries are combined."""


class UnknownVariableError(KeyError):
    """Raised when a variable name is not present in a registry."""


class DimensionError(ValueError):
    """Raised when a point or coefficient vector has the wrong length."""


class VarRegistry:
    """Ordered, append-only list of variable names.

    Registries compare by identity: two registries holding the same names are
    still different registries.
    """

    def __init__(self, names: Iterable[str] = ()) -> None:
        self._names: List[str] = []
        self._index: Dict[str, int] = {}
        self._frozen = False
        for name in names:
            self.add(name)

    def add(self, name: str) -> int:
        if name in self._index:
            return self._index[name]
        if self._frozen:
            raise RuntimeError(f"Registry is frozen; cannot add variable {name!r}")
        self._index[name] = len(self._names)
        self._names.append(name)
        return self._index[name]

    def index(self, name: str) -> int:
        try:
            return self._index[name]
        except KeyError:
            raise UnknownVariableError(
                f"Unknown variable {name!r}; registry has {', '.join(self._names) or 'no variables'}"
            ) from None

    def name(self, index: int) -> str:
        return self._names[index]

    @property
    def names(self) -> Tuple[str, ...]:
        return tuple(self._names)

    def freeze(self) -> "VarRegistry":
        self._frozen = True
        return self

    @property
    def frozen(self) -> bool:
        return self._frozen

    def __len__(self) -> int:
        return len(self._names)

    def __contains__(self, name: object) -> bool:
        return name in self._index

    def __iter__(self) -> Iterator[str]:
        return iter(self._names)

    def __repr__(self) -> str:
        return f"VarRegistry({self._names!r})"


@dataclass(frozen=True)
class Monomial:
    """Product of variable powers, stored sparsely as sorted (index, exponent) pairs."""

    powers: Tuple[Tuple[int, int], ...] = ()

    @classmethod
    def from_dict(cls, exponents: Mapping[int, int]) -> "Monomial":
        for var, exp in exponents.items():
            if exp < 0:
                raise ValueError(f"Negative exponent {exp} for variable index {var}")
        return cls(tuple(sorted((int(v), int(e)) for v, e in exponents.items() if e)))

    @classmethod
    def from_exponents(cls, exponents: Sequence[int]) -> "Monomial":
        return cls.from_dict(dict(enumerate(exponents)))

    @classmethod
    def var(cls, index: int, exponent: int = 1) -> "Monomial":
        return cls.from_dict({index: exponent})

    @property
    def degree(self) -> int:
        return sum(exp for _, exp in self.powers)

    @property
    def variables(self) -> Tuple[int, ...]:
        return tuple(var for var, _ in self.powers)

    def exponent(self, index: int) -> int:
        for var, exp in self.powers:
            if var == index:
                return exp
        return 0

    def as_dict(self) -> Dict[int, int]:
        return dict(self.powers)

    def dense(self, nvars: int) -> Tuple[int, ...]:
        out = [0] * nvars
        for var, exp in self.powers:
            out[var] = exp
        return tuple(out)

    def without(self, index: int) -> "Monomial":
        return Monomial(tuple(p for p in self.powers if p[0] != index))

    def sort_key(self) -> Tuple[int, Tuple[Tuple[int, int], ...]]:
        """Graded lexicographic key: lower degree first, then larger leading exponents."""
        return (self.degree, tuple((var, -exp) for var, exp in self.powers))

    def __mul__(self, other: "Monomial") -> "Monomial":
        merged = Counter(dict(self.powers))
        merged.update(dict(other.powers))
        return Monomial(tuple(sorted(merged.items())))

    def format(self, registry: VarRegistry) -> str:
        if not self.powers:
            return "1"
        parts = []
        for var, exp in self.powers:
            name = registry.name(var)
            parts.append(name if exp == 1 else f"{name}^{exp}")
        return "*".join(parts)


ONE = Monomial()

Scalar = Union[int, float]


class Polynomial:
    """Immutable sparse polynomial: map from `Monomial` to a non-zero float."""

    __slots__ = ("registry", "_terms")

    def __init__(self, registry: VarRegistry, terms: Mapping[Monomial, float] | None = None) -> None:
        self.registry = registry
        nvars = len(registry)
        cleaned: Dict[Monomial, float] = {}
        for mono, coeff in (terms or {}).items():
            coeff = float(coeff)
            if coeff == 0.0:
                continue
            if mono.powers and mono.powers[-1][0] >= nvars:
                raise DimensionError(
                    f"Monomial uses variable index {mono.powers[-1][0]} but registry has {nvars}"
                )
            cleaned[mono] = coeff
        self._terms = cleaned

    # ----------------------------------------------------------------- builders
    @classmethod
    def constant(cls, registry: VarRegistry, value: Scalar) -> "Polynomial":
        return cls(registry, {ONE: value})

    @classmethod
    def variable(cls, registry: VarRegistry, name: str) -> "Polynomial":
        return cls(registry, {Monomial.var(registry.index(name)): 1.0})

    @classmethod
    def zero(cls, registry: VarRegistry) -> "Polynomial":
        return cls(registry, {})

    # ------------------------------------------------------------------ queries
    @property
    def terms(self) -> Mapping[Monomial, float]:
        return dict(self._terms)

    def items(self) -> List[Tuple[Monomial, float]]:
        """Terms in graded-lex order of their monomials."""
        return sorted(self._terms.items(), key=lambda item: item[0].sort_key())

    def coefficient(self, mono: Monomial) -> float:
        return self._terms.get(mono, 0.0)

    @property
    def degree(self) -> int:
        return max((mono.degree for mono in self._terms), default=0)

    def degree_in(self, indices: Iterable[int]) -> int:
        wanted = set(indices)
        return max(
            (sum(e for v, e in mono.powers if v in wanted) for mono in self._terms), default=0
        )

    def is_zero(self) -> bool:
        return not self._terms

    def variables_used(self) -> Tuple[str, ...]:
        used = sorted({var for mono in self._terms for var in mono.variables})
        return tuple(self.registry.name(var) for var in used)

    def __len__(self) -> int:
        return len(self._terms)

    # --------------------------------------------------------------- arithmetic
    def _coerce(self, other: Union["Polynomial", Scalar]) -> "Polynomial":
        if isinstance(other, Polynomial):
            if other.registry is not self.registry:
                raise RegistryMismatchError(
                    f"Cannot combine polynomials over {self.registry!r} and {other.registry!r}"
                )
            return other
        if isinstance(other, (int, float, np.floating, np.integer)):
            return Polynomial.constant(self.registry, float(other))
        return NotImplemented

    def __add__(self, other: Union["Polynomial", Scalar]) -> "Polynomial":
        other = self._coerce(other)
        if other is NotImplemented:
            return NotImplemented
        out = dict(self._terms)
        for mono, coeff in other._terms.items():
            out[mono] = out.get(mono, 0.0) + coeff
        return Polynomial(self.registry, out)

    __radd__ = __add__

    def __neg__(self) -> "Polynomial":
        return Polynomial(self.registry, {m: -c for m, c in self._terms.items()})

    def __sub__(self, other: Union["Polynomial", Scalar]) -> "Polynomial":
        other = self._coerce(other)
        if other is NotImplemented:
            return NotImplemented
        return self + (-other)

    def __rsub__(self, other: Scalar) -> "Polynomial":
        return (-self) + other

    def __mul__(self, other: Union["Polynomial", Scalar]) -> "Polynomial":
        if isinstance(other, (int, float, np.floating, np.integer)):
            return Polynomial(self.registry, {m: c * float(other) for m, c in self._terms.items()})
        other = self._coerce(other)
        if other is NotImplemented:
            return NotImplemented
        out: Dict[Monomial, float] = {}
        for m1, c1 in self._terms.items():
            for m2, c2 in other._terms.items():
                mono = m1 * m2
                out[mono] = out.get(mono, 0.0) + c1 * c2
        return Polynomial(self.registry, out)

    __rmul__ = __mul__

    def __truediv__(self, other: Scalar) -> "Polynomial":
        return self * (1.0 / float(other))

    def __pow__(self, exponent: int) -> "Polynomial":
        if not isinstance(exponent, (int, np.integer)) or exponent < 0:
            raise ValueError(f"Polynomial powers must be non-negative integers, got {exponent!r}")
        result = Polynomial.constant(self.registry, 1.0)
        base = self
        n = int(exponent)
        while n:
            if n & 1:
                result = result * base
            n >>= 1
            if n:
                base = base * base
        return result

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Polynomial):
            return NotImplemented
        return self.registry is other.registry and self._terms == other._terms

    __hash__ = None  # type: ignore[assignment]

    def allclose(self, other: "Polynomial", atol: float = 1e-12, rtol: float = 1e-12) -> bool:
        other = self._coerce(other)
        for mono in set(self._terms) | set(other._terms):
            a, b = self.coefficient(mono), other.coefficient(mono)
            if abs(a - b) > atol + rtol * max(abs(a), abs(b)):
                return False
        return True

    # --------------------------------------------------------------- calculus
    def _resolve(self, var: Union[str, int]) -> int:
        if isinstance(var, str):
            return self.registry.index(var)
        if not 0 <= var < len(self.registry):
            raise UnknownVariableError(f"Variable index {var} outside registry of {len(self.registry)}")
        return int(var)

    def partial(self, var: Union[str, int]) -> "Polynomial":
        index = self._resolve(var)
        out: Dict[Monomial, float] = {}
        for mono, coeff in self._terms.items():
            exp = mono.exponent(index)
            if exp == 0:
                continue
            reduced = dict(mono.powers)
            reduced[index] = exp - 1
            key = Monomial.from_dict(reduced)
            out[key] = out.get(key, 0.0) + coeff * exp
        return Polynomial(self.registry, out)

    def eval(self, point: Sequence[float]) -> float:
        values = np.asarray(point, dtype=float).ravel()
        if values.shape[0] != len(self.registry):
            raise DimensionError(
                f"Point has {values.shape[0]} coordinates, registry has {len(self.registry)}"
            )
        total = 0.0
        for mono, coeff in self._terms.items():
            term = coeff
            for var, exp in mono.powers:
                term *= values[var] ** exp
            total += term
        return float(total)

    def __call__(self, point: Sequence[float]) -> float:
        return self.eval(point)

    # ------------------------------------------------------------ substitution
    def substitute_affine(self, var: Union[str, int], a: float, b: float) -> "Polynomial":
        """Replace `var` by `a*var + b` and re-expand."""
        index = self._resolve(var)
        out: Dict[Monomial, float] = {}
        for mono, coeff in self._terms.items():
            exp = mono.exponent(index)
            if exp == 0:
                out[mono] = out.get(mono, 0.0) + coeff
                continue
            rest = mono.without(index)
            for k in range(exp + 1):
                weight = math.comb(exp, k) * (a**k) * (b ** (exp - k))
                if weight == 0.0:
                    continue
                key = rest * Monomial.var(index, k) if k else rest
                out[key] = out.get(key, 0.0) + coeff * weight
        return Polynomial(self.registry, out)

    def substitute(self, var: Union[str, int], value: float) -> "Polynomial":
        """Pin `var` to a number."""
        return self.substitute_affine(var, 0.0, value)

    def compose(self, target: VarRegistry, mapping: Mapping[str, "Polynomial"]) -> "Polynomial":
        """Substitute a polynomial over `target` for every variable this polynomial uses."""
        images: Dict[int, Polynomial] = {}
        for name in self.variables_used():
            if name not in mapping:
                raise UnknownVariableError(f"No substitution given for variable {name!r}")
            image = mapping[name]
            if image.registry is not target:
                raise RegistryMismatchError(f"Substitution for {name!r} is not over the target registry")
            images[self.registry.index(name)] = image

        powers: Dict[Tuple[int, int], Polynomial] = {}

        def power(var: int, exp: int) -> Polynomial:
            key = (var, exp)
            if key not in powers:
                powers[key] = images[var] if exp == 1 else power(var, exp - 1) * images[var]
            return powers[key]

        result = Polynomial.zero(target)
        for mono, coeff in self._terms.items():
            term = Polynomial.constant(target, coeff)
            for var, exp in mono.powers:
                term = term * power(var, exp)
            result = result + term
        return result

    def truncate(self, max_degree: int) -> "Polynomial":
        return Polynomial(
            self.registry, {m: c for m, c in self._terms.items() if m.degree <= max_degree}
        )

    # ---------------------------------------------------------------- display
    def format(self, precision: int = 6) -> str:
        if not self._terms:
            return "0"
        parts = []
        for mono, coeff in self.items():
            text = f"{coeff:.{precision}g}"
            parts.append(text if mono == ONE else f"{text}*{mono.format(self.registry)}")
        return " + ".join(parts).replace("+ -", "- ")

    def __repr__(self) -> str:
        return f"Polynomial({self.format()})"


def taylor_trig(kind: str, var: str, order: int, registry: VarRegistry) -> Polynomial:
    """Truncated Maclaurin series of sin or cos in one variable."""
    if order < 0:
        raise ValueError(f"Taylor order must be non-negative, got {order}")
    index = registry.index(var)
    if kind == "sin":
        parity = 1
    elif kind == "cos":
        parity = 0
    else:
        raise ValueError(f"Unsupported trig kind {kind!r}; expected 'sin' or 'cos'")
    terms: Dict[Monomial, float] = {}
    for k in range(parity, order + 1, 2):
        sign = -1.0 if (k // 2) % 2 else 1.0
        terms[Monomial.var(index, k) if k else ONE] = sign / math.factorial(k)
    return Polynomial(registry, terms)


def monomials_up_to(variables: Sequence[int], degree: int) -> List[Monomial]:
    """All monomials in `variables` of total degree <= `degree`, graded-lex ordered."""
    if degree < 0:
        return []
    out: List[Monomial] = []
    ordered = sorted(variables)
    for k in range(degree + 1):
        for combo in itertools.combinations_with_replacement(ordered, k):
            out.append(Monomial.from_dict(Counter(combo)))
    out.sort(key=Monomial.sort_key)
    return out


class PolyEvaluator:
    """Evaluate several polynomials on a batch of points through one monomial table.

    Each monomial is the product of a lower-degree parent and one variable, so
    the table is filled degree by degree with a single multiply per column.
    """

    def __init__(self, polys: Sequence[Polynomial]) -> None:
        if not polys:
            raise ValueError("PolyEvaluator needs at least one polynomial")
        self.registry = polys[0].registry
        for poly in polys[1:]:
            if poly.registry is not self.registry:
                raise RegistryMismatchError("PolyEvaluator polynomials must share one registry")

        closure = {ONE}
        for poly in polys:
            for mono in poly._terms:
                current = mono
                while current not in closure:
                    closure.add(current)
                    current = self._parent(current)[0]
        ordered = sorted(closure, key=Monomial.sort_key)
        self._index = {mono: i for i, mono in enumerate(ordered)}

        levels: Dict[int, List[Tuple[int, int, int]]] = {}
        for mono in ordered[1:]:
            parent, var = self._parent(mono)
            levels.setdefault(mono.degree, []).append((self._index[mono], self._index[parent], var))
        self._levels = [
            tuple(np.array(col, dtype=np.intp) for col in zip(*levels[deg])) for deg in sorted(levels)
        ]

        self._coeffs = np.zeros((len(ordered), len(polys)))
        for j, poly in enumerate(polys):
            for mono, coeff in poly._terms.items():
                self._coeffs[self._index[mono], j] = coeff

    @staticmethod
    def _parent(mono: Monomial) -> Tuple[Monomial, int]:
        var, exp = mono.powers[0]
        reduced = dict(mono.powers)
        reduced[var] = exp - 1
        return Monomial.from_dict(reduced), var

    @property
    def table_size(self) -> int:
        return self._coeffs.shape[0]

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        values = np.atleast_2d(np.asarray(points, dtype=float))
        if values.shape[1] != len(self.registry):
            raise DimensionError(
                f"Points have {values.shape[1]} coordinates, registry has {len(self.registry)}"
            )
        table = np.empty((values.shape[0], self.table_size))
        table[:, 0] = 1.0
        for targets, parents, variables in self._levels:
            table[:, targets] = table[:, parents] * values[:, variables]
        return table @ self._coeffs
