# Copyright 2025 Nic Cravino. All rights reserved.
# SPDX-License-Identifier: Apache-2.0

"""Fixed-step simulation baseline over a grid of initial conditions.

Integration runs on the normalized system (tau in [0, 1], z = D x) for a whole
batch of initial conditions at once; the active cell is chosen at every sample
and held through the step. Trajectories leaving X or every cell are marked
diverged and frozen at their exit sample.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Literal, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, Field

from .dynamics import CONTAINMENT_TOL, ClosedLoop, Normalization, PiecewiseSystem
from .poly import Monomial, PolyEvaluator, monomials_up_to

logger = logging.getLogger(__name__)

TrajectoryStatus = Literal["completed", "diverged"]


class DivergedTrajectoryError(ValueError):
    """Raised when moments are requested from a trajectory that left X."""


class SimConfig(BaseModel):
    step: float = Field(1e-4, gt=0, description="Integration step [s]")
    integrator: Literal["rk4", "euler"] = "rk4"
    grid: int = Field(21, ge=2, description="Grid points per swept initial-state dimension")
    sweep_vars: Optional[List[str]] = Field(
        None, description="Swept initial states (default: the case's sweep variables)"
    )
    workers: int = Field(1, ge=1, description="Threads sharing a sweep")


@dataclass
class Trajectory:
    """Samples in un-normalized units: times in seconds, states in radians/raw units."""

    times: np.ndarray
    states: np.ndarray
    cells: np.ndarray
    status: TrajectoryStatus
    exit_time: Optional[float] = None

    @property
    def initial(self) -> np.ndarray:
        return self.states[0]

    @property
    def terminal(self) -> np.ndarray:
        return self.states[-1]

    @property
    def diverged(self) -> bool:
        return self.status == "diverged"


@dataclass
class McReport:
    j_mc: float
    argmax: Optional[np.ndarray]
    diverged: int
    terminal_errors: np.ndarray
    initial_conditions: np.ndarray
    exit_times: np.ndarray
    sweep_vars: Tuple[str, ...] = ()
    grid: int = 0
    step: float = 0.0
    integrator: str = "rk4"

    @property
    def total(self) -> int:
        return int(self.initial_conditions.shape[0])

    def as_dict(self) -> Dict[str, object]:
        return {
            "J_mc": self.j_mc,
            "argmax": None if self.argmax is None else [float(v) for v in self.argmax],
            "diverged": self.diverged,
            "trajectories": self.total,
            "grid": self.grid,
            "sweep_vars": list(self.sweep_vars),
            "step": self.step,
            "integrator": self.integrator,
        }


@dataclass(frozen=True)
class CellCrossing:
    time: float
    before: int
    after: int
    state: np.ndarray = field(repr=False)


class _CellDispatch:
    """Batched field, cell and containment evaluation for one piecewise system."""

    def __init__(self, system: PiecewiseSystem) -> None:
        self.system = system
        self.fields = [PolyEvaluator(cell.field.components) for cell in system.cells]
        self.regions = [
            PolyEvaluator(cell.region.constraints) if cell.region.constraints else None
            for cell in system.cells
        ]
        constraints = system.global_set.constraints
        self.global_set = PolyEvaluator(constraints) if constraints else None

    def points(self, t: float, Z: np.ndarray) -> np.ndarray:
        return self.system.points(t, Z)

    def inside(self, t: float, Z: np.ndarray) -> np.ndarray:
        if self.global_set is None:
            return np.ones(Z.shape[0], dtype=bool)
        return np.all(self.global_set.evaluate(self.points(t, Z)) >= -CONTAINMENT_TOL, axis=1)

    def cells(self, t: float, Z: np.ndarray) -> np.ndarray:
        """Lowest containing cell per row, -1 where none contains the point."""
        out = np.full(Z.shape[0], -1, dtype=int)
        P = self.points(t, Z)
        for j, region in enumerate(self.regions):
            todo = out < 0
            if not todo.any():
                break
            if region is None:
                out[todo] = j
                continue
            ok = np.all(region.evaluate(P[todo]) >= -CONTAINMENT_TOL, axis=1)
            out[np.flatnonzero(todo)[ok]] = j
        return out

    def rhs(self, t: float, Z: np.ndarray, cells: np.ndarray) -> np.ndarray:
        out = np.empty_like(Z)
        P = self.points(t, Z)
        for j in np.unique(cells):
            mask = cells == j
            out[mask] = self.fields[j].evaluate(P[mask])
        return out


def _time_scale(system: PiecewiseSystem) -> float:
    return system.normalization.horizon if system.normalization is not None else 1.0


def _to_system(system: PiecewiseSystem, X: np.ndarray) -> np.ndarray:
    nm = system.normalization
    return X if nm is None else nm.normalize_state(X)


def _from_system(system: PiecewiseSystem, Z: np.ndarray) -> np.ndarray:
    nm = system.normalization
    return Z if nm is None else nm.denormalize_state(Z)


def _run_batch(
    system: PiecewiseSystem,
    Z0: np.ndarray,
    cfg: SimConfig,
    record: bool = False,
) -> Tuple[np.ndarray, np.ndarray, Optional[Tuple[List[float], List[np.ndarray], List[int]]]]:
    """Integrate every row of Z0; returns final states, exit step (-1 if completed), samples of row 0."""
    dispatch = _CellDispatch(system)
    nsteps = max(1, math.ceil(system.horizon / (cfg.step / _time_scale(system)) - 1e-9))
    h = system.horizon / nsteps

    Z = np.array(Z0, dtype=float, copy=True)
    cells = dispatch.cells(0.0, Z)
    exit_step = np.full(Z.shape[0], -1, dtype=int)
    start_bad = (cells < 0) | ~dispatch.inside(0.0, Z)
    exit_step[start_bad] = 0
    alive = ~start_bad

    samples = ([0.0], [Z[0].copy()], [int(cells[0])]) if record else None

    for k in range(nsteps):
        idx = np.flatnonzero(alive)
        if idx.size == 0:
            break
        t = k * h
        Zi, ci = Z[idx], cells[idx]
        with np.errstate(over="ignore", invalid="ignore"):
            if cfg.integrator == "euler":
                Znew = Zi + h * dispatch.rhs(t, Zi, ci)
            else:
                k1 = dispatch.rhs(t, Zi, ci)
                k2 = dispatch.rhs(t + h / 2, Zi + (h / 2) * k1, ci)
                k3 = dispatch.rhs(t + h / 2, Zi + (h / 2) * k2, ci)
                k4 = dispatch.rhs(t + h, Zi + h * k3, ci)
                Znew = Zi + (h / 6) * (k1 + 2 * k2 + 2 * k3 + k4)
        t1 = (k + 1) * h
        finite = np.all(np.isfinite(Znew), axis=1)
        candidate = np.where(finite[:, None], Znew, 0.0)
        new_cells = dispatch.cells(t1, candidate)
        ok = finite & dispatch.inside(t1, candidate) & (new_cells >= 0)

        Z[idx[ok]] = Znew[ok]
        cells[idx[ok]] = new_cells[ok]
        gone = idx[~ok]
        if gone.size:
            Z[gone] = np.where(finite[~ok, None], Znew[~ok], Zi[~ok])
            cells[gone] = -1
            exit_step[gone] = k + 1
            alive[gone] = False
        if samples is not None and (alive[0] or gone.size and gone[0] == 0):
            samples[0].append(t1)
            samples[1].append(Z[0].copy())
            samples[2].append(int(cells[0]))
    return Z, exit_step, samples


def integrate(system: PiecewiseSystem, x0: Sequence[float], cfg: SimConfig) -> Trajectory:
    """One trajectory from the un-normalized initial state x0, every sample recorded."""
    x0 = np.asarray(x0, dtype=float).ravel()
    z0 = _to_system(system, x0[None, :])
    if not system.initial_set.contains(system.point(0.0, z0[0])):
        logger.warning("Initial condition %s is outside X_0", np.array2string(x0, precision=4))
    _, exit_step, samples = _run_batch(system, z0, cfg, record=True)
    assert samples is not None
    scale = _time_scale(system)
    times = np.asarray(samples[0]) * scale
    states = _from_system(system, np.asarray(samples[1]))
    cells = np.asarray(samples[2], dtype=int)
    if exit_step[0] >= 0:
        return Trajectory(times, states, cells, "diverged", float(times[-1]))
    return Trajectory(times, states, cells, "completed")


def sweep_grid(loop: ClosedLoop, cfg: SimConfig) -> np.ndarray:
    """Evenly spaced un-normalized initial conditions over X_0 in the swept states."""
    raw = loop.raw
    swept = tuple(cfg.sweep_vars or loop.sweep_vars)
    axes = []
    for name in raw.states:
        extent = raw.initial_set.bound(name)
        if extent is None:
            raise ValueError(f"X_0 has no box bound for {name!r}")
        lo, hi = extent
        axes.append(np.linspace(lo, hi, cfg.grid) if name in swept else np.array([(lo + hi) / 2]))
    unknown = [name for name in swept if name not in raw.states]
    if unknown:
        raise ValueError(f"Cannot sweep unknown state(s): {', '.join(unknown)}")
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


def sweep(loop: ClosedLoop, cfg: SimConfig) -> McReport:
    """Worst terminal error max [r - alpha(T)]^2 over the grid; infinite if anything diverged."""
    system = loop.system
    X0 = sweep_grid(loop, cfg)
    Z0 = _to_system(system, X0)
    chunks = np.array_split(np.arange(Z0.shape[0]), min(cfg.workers, Z0.shape[0]))
    if cfg.workers > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            parts = list(pool.map(lambda rows: _run_batch(system, Z0[rows], cfg)[:2], chunks))
    else:
        parts = [_run_batch(system, Z0[rows], cfg)[:2] for rows in chunks]
    ZT = np.concatenate([p[0] for p in parts])
    exit_step = np.concatenate([p[1] for p in parts])

    cost = PolyEvaluator([loop.terminal_cost])
    errors = -cost.evaluate(system.points(system.horizon, ZT))[:, 0]
    diverged_mask = exit_step >= 0
    errors[diverged_mask] = math.inf
    diverged = int(diverged_mask.sum())
    nsteps = max(1, math.ceil(system.horizon / (cfg.step / _time_scale(system)) - 1e-9))
    exit_times = np.where(
        diverged_mask, exit_step * (system.horizon / nsteps) * _time_scale(system), np.nan
    )

    best = int(np.argmax(errors)) if errors.size else None
    j_mc = math.inf if diverged else (float(errors[best]) if best is not None else 0.0)
    if diverged:
        logger.warning("%s (%s): %d of %d trajectories diverged", loop.name, loop.variant, diverged, len(errors))
    logger.info("%s (%s): J_mc = %.6e over %d trajectories", loop.name, loop.variant, j_mc, len(errors))
    return McReport(
        j_mc=j_mc,
        argmax=None if best is None else X0[best],
        diverged=diverged,
        terminal_errors=errors,
        initial_conditions=X0,
        exit_times=exit_times,
        sweep_vars=tuple(cfg.sweep_vars or loop.sweep_vars),
        grid=cfg.grid,
        step=cfg.step,
        integrator=cfg.integrator,
    )


def empirical_moments(
    traj: Trajectory,
    system: PiecewiseSystem,
    max_degree: int,
    nm: Optional[Normalization] = None,
) -> Dict[str, Dict[Monomial, float]]:
    """Discrete initial, terminal and per-cell occupation moments on normalized data.

    Keys follow the relaxation's measure names: mu0, muT, mu1..muN. Occupation
    moments are left Riemann sums attributed to the cell active at each sample.
    """
    if traj.diverged:
        raise DivergedTrajectoryError("Empirical moments need a completed trajectory")
    nm = nm or system.normalization
    scale_t = nm.horizon if nm is not None else 1.0
    taus = traj.times / scale_t
    Z = traj.states if nm is None else nm.normalize_state(traj.states)
    points = system.points(taus, Z)

    t_index = system.time_index
    states = system.state_indices
    boundary = monomials_up_to(states, max_degree)
    occupation = monomials_up_to(tuple(sorted((t_index,) + states)), max_degree)

    def values(monos: Sequence[Monomial], P: np.ndarray) -> np.ndarray:
        out = np.ones((P.shape[0], len(monos)))
        for k, mono in enumerate(monos):
            for var, exp in mono.powers:
                out[:, k] *= P[:, var] ** exp
        return out

    moments: Dict[str, Dict[Monomial, float]] = {}
    moments["mu0"] = dict(zip(boundary, values(boundary, points[:1])[0]))
    moments["muT"] = dict(zip(boundary, values(boundary, points[-1:])[0]))
    weights = np.diff(taus)
    table = values(occupation, points[:-1]) * weights[:, None]
    for j in range(len(system.cells)):
        mask = traj.cells[:-1] == j
        moments[f"mu{j + 1}"] = dict(zip(occupation, table[mask].sum(axis=0)))
    return moments


def refine_crossings(
    traj: Trajectory, system: PiecewiseSystem, tol: float = 1e-12, max_iter: int = 80
) -> List[CellCrossing]:
    """Locate every cell switch by bisection on the linearly interpolated step."""
    dispatch = _CellDispatch(system)
    nm = system.normalization
    scale_t = nm.horizon if nm is not None else 1.0
    Z = traj.states if nm is None else nm.normalize_state(traj.states)
    out = []
    for k in np.flatnonzero(traj.cells[1:] != traj.cells[:-1]):
        before, after = int(traj.cells[k]), int(traj.cells[k + 1])
        lo, hi = 0.0, 1.0
        t0, t1 = traj.times[k] / scale_t, traj.times[k + 1] / scale_t
        for _ in range(max_iter):
            if (hi - lo) * (t1 - t0) <= tol:
                break
            mid = 0.5 * (lo + hi)
            z = (1 - mid) * Z[k] + mid * Z[k + 1]
            if dispatch.cells(t0 + mid * (t1 - t0), z[None, :])[0] == before:
                lo = mid
            else:
                hi = mid
        z = (1 - hi) * Z[k] + hi * Z[k + 1]
        state = z if nm is None else nm.denormalize_state(z)
        out.append(CellCrossing((t0 + hi * (t1 - t0)) * scale_t, before, after, state))
    return out
