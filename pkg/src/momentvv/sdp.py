# Copyright 2025 Nic Cravino. All rights reserved.
# SPDX-License-Identifier: Apache-2.0

"""Solver-ready LMI standard form and the embedded interior-point solver.

The standard form is

    minimize    c . y
    subject to  A y = b
                S_k = C_k + sum_i y_i F_i^k  PSD   for every block k

and its dual is maximize b . lam - sum_k <C_k, Z_k> subject to
sum_k A_k^*(Z_k) + A^T lam = c, Z_k PSD.

`solve` runs a homogeneous self-dual primal-dual path-following method with
Nesterov-Todd scaling and a Mehrotra-type predictor-corrector. Everything is
dense: moment blocks at desk-scale orders are small enough for that.
"""

from __future__ import annotations

import logging
import math
import time
import warnings
from dataclasses import dataclass, field
from typing import List, Literal, Optional, Sequence, Tuple

import numpy as np
import scipy.linalg

from .poly import DimensionError
from .relax import MomentLmiProblem

logger = logging.getLogger(__name__)

SolveStatus = Literal[
    "optimal", "inaccurate", "infeasible", "unbounded", "iteration-limit", "exported"
]

STEP_FRACTION = 0.95
# below this reciprocal condition number the Newton system goes through lstsq
RCOND_FLOOR = float(np.finfo(float).eps)


@dataclass(frozen=True, eq=False)
class LmiBlock:
    """S(y) = const + sum_k y[var_idx[k]] * mats[k], only nonzero coefficient matrices stored."""

    name: str
    size: int
    const: np.ndarray
    var_idx: np.ndarray
    mats: np.ndarray

    def __post_init__(self) -> None:
        n = self.size
        if self.const.shape != (n, n) or self.mats.shape[1:] != (n, n):
            raise DimensionError(f"Block {self.name} matrices are not {n}x{n}")
        if self.mats.shape[0] != self.var_idx.shape[0]:
            raise DimensionError(f"Block {self.name} has {self.mats.shape[0]} matrices for {self.var_idx.shape[0]} variables")
        if not np.allclose(self.const, self.const.T) or not np.allclose(
            self.mats, np.transpose(self.mats, (0, 2, 1))
        ):
            raise ValueError(f"Block {self.name} is not symmetric")

    def apply(self, y: np.ndarray, scale: float = 1.0) -> np.ndarray:
        """const * scale + sum y_i F_i."""
        out = self.const * scale
        if self.var_idx.size:
            out = out + np.tensordot(y[self.var_idx], self.mats, axes=1)
        return out

    def dense(self, num_vars: int) -> np.ndarray:
        """Coefficient matrices for every variable, zeros where the block does not use it."""
        out = np.zeros((num_vars, self.size, self.size))
        out[self.var_idx] = self.mats
        return out

    def adjoint(self, Z: np.ndarray) -> np.ndarray:
        """<F_i, Z> for the block's variables, in var_idx order."""
        return self.mats.reshape(self.mats.shape[0], -1) @ Z.ravel()


@dataclass(frozen=True, eq=False)
class LmiStandardForm:
    c: np.ndarray
    A: np.ndarray
    b: np.ndarray
    blocks: Tuple[LmiBlock, ...] = ()
    labels: Tuple[str, ...] = ()

    def __post_init__(self) -> None:
        m = self.c.shape[0]
        if self.A.ndim != 2 or self.A.shape[1] != m or self.A.shape[0] != self.b.shape[0]:
            raise DimensionError(
                f"Equality system {self.A.shape} / {self.b.shape} does not match {m} variables"
            )
        for block in self.blocks:
            if block.var_idx.size and (block.var_idx.max() >= m or block.var_idx.min() < 0):
                raise DimensionError(f"Block {block.name} references a variable outside 0..{m - 1}")

    @property
    def num_vars(self) -> int:
        return self.c.shape[0]

    @property
    def barrier_degree(self) -> int:
        return sum(block.size for block in self.blocks)


@dataclass
class SolveResult:
    status: SolveStatus
    y: np.ndarray
    objective: float
    dual_objective: float = float("nan")
    gap: float = float("nan")
    primal_infeasibility: float = float("nan")
    dual_infeasibility: float = float("nan")
    iterations: int = 0
    wall_time: float = 0.0
    message: str = ""
    multipliers: Optional[np.ndarray] = field(default=None, repr=False)


def lower(problem: MomentLmiProblem) -> LmiStandardForm:
    """Translate a moment problem into dense standard-form data."""
    A, b = problem.equality_system()
    blocks = []
    for k, desc in enumerate(problem.psd_blocks):
        n = desc.size
        var_idx = np.unique(desc.variables)
        position = {int(v): i for i, v in enumerate(var_idx)}
        mats = np.zeros((var_idx.size, n, n))
        for r, c, v, val in zip(desc.rows, desc.cols, desc.variables, desc.values):
            mats[position[int(v)], r, c] += val
            if r != c:
                mats[position[int(v)], c, r] += val
        blocks.append(
            LmiBlock(f"{desc.measure}:{desc.label}:{k}", n, np.zeros((n, n)), var_idx, mats)
        )
    labels = tuple(row.label for row in problem.equalities)
    return LmiStandardForm(problem.objective.copy(), A, b, tuple(blocks), labels)


def residuals(form: LmiStandardForm, y: np.ndarray) -> Tuple[np.ndarray, List[float]]:
    """Equality residual A y - b and the minimum eigenvalue of every block at y."""
    y = np.asarray(y, dtype=float)
    eigs = [float(scipy.linalg.eigvalsh(block.apply(y))[0]) for block in form.blocks]
    return form.A @ y - form.b, eigs


# --------------------------------------------------------------------- helpers
def _independent_rows(A: np.ndarray, tol: float = 1e-10) -> np.ndarray:
    if A.shape[0] == 0:
        return np.arange(0)
    _, R, piv = scipy.linalg.qr(A.T, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    if diag.size == 0 or diag[0] == 0.0:
        return np.arange(0)
    rank = int(np.sum(diag > tol * diag[0]))
    return np.sort(piv[:rank])


def _adjoint(form: LmiStandardForm, Zs: Sequence[np.ndarray]) -> np.ndarray:
    out = np.zeros(form.num_vars)
    for block, Z in zip(form.blocks, Zs):
        if block.var_idx.size:
            np.add.at(out, block.var_idx, block.adjoint(Z))
    return out


def _inner(Xs: Sequence[np.ndarray], Ys: Sequence[np.ndarray]) -> float:
    return float(sum(np.vdot(X, Y) for X, Y in zip(Xs, Ys)))


def _sym(M: np.ndarray) -> np.ndarray:
    return 0.5 * (M + M.T)


def _max_step(X: np.ndarray, dX: np.ndarray) -> float:
    """Largest alpha keeping X + alpha dX positive definite (X must be PD)."""
    L = scipy.linalg.cholesky(X, lower=True)
    Li = scipy.linalg.solve_triangular(L, np.eye(X.shape[0]), lower=True)
    lam = scipy.linalg.eigvalsh(_sym(Li @ dX @ Li.T))[0]
    return math.inf if lam >= 0 else -1.0 / lam


def _nt_scaling(S: np.ndarray, Z: np.ndarray) -> np.ndarray:
    """W with W S W = Z."""
    w, V = scipy.linalg.eigh(S)
    w = np.maximum(w, 1e-300)
    s_half = (V * np.sqrt(w)) @ V.T
    s_mhalf = (V / np.sqrt(w)) @ V.T
    g, U = scipy.linalg.eigh(_sym(s_half @ Z @ s_half))
    g_half = (U * np.sqrt(np.maximum(g, 0.0))) @ U.T
    return _sym(s_mhalf @ g_half @ s_mhalf)


def _factor(K: np.ndarray) -> Optional[Tuple[np.ndarray, np.ndarray]]:
    """LU factors of the Newton matrix, or None when it is numerically singular."""
    with warnings.catch_warnings():
        warnings.simplefilter("error", scipy.linalg.LinAlgWarning)
        try:
            lu, piv = scipy.linalg.lu_factor(K, check_finite=False)
        except scipy.linalg.LinAlgWarning:
            return None
    rcond, info = scipy.linalg.lapack.dgecon(lu, np.linalg.norm(K, 1), norm="1")
    if info != 0 or not rcond > RCOND_FLOOR:
        return None
    return lu, piv


def _solve_lp(form: LmiStandardForm, started: float) -> SolveResult:
    """No conic blocks: min c.y over an affine subspace."""
    A, b, c = form.A, form.b, form.c
    if A.shape[0]:
        y, *_ = np.linalg.lstsq(A, b, rcond=None)
        pinf = float(np.linalg.norm(A @ y - b)) / (1.0 + float(np.linalg.norm(b)))
        lam, *_ = np.linalg.lstsq(A.T, c, rcond=None)
        dinf = float(np.linalg.norm(A.T @ lam - c)) / (1.0 + float(np.linalg.norm(c)))
    else:
        y, lam = np.zeros(form.num_vars), np.zeros(0)
        pinf, dinf = 0.0, float(np.linalg.norm(c)) / (1.0 + float(np.linalg.norm(c)))
    wall = time.perf_counter() - started
    if pinf > 1e-9:
        return SolveResult("infeasible", y, math.nan, primal_infeasibility=pinf, wall_time=wall,
                           message="equality system is inconsistent")
    if dinf > 1e-9:
        return SolveResult("unbounded", y, -math.inf, dual_infeasibility=dinf, wall_time=wall,
                           message="cost is not constant on the feasible subspace")
    obj = float(c @ y)
    return SolveResult("optimal", y, obj, obj, 0.0, pinf, dinf, 0, wall, multipliers=lam)


# ---------------------------------------------------------------------- solver
def solve(
    form: LmiStandardForm,
    gap_tol: float = 1e-8,
    feas_tol: float = 1e-8,
    max_iter: int = 200,
) -> SolveResult:
    """Homogeneous self-dual interior-point solve of `form`."""
    started = time.perf_counter()
    if not form.blocks:
        return _solve_lp(form, started)

    keep = _independent_rows(form.A)
    A_full, b_full = form.A, form.b
    if keep.size < A_full.shape[0] and A_full.shape[0]:
        y_ls, *_ = np.linalg.lstsq(A_full, b_full, rcond=None)
        if np.linalg.norm(A_full @ y_ls - b_full) > 1e-8 * (1.0 + np.linalg.norm(b_full)):
            return SolveResult(
                "infeasible",
                y_ls,
                math.nan,
                primal_infeasibility=float(np.linalg.norm(A_full @ y_ls - b_full)),
                wall_time=time.perf_counter() - started,
                message="equality system is inconsistent",
            )
        logger.debug("Dropped %d dependent equality rows", A_full.shape[0] - keep.size)
    A, b, c = A_full[keep], b_full[keep], form.c
    blocks = form.blocks
    m, p = form.num_vars, A.shape[0]
    N = form.barrier_degree
    Cs = [block.const for block in blocks]
    norm_b = 1.0 + float(np.linalg.norm(b))
    norm_c = 1.0 + float(np.linalg.norm(c))
    norm_C = 1.0 + math.sqrt(sum(float(np.vdot(C, C)) for C in Cs))

    y = np.zeros(m)
    lam = np.zeros(p)
    Ss = [np.eye(block.size) for block in blocks]
    Zs = [np.eye(block.size) for block in blocks]
    tau, kappa = 1.0, 1.0

    best: Optional[SolveResult] = None
    status: SolveStatus = "iteration-limit"
    message = ""
    it = 0

    def snapshot(stat: SolveStatus, msg: str) -> SolveResult:
        pobj = float(c @ y) / tau
        dobj = (float(b @ lam) - _inner(Cs, Zs)) / tau
        r_p = [blk.apply(y, tau) - S for blk, S in zip(blocks, Ss)]
        pinf = max(
            math.sqrt(sum(float(np.vdot(R, R)) for R in r_p)) / tau / norm_C,
            float(np.linalg.norm(A @ y - b * tau)) / tau / norm_b if p else 0.0,
        )
        dinf = float(np.linalg.norm(_adjoint(form, Zs) + A.T @ lam - c * tau)) / tau / norm_c
        return SolveResult(
            stat,
            y / tau,
            pobj,
            dobj,
            pobj - dobj,
            pinf,
            dinf,
            it,
            time.perf_counter() - started,
            msg,
            lam / tau,
        )

    for it in range(1, max_iter + 1):
        try:
            # Residuals of the homogeneous embedding.
            r_e = A @ y - b * tau
            r_p = [blk.apply(y, tau) - S for blk, S in zip(blocks, Ss)]
            r_d = _adjoint(form, Zs) + A.T @ lam - c * tau
            r_g = float(c @ y) - float(b @ lam) + _inner(Cs, Zs) + kappa
            mu = (_inner(Zs, Ss) + tau * kappa) / (N + 1)

            pobj = float(c @ y) / tau
            dobj = (float(b @ lam) - _inner(Cs, Zs)) / tau
            pinf = max(
                math.sqrt(sum(float(np.vdot(R, R)) for R in r_p)) / tau / norm_C,
                float(np.linalg.norm(r_e)) / tau / norm_b if p else 0.0,
            )
            dinf = float(np.linalg.norm(r_d)) / tau / norm_c
            relgap = abs(pobj - dobj) / (1.0 + abs(pobj) + abs(dobj))
            logger.debug(
                "it %3d  pobj % .8e  dobj % .8e  gap %.2e  pinf %.2e  dinf %.2e  tau %.2e  kappa %.2e",
                it, pobj, dobj, relgap, pinf, dinf, tau, kappa,
            )
            if pinf <= feas_tol and dinf <= feas_tol and relgap <= gap_tol:
                status, message = "optimal", "converged"
                break

            # Infeasibility certificates once tau has collapsed relative to kappa.
            if tau < kappa:
                t_dual = float(b @ lam) - _inner(Cs, Zs)
                if t_dual > 0:
                    ray = np.linalg.norm(_adjoint(form, Zs) + A.T @ lam) / t_dual
                    if ray <= feas_tol:
                        status, message = "infeasible", f"dual ray certificate {ray:.2e}"
                        break
                t_primal = -float(c @ y)
                if t_primal > 0:
                    slack = math.sqrt(
                        sum(float(np.vdot(R, R)) for R in (blk.apply(y, 0.0) - S for blk, S in zip(blocks, Ss)))
                    )
                    ray = max(slack, float(np.linalg.norm(A @ y)) if p else 0.0) / t_primal
                    if ray <= feas_tol:
                        status, message = "unbounded", f"primal ray certificate {ray:.2e}"
                        break

            best = snapshot("inaccurate", "best iterate")

            # Scaling and Schur complement.
            Ws = [_nt_scaling(S, Z) for S, Z in zip(Ss, Zs)]
            Sinvs = [scipy.linalg.inv(S) for S in Ss]
            H = np.zeros((m, m))
            WCWs = []
            for blk, W, C in zip(blocks, Ws, Cs):
                if blk.var_idx.size:
                    WFW = W @ blk.mats @ W
                    k = blk.var_idx.size
                    H[np.ix_(blk.var_idx, blk.var_idx)] += blk.mats.reshape(k, -1) @ WFW.reshape(k, -1).T
                WCWs.append(W @ C @ W)
            g = _adjoint(form, WCWs)
            cwc = _inner(Cs, WCWs)

            K = np.zeros((m + p + 1, m + p + 1))
            K[:m, :m] = H
            K[:m, m:m + p] = -A.T
            K[:m, -1] = g + c
            K[m:m + p, :m] = A
            K[m:m + p, -1] = -b
            K[-1, :m] = c - g
            K[-1, m:m + p] = -b
            K[-1, -1] = -(cwc + kappa / tau)
            lu = _factor(K)
            if lu is None:
                logger.debug("Iteration %d: singular Newton system, using least squares", it)

            def direction(sigma: float):
                eta = 1.0 - sigma
                Es = [
                    sigma * mu * Sinv - Z - eta * (W @ R @ W)
                    for Sinv, Z, W, R in zip(Sinvs, Zs, Ws, r_p)
                ]
                rhs = np.concatenate(
                    [
                        _adjoint(form, Es) + eta * r_d,
                        -eta * r_e,
                        [-eta * r_g - _inner(Cs, Es) - (sigma * mu - tau * kappa) / tau],
                    ]
                )
                sol = None if lu is None else scipy.linalg.lu_solve(lu, rhs, check_finite=False)
                if sol is None or not np.all(np.isfinite(sol)):
                    sol, *_ = np.linalg.lstsq(K, rhs, rcond=None)
                dy, dlam, dtau = sol[:m], sol[m:m + p], float(sol[-1])
                dSs = [_sym(blk.apply(dy, dtau) + eta * R) for blk, R in zip(blocks, r_p)]
                # dZ + W dS W = sigma mu S^-1 - Z
                dZs = [
                    _sym(sigma * mu * Sinv - Z - W @ dS @ W)
                    for Sinv, Z, W, dS in zip(Sinvs, Zs, Ws, dSs)
                ]
                dkappa = (sigma * mu - tau * kappa - kappa * dtau) / tau
                return dy, dlam, dtau, dSs, dZs, dkappa

            def step_length(dtau, dSs, dZs, dkappa) -> float:
                alpha = math.inf
                for S, dS in zip(Ss, dSs):
                    alpha = min(alpha, _max_step(S, dS))
                for Z, dZ in zip(Zs, dZs):
                    alpha = min(alpha, _max_step(Z, dZ))
                if dtau < 0:
                    alpha = min(alpha, -tau / dtau)
                if dkappa < 0:
                    alpha = min(alpha, -kappa / dkappa)
                return alpha

            # Predictor.
            dy, dlam, dtau, dSs, dZs, dkappa = direction(0.0)
            alpha = min(1.0, step_length(dtau, dSs, dZs, dkappa))
            mu_aff = (
                _inner([Z + alpha * dZ for Z, dZ in zip(Zs, dZs)], [S + alpha * dS for S, dS in zip(Ss, dSs)])
                + (tau + alpha * dtau) * (kappa + alpha * dkappa)
            ) / (N + 1)
            sigma = min(1.0, max(0.0, mu_aff / mu)) ** 3

            # Corrector.
            dy, dlam, dtau, dSs, dZs, dkappa = direction(sigma)
            alpha = min(1.0, STEP_FRACTION * step_length(dtau, dSs, dZs, dkappa))

            y = y + alpha * dy
            lam = lam + alpha * dlam
            Ss = [_sym(S + alpha * dS) for S, dS in zip(Ss, dSs)]
            Zs = [_sym(Z + alpha * dZ) for Z, dZ in zip(Zs, dZs)]
            tau = tau + alpha * dtau
            kappa = kappa + alpha * dkappa

            if not (np.all(np.isfinite(y)) and math.isfinite(tau) and tau > 0 and kappa > 0):
                raise FloatingPointError("iterate left the cone")
            if alpha < 1e-12:
                raise FloatingPointError("step length collapsed")
        except (np.linalg.LinAlgError, scipy.linalg.LinAlgError, FloatingPointError, ValueError) as exc:
            logger.warning("Interior-point breakdown at iteration %d: %s", it, exc)
            result = best or snapshot("inaccurate", str(exc))
            result.status = "inaccurate"
            result.message = f"numerical breakdown: {exc}"
            result.iterations = it
            result.wall_time = time.perf_counter() - started
            return result
    else:
        near = snapshot("iteration-limit", "iteration limit reached")
        if (
            near.primal_infeasibility <= 1e3 * feas_tol
            and near.dual_infeasibility <= 1e3 * feas_tol
            and abs(near.gap) / (1.0 + abs(near.objective) + abs(near.dual_objective)) <= 1e3 * gap_tol
        ):
            near.status = "inaccurate"
        logger.info("Solver stopped after %d iterations with status %s", max_iter, near.status)
        return near

    if status in ("infeasible", "unbounded"):
        result = SolveResult(
            status,
            y.copy(),
            math.inf if status == "infeasible" else -math.inf,
            iterations=it,
            wall_time=time.perf_counter() - started,
            message=message,
            multipliers=lam.copy(),
        )
        logger.info("Solver certified %s after %d iterations", status, it)
        return result
    result = snapshot(status, message)
    logger.info(
        "Solver %s after %d iterations: objective %.8e, gap %.2e", status, it, result.objective, result.gap
    )
    return result
