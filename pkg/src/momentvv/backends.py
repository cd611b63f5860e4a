# Copyright 2025 Nic Cravino. All rights reserved.
# SPDX-License-Identifier: Apache-2.0

"""SDP solver backends: the embedded interior-point solver and SDPA file export."""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Literal, Protocol

import numpy as np
from pydantic import BaseModel, Field

from .poly import DimensionError
from .sdp import LmiStandardForm, SolveResult, residuals, solve
from .sdpa import SdpaFormatError, import_sdpa_solution, write_sdpa

logger = logging.getLogger(__name__)


class SolverError(RuntimeError):
    """Raised when a backend cannot be configured or its output cannot be used."""


class SolverBackend(Protocol):
    def solve(self, form: LmiStandardForm, label: str) -> SolveResult:
        ...


class SolverSpec(BaseModel):
    type: Literal["embedded", "sdpa-export"] = "embedded"
    gap_tol: float = Field(1e-8, gt=0, description="Relative duality gap tolerance")
    feas_tol: float = Field(1e-8, gt=0, description="Primal/dual infeasibility tolerance")
    max_iter: int = Field(200, gt=0, description="Interior-point iteration limit")
    export_dir: str = Field("reports/sdpa", description="Where sdpa-export writes problem files")

    def label(self) -> str:
        """Human-friendly identifier for tables/logs."""

        if self.type == "embedded":
            return f"embedded(gap={self.gap_tol:g})"
        return f"sdpa-export:{self.export_dir}"


@dataclass
class EmbeddedSolver:
    spec: SolverSpec

    def solve(self, form: LmiStandardForm, label: str) -> SolveResult:
        result = solve(
            form, gap_tol=self.spec.gap_tol, feas_tol=self.spec.feas_tol, max_iter=self.spec.max_iter
        )
        if result.status != "optimal":
            logger.warning("%s: solver finished with status %s (%s)", label, result.status, result.message)
        return result


@dataclass
class SdpaExportSolver:
    """Writes `<label>.dat-s` and reads `<label>.out` back when an external solver has produced it."""

    spec: SolverSpec

    def paths(self, label: str) -> tuple[Path, Path]:
        stem = Path(self.spec.export_dir) / label.replace(":", "_").replace("/", "_")
        return stem.with_suffix(".dat-s"), stem.with_suffix(".out")

    def solve(self, form: LmiStandardForm, label: str) -> SolveResult:
        started = time.perf_counter()
        problem_path, solution_path = self.paths(label)
        write_sdpa(form, problem_path, title=label)
        logger.info("Wrote %s (%d variables, %d blocks)", problem_path, form.num_vars, len(form.blocks))
        if not solution_path.exists():
            return SolveResult(
                "exported",
                np.full(form.num_vars, np.nan),
                math.nan,
                wall_time=time.perf_counter() - started,
                message=f"problem written to {problem_path}; no solution at {solution_path}",
            )
        try:
            y = import_sdpa_solution(solution_path.read_text(), form.num_vars)
        except (SdpaFormatError, DimensionError) as exc:
            raise SolverError(f"Cannot use solution file {solution_path}: {exc}") from exc
        objective = float(form.c @ y)
        eq_residual, eigs = residuals(form, y)
        violation = max(
            float(np.max(np.abs(eq_residual))) if eq_residual.size else 0.0,
            max((-e for e in eigs), default=0.0),
        )
        status = "optimal" if violation <= max(self.spec.feas_tol, 1e-6) else "inaccurate"
        return SolveResult(
            status,
            y,
            objective,
            primal_infeasibility=violation,
            wall_time=time.perf_counter() - started,
            message=f"solution read from {solution_path}",
        )


def build_solver(spec: SolverSpec) -> SolverBackend:
    if spec.type == "embedded":
        return EmbeddedSolver(spec)
    if spec.type == "sdpa-export":
        return SdpaExportSolver(spec)
    raise ValueError(f"Unsupported solver type: {spec.type}")
