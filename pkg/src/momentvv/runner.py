# Copyright 2025 Nic Cravino. All rights reserved.
# SPDX-License-Identifier: Apache-2.0

"""Run configuration and the validation engine behind `momentvv run`."""

from __future__ import annotations

import io
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Sequence, Tuple

import numpy as np
import yaml
from pydantic import BaseModel, Field, ValidationError
from rich.console import Console
from rich.table import Table

from . import relax
from .aero import AeroCoeffs, ConfigError, load_aero
from .backends import SolverBackend, SolverSpec, build_solver
from .cases import CaseLibrary, CaseSpec, build_closed_loop
from .dynamics import ClosedLoop
from .mc import McReport, SimConfig, integrate, sweep
from .relax import BoundEntry, BoundSequence, SolveStatusError
from .run_logger import RunLogger, TrajectoryDump
from .sdp import lower

logger = logging.getLogger(__name__)
console = Console()

Mode = Literal["verify", "simulate", "compare", "export-sdp"]
Variant = Literal["lqr", "lqr+mrac"]
Verdict = Literal["validated", "not-validated", "inconclusive"]

VERDICT_EXIT_CODES: Dict[str, int] = {"validated": 0, "not-validated": 1, "inconclusive": 2}
DEGRADED = ("inaccurate", "iteration-limit", "exported")

NO_GAP_ASSUMPTION = (
    "Bounds assume no relaxation gap between the measure LP and the trajectory problem; "
    "B_d = -J_d bounds the worst squared terminal error only under that assumption."
)


class RunConfig(BaseModel):
    case: str = Field("surrogate", description="Bundled case name or case YAML path")
    aero: str = Field("config/aero/morelli_f16.txt", description="Aerodynamic data file")
    mode: Mode = "verify"
    d_max: int = Field(3, ge=1, description="Highest relaxation order")
    variant: Variant = "lqr+mrac"
    alr_sign: Optional[Literal[1, -1]] = Field(None, description="Override the case's ALR sign")
    test_family: Literal["fitting", "graded"] = "fitting"
    solver: SolverSpec = Field(default_factory=SolverSpec)
    sim: SimConfig = Field(default_factory=SimConfig)
    output: str = Field("reports/momentvv", description="Report path stem (.txt table, .yaml twin)")
    log_solves: bool = False
    dump_trajectory: bool = False
    workers: int = Field(1, ge=1, description="Concurrent solves / variants")

    @classmethod
    def from_yaml(cls, path: Path) -> "RunConfig":
        path = Path(path)
        try:
            data = yaml.safe_load(path.read_text())
        except (OSError, yaml.YAMLError) as exc:
            raise ConfigError(f"Cannot read run config {path}: {exc}") from exc
        try:
            return cls(**(data or {}))
        except ValidationError as exc:
            raise ConfigError(f"Invalid run config {path}: {exc}") from exc


@dataclass
class ValidationReport:
    case: str
    variant: str
    mode: str
    threshold: float
    bounds: BoundSequence = field(default_factory=BoundSequence)
    mc: Optional[McReport] = None
    verdict: Verdict = "inconclusive"
    assumptions: List[str] = field(default_factory=list)
    diagnostics: List[str] = field(default_factory=list)
    heuristic_x0: Optional[Dict[str, float]] = None

    def as_dict(self) -> Dict[str, Any]:
        return {
            "case": self.case,
            "variant": self.variant,
            "mode": self.mode,
            "threshold": self.threshold,
            "verdict": self.verdict,
            "bounds": [
                {
                    "order": e.order,
                    "bound": _plain(e.bound),
                    "status": e.status,
                    "inexact": e.inexact,
                    "gap": _plain(e.gap),
                    "iterations": e.iterations,
                    "cpu_seconds": round(e.wall_time, 3),
                }
                for e in self.bounds.entries
            ],
            "monte_carlo": None if self.mc is None else {k: _plain(v) for k, v in self.mc.as_dict().items()},
            "heuristic_initial_condition": self.heuristic_x0,
            "assumptions": list(self.assumptions),
            "diagnostics": list(self.diagnostics),
        }


def _plain(value: Any) -> Any:
    if isinstance(value, (float, np.floating)):
        return float(value)
    return value


def decide_verdict(report: ValidationReport) -> Verdict:
    """validated iff the final bound is at most the threshold with an optimal solve."""
    final = report.bounds.final
    if final is not None:
        if final.status in DEGRADED:
            return "inconclusive"
        if final.status != "optimal":
            return "not-validated"
        return "validated" if final.bound <= report.threshold else "not-validated"
    if report.mc is not None and (report.mc.diverged or report.mc.j_mc > report.threshold):
        return "not-validated"
    return "inconclusive"


def overall_verdict(reports: Sequence[ValidationReport]) -> Verdict:
    verdicts = {r.verdict for r in reports}
    if "not-validated" in verdicts:
        return "not-validated"
    if verdicts == {"validated"}:
        return "validated"
    return "inconclusive"


@dataclass
class ValidationRunner:
    config: RunConfig
    library: CaseLibrary = field(default_factory=CaseLibrary)
    solver: SolverBackend = field(init=False)
    run_logger: Optional[RunLogger] = field(init=False, default=None)

    def __post_init__(self) -> None:
        spec = self.config.solver
        if self.config.mode == "export-sdp" and spec.type != "sdpa-export":
            spec = spec.model_copy(update={"type": "sdpa-export"})
        self.solver = build_solver(spec)
        if self.config.log_solves:
            log_path = Path(f"{self.config.output}_solves.ndjson")
            self.run_logger = RunLogger(log_path, enabled=True)
            console.print(f"[yellow]Solve logging enabled: {log_path}[/yellow]")

    # --------------------------------------------------------------- loading
    def load_case(self) -> Tuple[CaseSpec, Optional[AeroCoeffs]]:
        case = self.library.resolve(self.config.case)
        aero = load_aero(Path(self.config.aero)) if case.model == "f16" else None
        return case, aero

    def variants(self) -> List[Variant]:
        if self.config.mode == "compare":
            return ["lqr", "lqr+mrac"]
        return [self.config.variant]

    # ---------------------------------------------------------------- solves
    def solve_order(self, loop: ClosedLoop, d: int) -> Tuple[BoundEntry, Optional[np.ndarray], str]:
        started = time.perf_counter()
        running = None if loop.running_cost.is_zero() else loop.running_cost
        problem = relax.build(loop.system, loop.terminal_cost, running, d, self.config.test_family)
        form = lower(problem)
        label = f"{loop.name}_{loop.variant}_d{d}"
        result = self.solver.solve(form, label)
        diagnostic = ""
        try:
            bound = relax.extract_bound(problem, result)
        except SolveStatusError as exc:
            bound = math.nan
            diagnostic = f"order {d}: {exc}"
        entry = BoundEntry(
            order=d,
            bound=bound,
            status=result.status,
            wall_time=time.perf_counter() - started,
            gap=result.gap,
            iterations=result.iterations,
        )
        if self.run_logger is not None:
            self.run_logger.log_solve(
                loop.name,
                loop.variant,
                d,
                {
                    "status": result.status,
                    "bound": bound,
                    "gap": result.gap,
                    "iterations": result.iterations,
                    "wall_time": entry.wall_time,
                },
                metadata={"moments": problem.size, "equalities": len(problem.equalities)},
            )
        y = result.y if result.status in ("optimal", "inaccurate") else None
        x0 = None
        if y is not None:
            z0 = relax.heuristic_initial_condition(problem, y)
            nm = loop.system.normalization
            x0 = z0 if nm is None else nm.denormalize_state(z0)
        return entry, x0, diagnostic

    def bound_sequence(self, loop: ClosedLoop, report: ValidationReport) -> None:
        running = None if loop.running_cost.is_zero() else loop.running_cost
        first = relax.minimum_order(loop.system, loop.terminal_cost, running)
        orders = list(range(first, self.config.d_max + 1))
        if first > 1:
            report.diagnostics.append(f"orders below {first} cannot index the problem data")
        if not orders:
            report.diagnostics.append(f"d_max {self.config.d_max} is below the minimum order {first}")
            return
        if self.config.workers > 1 and len(orders) > 1:
            with ThreadPoolExecutor(max_workers=self.config.workers) as pool:
                outcomes = list(pool.map(lambda d: self.solve_order(loop, d), orders))
        else:
            outcomes = [self.solve_order(loop, d) for d in orders]
        for entry, x0, diagnostic in outcomes:
            report.bounds.add(entry)
            if diagnostic:
                report.diagnostics.append(diagnostic)
            if x0 is not None and entry.order == orders[-1]:
                report.heuristic_x0 = {name: float(v) for name, v in zip(loop.system.states, x0)}
        if not report.bounds.is_monotone():
            report.diagnostics.append("bound sequence is not monotone across optimal solves")

    # ------------------------------------------------------------------- run
    def run_variant(self, case: CaseSpec, aero: Optional[AeroCoeffs], variant: Variant) -> ValidationReport:
        loop = build_closed_loop(case, variant, aero, alr_sign=self.config.alr_sign)
        report = ValidationReport(
            case=case.name,
            variant=loop.variant,
            mode=self.config.mode,
            threshold=case.terminal_threshold,
            assumptions=[NO_GAP_ASSUMPTION],
        )
        if case.model == "f16":
            report.assumptions.append(f"aerodynamic data: {self.config.aero}")
        if self.config.mode in ("verify", "compare", "export-sdp"):
            self.bound_sequence(loop, report)
            if report.heuristic_x0 is not None:
                report.assumptions.append(
                    "heuristic_initial_condition is the mean of the initial measure, not a certified maximizer"
                )
        if self.config.mode in ("simulate", "compare"):
            report.mc = sweep(loop, self.config.sim)
            if self.config.dump_trajectory and report.mc.argmax is not None:
                dump = TrajectoryDump(
                    Path(f"{self.config.output}_{loop.variant}_trajectory.txt"), loop.raw.states
                )
                traj = integrate(loop.system, report.mc.argmax, self.config.sim)
                dump.write(f"{case.name} {loop.variant} argmax", traj.times, traj.states, traj.cells)
        report.verdict = decide_verdict(report)
        return report

    def run(self) -> List[ValidationReport]:
        case, aero = self.load_case()
        variants = self.variants()
        if self.config.workers > 1 and len(variants) > 1:
            with ThreadPoolExecutor(max_workers=len(variants)) as pool:
                reports = list(pool.map(lambda v: self.run_variant(case, aero, v), variants))
        else:
            reports = [self.run_variant(case, aero, v) for v in variants]
        return reports


# -------------------------------------------------------------------- output
def _bound_cell(entry: Optional[BoundEntry]) -> str:
    if entry is None:
        return ""
    text = "n/a" if math.isnan(entry.bound) else f"{entry.bound:.5g}"
    return text if entry.status == "optimal" else f"{text} ({entry.status})"


def render_table(reports: Sequence[ValidationReport]) -> str:
    """Rel Ord / Upper Bnd J / CPU [s] per controller variant, side by side."""
    title = f"Upper bounds: {reports[0].case}" if reports else "Upper bounds"
    table = Table(title=title)
    table.add_column("Rel Ord", justify="right")
    for report in reports:
        label = report.variant.upper()
        table.add_column(f"{label} Upper Bnd J", justify="right")
        table.add_column(f"{label} CPU [s]", justify="right")
    orders = sorted({e.order for r in reports for e in r.bounds.entries})
    for d in orders:
        row = [str(d)]
        for report in reports:
            entry = next((e for e in report.bounds.entries if e.order == d), None)
            row.append(_bound_cell(entry))
            row.append("" if entry is None else f"{entry.wall_time:.2f}")
        table.add_row(*row)
    for name, pick in (
        ("Monte-Carlo J", lambda r: "" if r.mc is None else f"{r.mc.j_mc:.5g}"),
        ("Diverged", lambda r: "" if r.mc is None else f"{r.mc.diverged}/{r.mc.total}"),
        ("Verdict", lambda r: r.verdict),
    ):
        if name != "Verdict" and all(r.mc is None for r in reports):
            continue
        row = [name]
        for report in reports:
            row.extend([pick(report), ""])
        table.add_row(*row)

    recorder = Console(record=True, width=40 + 36 * max(1, len(reports)), file=io.StringIO())
    recorder.print(table)
    return recorder.export_text()


def reports_as_dict(reports: Sequence[ValidationReport]) -> Dict[str, Any]:
    return {
        "verdict": overall_verdict(reports),
        "reports": [report.as_dict() for report in reports],
    }


def write_reports(reports: Sequence[ValidationReport], stem: Path) -> Tuple[Path, Path]:
    """Write `<stem>.txt` (the table) and its machine-readable twin `<stem>.yaml`."""
    stem = Path(stem)
    stem.parent.mkdir(parents=True, exist_ok=True)
    text_path = stem.with_name(stem.name + ".txt")
    yaml_path = stem.with_name(stem.name + ".yaml")
    text_path.write_text(render_table(reports))
    yaml_path.write_text(yaml.safe_dump(reports_as_dict(reports), sort_keys=False))
    return text_path, yaml_path
