# Copyright 2025 Nic Cravino. All rights reserved.
# SPDX-License-Identifier: Apache-2.0

"""Command-line interface for momentvv."""

from __future__ import annotations

import logging
from pathlib import Path
from typing import Optional

import typer
import yaml
from rich.console import Console
from rich.logging import RichHandler
from rich.panel import Panel
from rich.table import Table

from .aero import ConfigError
from .backends import SolverError
from .cases import CaseLibrary
from .f16mrac import ModelError
from .relax import RelaxationOrderError
from .runner import (
    VERDICT_EXIT_CODES,
    RunConfig,
    ValidationRunner,
    overall_verdict,
    render_table,
    write_reports,
)

app = typer.Typer(help="Moment-LMI verification of adaptive flight control laws (momentvv)")
cases_app = typer.Typer(help="Inspect bundled validation cases")
app.add_typer(cases_app, name="cases")
console = Console()

USAGE_EXIT_CODE = 3


def _configure_logging(verbose: bool) -> None:
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(message)s",
        handlers=[RichHandler(console=console, show_path=False)],
        force=True,
    )


@cases_app.command("list")
def list_cases():
    library = CaseLibrary()
    table = Table(title="Bundled cases")
    table.add_column("Name")
    table.add_column("Model")
    table.add_column("Horizon [s]", justify="right")
    table.add_column("Description")
    for name, case in library.library.items():
        table.add_row(name, case.model, f"{case.horizon:g}", case.description)
    console.print(table)


@app.command()
def init(output: Path = typer.Option(Path("config/example_run.yaml"), help="Path for sample config")):
    """Generate a sample run config."""

    sample = RunConfig(case="surrogate", mode="verify", d_max=3).model_dump()
    output.parent.mkdir(parents=True, exist_ok=True)
    output.write_text(yaml.safe_dump(sample, sort_keys=False))
    console.print(Panel.fit(f"Sample config at {output}\nRun it with: momentvv run --config {output}"))


@app.command("run")
def run(
    config_path: Optional[Path] = typer.Option(
        None, "--config", "-c", exists=True, help="RunConfig YAML; flags below override it"
    ),
    case: Optional[str] = typer.Option(None, "--case", help="Bundled case name or case YAML"),
    aero: Optional[str] = typer.Option(None, "--aero", envvar="MOMENTVV_AERO", help="Aerodynamic data file"),
    mode: Optional[str] = typer.Option(None, "--mode", help="verify | simulate | compare | export-sdp"),
    d_max: Optional[int] = typer.Option(None, "--dmax", help="Highest relaxation order"),
    variant: Optional[str] = typer.Option(None, "--variant", help="lqr | lqr+mrac"),
    out: Optional[str] = typer.Option(None, "--out", envvar="MOMENTVV_OUT", help="Report path stem"),
    grid: Optional[int] = typer.Option(None, "--grid", help="Grid points per swept dimension"),
    step: Optional[float] = typer.Option(None, "--step", help="Integration step [s]"),
    integrator: Optional[str] = typer.Option(None, "--integrator", help="rk4 | euler"),
    gap_tol: Optional[float] = typer.Option(None, "--gap-tol", help="Solver duality gap tolerance"),
    alr_sign: Optional[int] = typer.Option(None, "--alr-sign", help="Override the ALR sign (+1 or -1)"),
    workers: Optional[int] = typer.Option(None, "--workers", help="Concurrent solves / variants"),
    verbose: bool = typer.Option(False, "--verbose", "-v", help="Debug logging"),
):
    """Run a verification, simulation, comparison or SDPA export."""

    _configure_logging(verbose)
    try:
        config = RunConfig.from_yaml(config_path) if config_path else RunConfig()
        overrides = {
            "case": case,
            "aero": aero,
            "mode": mode,
            "d_max": d_max,
            "variant": variant,
            "output": out,
            "alr_sign": alr_sign,
            "workers": workers,
        }
        data = config.model_dump()
        data.update({k: v for k, v in overrides.items() if v is not None})
        sim = {"grid": grid, "step": step, "integrator": integrator}
        data["sim"].update({k: v for k, v in sim.items() if v is not None})
        if gap_tol is not None:
            data["solver"]["gap_tol"] = gap_tol
        config = RunConfig(**data)

        runner = ValidationRunner(config)
        reports = runner.run()
    except (ConfigError, ModelError, RelaxationOrderError, SolverError, KeyError, ValueError) as exc:
        console.print(f"[red]Error:[/red] {exc}")
        raise typer.Exit(code=USAGE_EXIT_CODE) from exc

    console.print(render_table(reports))
    for report in reports:
        for line in report.diagnostics:
            console.print(f"[yellow]{report.variant}: {line}[/yellow]")
    text_path, yaml_path = write_reports(reports, Path(config.output))
    verdict = overall_verdict(reports)
    colour = {"validated": "green", "not-validated": "red"}.get(verdict, "yellow")
    console.print(
        Panel.fit(f"Verdict: [{colour}]{verdict}[/{colour}]\nTable: {text_path}\nReport: {yaml_path}")
    )
    raise typer.Exit(code=VERDICT_EXIT_CODES[verdict])


if __name__ == "__main__":
    app()
