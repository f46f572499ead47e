import json
from pathlib import Path
from typing import Any, Dict, List, Optional

import typer
from rich.console import Console
from rich.table import Table
from rich.progress import Progress, SpinnerColumn, TextColumn
from rich.panel import Panel

from .config import settings
from .database import Database
from .errors import ConfigError
from .lab import build_config, load_config, load_summary, run_experiment
from .models import ExperimentConfig, Pipeline, RunSummary

app = typer.Typer(
    name="kgspec",
    help="Klein-Gordon spectral lab - classify coefficients and verify energy, rate and scattering claims",
    add_completion=False
)
console = Console()


def _parse_overrides(pairs: List[str]) -> Dict[str, Any]:
    """dotted.key=value pairs; values parse as JSON with a string fallback."""
    overrides = {}
    for pair in pairs:
        if "=" not in pair:
            raise typer.BadParameter(f"override '{pair}' is not key=value")
        key, raw = pair.split("=", 1)
        try:
            overrides[key.strip()] = json.loads(raw)
        except json.JSONDecodeError:
            overrides[key.strip()] = raw
    return overrides


def _parse_xi_grid(text: str) -> Dict[str, Any]:
    """'min:max:count' for a geometric grid, or a JSON object of xi_grid fields."""
    text = text.strip()
    if text.startswith("{"):
        try:
            fields = json.loads(text)
        except json.JSONDecodeError as e:
            raise typer.BadParameter(f"xi grid is not valid JSON: {e}")
        return {f"xi_grid.{key}": value for key, value in fields.items()}
    parts = text.split(":")
    if len(parts) != 3:
        raise typer.BadParameter(f"xi grid '{text}' is not min:max:count")
    try:
        xi_min, xi_max, count = float(parts[0]), float(parts[1]), int(parts[2])
    except ValueError:
        raise typer.BadParameter(f"xi grid '{text}' is not min:max:count")
    return {"xi_grid.kind": "geometric", "xi_grid.xi_min": xi_min,
            "xi_grid.xi_max": xi_max, "xi_grid.count": count}


def _resolve_config(pipeline: Pipeline, config_file: Optional[str], overrides: Dict[str, Any]) -> ExperimentConfig:
    overrides = {"pipeline": pipeline.value, **overrides}
    if config_file:
        return load_config(config_file, overrides)
    return build_config({}, overrides)


def _print_summary(summary: RunSummary, run_dir: Path):
    table = Table(title=f"Checks - {summary.label}", show_header=True, header_style="bold cyan")
    table.add_column("Check", style="cyan", width=36)
    table.add_column("Status", justify="center")
    table.add_column("Value", justify="right")
    table.add_column("Detail", style="dim")
    for check in summary.checks:
        status = "[green]✓ pass[/green]" if check.passed else "[red]✗ fail[/red]"
        value = "" if check.value is None else f"{check.value:.4g}"
        table.add_row(check.name, status, value, check.detail)
    console.print(table)

    metrics = summary.results.get("metrics", {})
    if metrics:
        metric_table = Table(show_header=True, header_style="bold cyan")
        metric_table.add_column("Metric", style="cyan")
        metric_table.add_column("Value", justify="right")
        for name, value in sorted(metrics.items()):
            metric_table.add_row(name, f"{value:.6g}" if isinstance(value, float) else str(value))
        console.print(metric_table)

    for error in summary.errors:
        console.print(f"[bold red]✗ {error.get('stage')}:[/bold red] {error.get('type')}: {error.get('message')}")

    console.print("\n" + "═" * 60)
    console.print(f"[bold cyan]Run {summary.run_id}[/bold cyan]  {summary.pipeline.value}  "
                  f"{summary.pass_rate:.0f}% of {len(summary.checks)} checks passed")
    console.print(f"[dim]Run directory: {run_dir.absolute()}[/dim]")
    console.print("═" * 60)


def _execute(pipeline: Pipeline, config_file: Optional[str], overrides: Dict[str, Any], save_db: bool):
    try:
        config = _resolve_config(pipeline, config_file, overrides)
    except ConfigError as e:
        console.print(f"[bold red]✗ Error:[/bold red] {e}")
        raise typer.Exit(code=1)

    console.print(Panel.fit(
        f"[bold cyan]{config.pipeline.value.capitalize()} pipeline[/bold cyan]\n"
        f"Label: {config.label}\n"
        f"Profile: {config.profile.speed} / {config.profile.mass}\n"
        f"Horizon: {config.t_max:g}",
        border_style="cyan"
    ))

    db = Database(settings.database_path) if save_db else None
    with Progress(
        SpinnerColumn(),
        TextColumn("[progress.description]{task.description}"),
        console=console
    ) as progress:
        task = progress.add_task(f"Running {config.pipeline.value}...", total=None)
        run_dir = run_experiment(config, db=db)
        progress.update(task, completed=True)

    summary = load_summary(run_dir)
    _print_summary(summary, run_dir)
    if summary.passed:
        console.print("\n[bold green]✓ All checks passed![/bold green]\n")
        raise typer.Exit(code=0)
    console.print("\n[bold yellow]⚠ Run completed with failed checks or errors[/bold yellow]\n")
    raise typer.Exit(code=1)


CONFIG_OPTION = typer.Option(None, "--config", "-c", help="Experiment config file")
SET_OPTION = typer.Option([], "--set", "-s", help="Override a config key, e.g. profile.params.p=2")
DB_OPTION = typer.Option(True, "--save-db/--no-save-db", help="Index the run in the database")
OUT_OPTION = typer.Option(None, "--out", "-o", help="Output root for the run directory")


@app.command(name="run")
def run_command(
    config_file: str = typer.Argument(..., help="Experiment config file"),
    overrides: List[str] = SET_OPTION,
    save_db: bool = DB_OPTION,
):
    """
    Run the pipeline named in a config file.

    Example:
        python -m kgspec.cli run configs/classify_scattering.cfg
    """
    try:
        config = load_config(config_file, _parse_overrides(overrides))
    except ConfigError as e:
        console.print(f"[bold red]✗ Error:[/bold red] {e}")
        raise typer.Exit(code=1)
    _execute(config.pipeline, config_file, _parse_overrides(overrides), save_db)


@app.command(name="classify")
def classify_command(
    speed: str = typer.Option("unit", "--speed", help="Speed family"),
    mass: str = typer.Option("zero", "--mass", help="Mass family"),
    t_max: float = typer.Option(1e4, "--t-max", "--tmax", help="Classification horizon"),
    config_file: Optional[str] = CONFIG_OPTION,
    overrides: List[str] = SET_OPTION,
    save_db: bool = DB_OPTION,
):
    """Classify a coefficient pair and check its hypotheses."""
    base = {} if config_file else {"profile.speed": speed, "profile.mass": mass, "t_max": t_max}
    _execute(Pipeline.CLASSIFY, config_file, {**base, **_parse_overrides(overrides)}, save_db)


@app.command(name="simulate")
def simulate_command(
    speed: str = typer.Option("unit", "--speed", help="Speed family"),
    mass: str = typer.Option("constant", "--mass", help="Mass family"),
    t_max: float = typer.Option(100.0, "--t-max", "--tmax", help="Horizon"),
    xi_grid: Optional[str] = typer.Option(None, "--xi-grid", help="min:max:count or a JSON xi_grid object"),
    out: Optional[str] = OUT_OPTION,
    config_file: Optional[str] = CONFIG_OPTION,
    overrides: List[str] = SET_OPTION,
    save_db: bool = DB_OPTION,
):
    """Mode sweep with energy series and rate fits."""
    base: Dict[str, Any] = {} if config_file else {"profile.speed": speed, "profile.mass": mass, "t_max": t_max}
    if xi_grid:
        base.update(_parse_xi_grid(xi_grid))
    if out:
        base["output_dir"] = out
    _execute(Pipeline.SIMULATE, config_file, {**base, **_parse_overrides(overrides)}, save_db)


@app.command(name="rates")
def rates_command(
    alpha: Optional[float] = typer.Option(None, "--alpha", help="Scale-invariant alpha"),
    mu: Optional[float] = typer.Option(None, "--mu", help="Scale-invariant mass constant"),
    ell: Optional[float] = typer.Option(None, "--ell", help="Polynomial speed exponent"),
    mu_tilde: Optional[float] = typer.Option(None, "--mu-tilde", help="Mass constant for polynomial speed"),
    q: Optional[float] = typer.Option(None, "--q", help="Lebesgue exponent of the data norm, 1 <= q <= 2"),
    kappa: Optional[float] = typer.Option(None, "--kappa", help="Derivative order in [0, 1]"),
    n: Optional[int] = typer.Option(None, "--n", help="Space dimension"),
    verify: bool = typer.Option(True, "--verify/--predict-only", help="Run the numerical verification"),
    config_file: Optional[str] = CONFIG_OPTION,
    overrides: List[str] = SET_OPTION,
    save_db: bool = DB_OPTION,
):
    """Predict and verify decay rates of a scale-invariant model."""
    base = {"rates.alpha": alpha, "rates.mu": mu, "rates.ell": ell, "rates.mu_tilde": mu_tilde,
            "rates.q": q, "rates.kappa": kappa, "rates.n": n}
    base = {k: v for k, v in base.items() if v is not None}
    base["rates.verify"] = verify
    _execute(Pipeline.RATES, config_file, {**base, **_parse_overrides(overrides)}, save_db)


@app.command(name="scatter")
def scatter_command(
    eps: Optional[float] = typer.Option(None, "--eps", help="Low-frequency cutoff"),
    xi_grid: Optional[str] = typer.Option(None, "--xi-grid", help="min:max:count or a JSON xi_grid object"),
    out: Optional[str] = OUT_OPTION,
    config_file: Optional[str] = CONFIG_OPTION,
    overrides: List[str] = SET_OPTION,
    save_db: bool = DB_OPTION,
):
    """Wave operators and asymptotic equivalence for a scattering pair."""
    base: Dict[str, Any] = {"scatter.eps": eps, "output_dir": out}
    if xi_grid:
        base.update(_parse_xi_grid(xi_grid))
    base = {k: v for k, v in base.items() if v is not None}
    _execute(Pipeline.SCATTER, config_file, {**base, **_parse_overrides(overrides)}, save_db)


@app.command(name="semilinear")
def semilinear_command(
    n: int = typer.Option(2, "--n", help="Space dimension"),
    p: float = typer.Option(2.0, "--p", help="Power of the nonlinearity"),
    m: float = typer.Option(1.0, "--m", help="Mass"),
    eps: float = typer.Option(1e-3, "--eps", help="Size of the data"),
    horizon: float = typer.Option(8.0, "--horizon", help="Final time"),
    config_file: Optional[str] = CONFIG_OPTION,
    overrides: List[str] = SET_OPTION,
    save_db: bool = DB_OPTION,
):
    """Small-data solution of the semilinear equation in de Sitter scaling."""
    base = {} if config_file else {"semilinear.n": n, "semilinear.p": p, "semilinear.m": m,
                                   "semilinear.eps": eps, "t_max": horizon}
    _execute(Pipeline.SEMILINEAR, config_file, {**base, **_parse_overrides(overrides)}, save_db)


@app.command(name="verify")
def verify_command(
    config_file: Optional[str] = CONFIG_OPTION,
    save_db: bool = DB_OPTION,
):
    """Built-in verification suite."""
    _execute(Pipeline.VERIFY, config_file, {}, save_db)


@app.command(name="runs")
def runs_command(
    pipeline: Optional[str] = typer.Option(None, "--pipeline", "-p", help="Only this pipeline"),
):
    """List indexed runs."""
    db = Database(settings.database_path)
    runs = db.get_all_runs(pipeline)
    if not runs:
        console.print("[dim]No runs recorded[/dim]")
        raise typer.Exit(code=0)
    table = Table(title="Runs", show_header=True, header_style="bold cyan")
    table.add_column("Run", style="cyan")
    table.add_column("Pipeline")
    table.add_column("Label")
    table.add_column("Status", justify="center")
    table.add_column("Created", style="dim")
    for run in runs:
        status = "[green]✓[/green]" if run['passed'] else "[red]✗[/red]"
        table.add_row(run['run_id'], run['pipeline'], run['label'], status, str(run['created_at']))
    console.print(table)


@app.command(name="info")
def info_command():
    """Show settings and database status."""
    console.print(Panel.fit(
        "[bold cyan]kgspec System Information[/bold cyan]",
        border_style="cyan"
    ))

    table = Table(show_header=False, box=None, padding=(0, 2))
    table.add_column("Property", style="cyan")
    table.add_column("Value")

    table.add_row("Database", settings.database_path)
    table.add_row("Output Root", settings.output_root)
    table.add_row("API Host", f"{settings.api_host}:{settings.api_port}")
    table.add_row("ODE Tolerances", f"rtol {settings.ode_rtol:g}, atol {settings.ode_atol:g}")
    table.add_row("Zone Constant N", f"{settings.zone_N:g}")
    table.add_row("Fit Gate", f"{settings.fit_gate:g}")
    table.add_row("Log Level", settings.log_level)

    console.print(table)

    try:
        stats = Database(settings.database_path).get_stats()
        console.print(f"\n[cyan]Database contains {stats['total_runs']} run(s), "
                      f"{stats['passed_runs']} passed[/cyan]")
    except Exception:
        console.print("\n[dim]Database not initialized[/dim]")

    console.print()


if __name__ == "__main__":
    app()
