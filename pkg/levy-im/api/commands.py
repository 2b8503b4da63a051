"""
Command definitions: run, validate and show-defaults
"""
import logging
import time
from pathlib import Path
from typing import Callable, Dict, List, Optional

import typer
from rich.console import Console
from rich.table import Table

from core.config import sim_config
from core.errors import EXIT_OK, LevyIMError
from core.models import ExperimentConfig, Manifest
from services.dynamics_service import dynamics_service
from services.manifold_service import manifold_service
from services.noise_service import noise_service
from services.ou_service import ou_service
from services.spectral_service import spectral_service
from utils.artifacts import apply_overrides, config_hash, dump_config, load_config, write_manifest
from api.middleware import exit_code_for, handle_errors
from utils.logging_setup import configure_logging

logger = logging.getLogger(__name__)

console = Console()

ExperimentRunner = Callable[[ExperimentConfig, Path, bool], List[Path]]

EXPERIMENTS: Dict[str, ExperimentRunner] = {
    "noise-stats": noise_service.run_noise_stats,
    "ou-converge": ou_service.run_ou_converge,
    "check-gap": spectral_service.run_check_gap,
    "integrate": dynamics_service.run_integrate,
    "converge-solutions": dynamics_service.run_converge_solutions,
    "solve-manifold": manifold_service.run_solve_manifold,
    "d-psi-check": manifold_service.run_d_psi_check,
    "track-defect": manifold_service.run_track_defect,
    "converge-manifolds": manifold_service.run_converge_manifolds,
}

MANIFOLD_EXPERIMENTS = {"solve-manifold", "d-psi-check", "track-defect", "converge-manifolds"}

MONTE_CARLO_EXPERIMENTS = {"ou-converge", "converge-solutions", "converge-manifolds"}


def run_seeds(config: ExperimentConfig) -> List[int]:
    seed = config.noise.seed
    if config.experiment in MONTE_CARLO_EXPERIMENTS:
        return list(range(seed, seed + config.noise.n_seeds))
    return [seed]


def execute(config: ExperimentConfig, progress: bool = False) -> Manifest:
    """
    Run one experiment and write its artifacts plus manifest.json.

    The manifest is written for failed runs too, with the exit status of the failure.
    """
    out_dir = Path(config.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "config.toml").write_text(dump_config(config), encoding="utf-8")
    logger.info(f"Starting experiment {config.experiment} -> {out_dir}")

    started = time.perf_counter()
    artifacts: List[Path] = []
    status = EXIT_OK
    extra = {}
    try:
        if config.experiment in MANIFOLD_EXPERIMENTS:
            spectral_service.require_gap(config)
        artifacts = EXPERIMENTS[config.experiment](config, out_dir, progress)
    except LevyIMError as e:
        status = e.exit_code
        extra = e.to_dict()
        raise
    except Exception as e:
        status = exit_code_for(e)
        extra = {"error": str(e), "error_type": type(e).__name__}
        raise
    finally:
        manifest = Manifest(
            experiment=config.experiment,
            config_hash=config_hash(config),
            code_version=sim_config.code_version,
            seeds=run_seeds(config),
            wall_time=time.perf_counter() - started,
            artifacts=sorted(str(p.relative_to(out_dir)) for p in artifacts),
            exit_status=status,
            extra=extra,
        )
        write_manifest(manifest, out_dir)
    logger.info(f"Finished {config.experiment} in {manifest.wall_time:.2f}s ({len(artifacts)} artifacts)")
    return manifest


def create_commands(app: typer.Typer) -> None:
    """Register all CLI commands"""

    @app.command()
    @handle_errors
    def run(
        config: Path = typer.Option(..., "--config", "-c", help="TOML experiment config"),
        out: Optional[Path] = typer.Option(None, "--out", "-o", help="Output directory"),
        threads: Optional[int] = typer.Option(None, "--threads", "-j", help="Worker count"),
        seed: Optional[int] = typer.Option(None, "--seed", help="Base seed override"),
        quiet: bool = typer.Option(False, "--quiet", "-q", help="Warnings and errors only, no progress bars"),
    ):
        """Run the experiment described by a config file"""
        if quiet:
            configure_logging(sim_config.log_level, quiet=True)
        loaded = load_config(config)
        loaded = apply_overrides(loaded, {
            "output_dir": str(out) if out is not None else None,
            "threads": threads,
            "noise.seed": seed,
        })
        execute(loaded, progress=not quiet)

    @app.command()
    @handle_errors
    def validate(
        config: Path = typer.Option(..., "--config", "-c", help="TOML experiment config"),
    ):
        """Parse and validate a config; manifold experiments also get the gap check"""
        loaded = load_config(config)
        report = spectral_service.gap_report(loaded)

        table = Table(title=f"{config} ({loaded.experiment})")
        table.add_column("check")
        table.add_column("value")
        table.add_row("config hash", config_hash(loaded)[:16])
        table.add_row("gap lhs / rhs", f"{report.lhs:.6g} / {report.rhs:.6g}")
        table.add_row("gap satisfied", str(report.satisfied))
        table.add_row("beta", f"{report.beta:.6g}")
        console.print(table)

        if loaded.experiment in MANIFOLD_EXPERIMENTS:
            spectral_service.require_gap(loaded)
        console.print("[green]config ok[/green]")

    @app.command("show-defaults")
    def show_defaults():
        """Print the default config as TOML"""
        typer.echo(dump_config(ExperimentConfig()))
