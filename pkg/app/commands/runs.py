import logging
from pathlib import Path
from typing import Optional

import click

from app.commands.options import run_and_report, wedge_options
from app.schemas.run_schema import OracleRequest
from app.services import config_service, run_store_service

logger = logging.getLogger(__name__)


@click.command("oracle")
@wedge_options
@click.option("--source", nargs=2, type=int, required=True, help="Source site x y.")
@click.option("--sites", "sites_file", type=click.Path(dir_okay=False), default=None,
              help="Absorbing set as an x,y file (default: dW^{ring radius}).")
@click.option("--ring-radius", type=float, default=4.0, show_default=True)
@click.option("--truncation", type=float, default=64.0, show_default=True)
def oracle(theta1, theta2, seed, workers, out: Optional[Path], source, sites_file, ring_radius, truncation):
    """Exact hit distribution of one source, written as hit_distribution.csv."""
    run_and_report(OracleRequest(theta1=theta1, theta2=theta2, seed=seed, workers=workers,
                                 source_x=source[0], source_y=source[1], sites_file=sites_file,
                                 ring_radius=ring_radius, truncation=truncation), out)


@click.command("run")
@click.argument("config", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--out", type=click.Path(path_type=Path), default=None)
def run(config: Path, out: Optional[Path]):
    """Execute a key=value run description."""
    request = config_service.parse_config(config.read_text(encoding="utf-8"))
    logger.info(f"Loaded {request.command} run from {config}")
    run_and_report(request, out)


@click.command("replay")
@click.argument("run_dir", type=click.Path(file_okay=False, path_type=Path))
@click.option("--workers", type=int, default=None, help="Worker threads for the re-execution.")
def replay(run_dir: Path, workers: Optional[int]):
    """Re-execute a recorded run and compare every output byte for byte."""
    report = run_store_service.replay(run_dir, workers)
    click.echo(f"replay: {report.files_checked} outputs identical")


COMMANDS = [oracle, run, replay]
