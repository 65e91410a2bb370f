from pathlib import Path
from typing import Optional

import click

from app.commands.options import run_and_report, wedge_options
from app.schemas.run_schema import GrowRequest


@click.command("grow")
@wedge_options
@click.option("--particles", type=int, required=True)
@click.option("--start-factor", type=float, default=8.0, show_default=True)
@click.option("--escape-factor", type=float, default=4.0, show_default=True)
@click.option("--jump-k-max", type=int, default=64, show_default=True)
@click.option("--max-restarts", type=int, default=10000, show_default=True)
@click.option("--exponent", type=float, default=None, help="Dial exponent (default: the stronger one).")
@click.option("--consistency-samples", type=int, default=0, help="Samples for the R_s doubling diagnostic.")
def grow(theta1: str, theta2: str, seed: int, workers: Optional[int], out: Optional[Path], particles: int,
         start_factor: float, escape_factor: float, jump_k_max: int, max_restarts: int,
         exponent: Optional[float], consistency_samples: int):
    """Grow a DLA aggregate in the wedge and write aggregate.csv with its stabilization table."""
    request = GrowRequest(theta1=theta1, theta2=theta2, seed=seed, workers=workers, particles=particles,
                          start_factor=start_factor, escape_factor=escape_factor, jump_k_max=jump_k_max,
                          max_restarts=max_restarts, exponent=exponent, consistency_samples=consistency_samples)
    run_and_report(request, out)
