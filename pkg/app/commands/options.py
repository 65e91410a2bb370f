import logging
from pathlib import Path
from typing import Optional

import click

from app.core import errors
from app.schemas.run_schema import RunRequest
from app.services import run_store_service

logger = logging.getLogger(__name__)


def wedge_options(command):
    """--theta1/--theta2 as exact p/q slopes (decimals are radians), plus seed, workers and output dir."""
    command = click.option("--out", type=click.Path(path_type=Path), default=None,
                           help="Run directory (default: a fresh one under OUTPUT_ROOT).")(command)
    command = click.option("--workers", type=int, default=None, help="Worker threads for trials.")(command)
    command = click.option("--seed", type=int, default=0, show_default=True)(command)
    command = click.option("--theta2", default="1/1", show_default=True, help="Upper slope p/q.")(command)
    command = click.option("--theta1", default="0/1", show_default=True, help="Lower slope p/q.")(command)
    return command


def run_and_report(request: RunRequest, out: Optional[Path]) -> None:
    """Execute a request, print where it went, and exit 1 when an embedded check failed."""
    run_dir = out or run_store_service.new_run_dir(request.command, request.seed)
    manifest = run_store_service.execute(request, run_dir)
    for name, ok in sorted(manifest.checks.items()):
        click.echo(f"  [{'ok' if ok else 'FAILED'}] {name}")
    click.echo(f"{manifest.command}: {len(manifest.outputs)} outputs written to {run_dir}")
    if not manifest.passed:
        failed = [name for name, ok in manifest.checks.items() if not ok]
        logger.error(f"Run {run_dir} failed checks: {', '.join(sorted(failed))}")
        click.get_current_context().exit(errors.EXIT_CHECK_FAILED)
