import logging
from typing import Callable, List, Tuple, Type

import click
from pydantic import ValidationError

from app.commands import dla, estimates, runs
from app.core import errors, exceptions
from app.core.config import settings


class WedgeDLAGroup(click.Group):
    """Click group that turns domain exceptions into exit codes through registered handlers."""

    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)
        self._handlers: List[Tuple[Type[Exception], Callable[[Exception], int]]] = []

    def add_exception_handler(self, exc_class: Type[Exception], handler: Callable[[Exception], int]) -> None:
        self._handlers.append((exc_class, handler))

    def invoke(self, ctx: click.Context):
        try:
            return super().invoke(ctx)
        except (exceptions.WedgeDLAException, ValidationError) as exc:
            for exc_class, handler in self._handlers:
                if isinstance(exc, exc_class):
                    ctx.exit(handler(exc))
            raise


@click.group(cls=WedgeDLAGroup)
@click.version_option(settings.PROJECT_VERSION, prog_name=settings.PROJECT_NAME)
@click.option("--log-level", default=None, help="Overrides LOG_LEVEL.")
def cli(log_level):
    """DLA growth and harmonic-measure estimates in lattice wedges."""
    logging.basicConfig(
        level=(log_level or settings.LOG_LEVEL).upper(),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )


# --- EXCEPTION HANDLERS REGISTRATION ---

# Specific ones first, generic ones last.
cli.add_exception_handler(exceptions.ResourceNotFoundException, errors.resource_not_found_handler)
cli.add_exception_handler(exceptions.ResourceConflictException, errors.resource_conflict_handler)
cli.add_exception_handler(exceptions.BusinessRuleViolationException, errors.business_rule_handler)
cli.add_exception_handler(ValidationError, errors.validation_error_handler)

# Fallback
cli.add_exception_handler(exceptions.WedgeDLAException, errors.app_exception_handler)

# --- COMMANDS ---
cli.add_command(dla.grow)
for command in estimates.COMMANDS + runs.COMMANDS:
    cli.add_command(command)


def main():
    cli()


if __name__ == "__main__":
    main()
