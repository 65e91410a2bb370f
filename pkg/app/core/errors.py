# app/core/errors.py
import logging

import click
from pydantic import ValidationError

from app.core.exceptions import (
    WedgeDLAException,
    ResourceNotFoundException,
    ResourceConflictException,
    BusinessRuleViolationException,
    TrialCapExceededException
)

logger = logging.getLogger(__name__)

EXIT_CHECK_FAILED = 1
EXIT_BAD_REQUEST = 2
EXIT_NOT_FOUND = 3
EXIT_CONFLICT = 4
EXIT_INTERNAL = 5


def app_exception_handler(exc: WedgeDLAException) -> int:
    """
    Catch-all for any WedgeDLAException we forgot to handle specifically.
    Default to the internal-error exit code, but structured.
    """
    if isinstance(exc, TrialCapExceededException) and exc.diagnostics:
        logger.error(f"Sampler diagnostics: {exc.diagnostics}")
    logger.error(f"Unhandled App Exception: {exc}")
    click.echo(f"Internal Error: {exc}", err=True)
    return EXIT_INTERNAL


def resource_not_found_handler(exc: ResourceNotFoundException) -> int:
    click.echo(f"Not Found: {exc.message}", err=True)
    return EXIT_NOT_FOUND


def resource_conflict_handler(exc: ResourceConflictException) -> int:
    click.echo(f"Conflict: {exc}", err=True)
    return EXIT_CONFLICT


def business_rule_handler(exc: BusinessRuleViolationException) -> int:
    click.echo(f"Bad Request: {exc}", err=True)
    return EXIT_BAD_REQUEST


def validation_error_handler(exc: ValidationError) -> int:
    """Parameter models reject bad flags the same way rule violations do."""
    problems = "; ".join(f"{'.'.join(str(p) for p in e['loc'])}: {e['msg']}" for e in exc.errors())
    click.echo(f"Bad Request: {problems}", err=True)
    return EXIT_BAD_REQUEST
