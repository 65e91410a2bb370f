# app/core/exceptions.py
from typing import Any, Dict, Optional


class WedgeDLAException(Exception):
    """Base class for all application logic errors."""
    pass


# =========================================================
# 1. SYSTEM & INFRASTRUCTURE ERRORS (exit code 5)
# =========================================================
class SolverException(WedgeDLAException):
    """
    Raised when a linear solve is singular or fails to converge.
    """

    def __init__(self, detail: str):
        super().__init__(f"Solver Error: {detail}")


class StorageSystemException(WedgeDLAException):
    """
    Raised when a run directory or cache file cannot be read or written.
    The message carries the raw OS error.
    """

    def __init__(self, original_error: str):
        super().__init__(f"Storage Error: {original_error}")


# =========================================================
# 2. NOT FOUND ERRORS (exit code 3)
# =========================================================
class ResourceNotFoundException(WedgeDLAException):
    """Base for all missing-resource errors."""

    def __init__(self, resource: str, id: Any):
        self.message = f"{resource} '{id}' not found."
        super().__init__(self.message)


class RunNotFoundException(ResourceNotFoundException):
    def __init__(self, path: str):
        super().__init__(resource="Run manifest", id=path)


class JumpTableNotFoundException(ResourceNotFoundException):
    def __init__(self, k: int):
        super().__init__(resource="Jump table", id=f"k={k}")


# =========================================================
# 3. CONFLICT ERRORS (exit code 4)
# =========================================================
class ResourceConflictException(WedgeDLAException):
    """Base for state conflicts (digests, versions, replays)."""

    def __init__(self, message: str):
        super().__init__(message)


class DigestMismatchException(ResourceConflictException):
    def __init__(self, filename: str, expected: str, actual: str):
        self.filename = filename
        super().__init__(
            f"Digest mismatch for '{filename}': expected {expected[:12]}..., got {actual[:12]}..."
        )


class VersionMismatchException(ResourceConflictException):
    def __init__(self, recorded: str, running: str):
        super().__init__(
            f"Manifest was written by version {recorded}, running {running}. Refusing to certify."
        )


class ReplayMismatchException(ResourceConflictException):
    def __init__(self, mismatched: Dict[str, str]):
        self.mismatched = mismatched
        files = ", ".join(f"{name} ({reason})" for name, reason in mismatched.items())
        super().__init__(f"Replay differs from the recorded run: {files}")


# =========================================================
# 4. BUSINESS RULE & VALIDATION ERRORS (exit code 2)
# =========================================================
class BusinessRuleViolationException(WedgeDLAException):
    """Base for invalid-input errors."""
    pass


class InvalidWedgeException(BusinessRuleViolationException):
    """e.g. theta1 >= theta2, non-integer slopes."""

    def __init__(self, detail: str):
        super().__init__(f"Invalid wedge: {detail}")


class SiteOutsideWedgeException(BusinessRuleViolationException):
    def __init__(self, x: int, y: int):
        super().__init__(f"Site ({x},{y}) is not a member of the wedge.")


class CoordinateOverflowException(BusinessRuleViolationException):
    def __init__(self, x: int, y: int, limit: int):
        super().__init__(f"Site ({x},{y}) exceeds the coordinate guard |c| <= {limit}.")


class InvalidParameterException(BusinessRuleViolationException):
    """e.g. K <= 1, r >= L, negative trial counts."""

    def __init__(self, detail: str):
        super().__init__(f"Invalid parameter: {detail}")


class UnsupportedRegimeException(BusinessRuleViolationException):
    """Raised when a formula is used outside the opening angles it holds for."""

    def __init__(self, phi: float, limit: str):
        super().__init__(f"Opening angle phi={phi:.6f} is outside the supported regime ({limit}).")


class InfeasibleProblemException(BusinessRuleViolationException):
    """Raised when an oracle problem is too large or structurally invalid."""

    def __init__(self, detail: str):
        super().__init__(f"Infeasible problem: {detail}")


class InvalidSetException(BusinessRuleViolationException):
    """Raised when a site set violates the shape an experiment requires."""

    def __init__(self, detail: str):
        super().__init__(f"Invalid site set: {detail}")


class DegenerateFitException(BusinessRuleViolationException):
    def __init__(self, detail: str):
        super().__init__(f"Degenerate fit: {detail}")


class ConfigParseException(BusinessRuleViolationException):
    """
    Raised by the key=value config parser.
    Carries the 1-based line and column of the offending token.
    """

    def __init__(self, line: int, column: int, detail: str):
        self.line = line
        self.column = column
        self.detail = detail
        super().__init__(f"config:{line}:{column}: {detail}")


# =========================================================
# 5. RUN-TIME LIMITS (exit code 5)
# =========================================================
class TrialCapExceededException(WedgeDLAException):
    """
    Raised when a sampler exhausts its restart budget for one particle.
    """

    def __init__(self, detail: str, diagnostics: Optional[Dict[str, Any]] = None):
        self.diagnostics = diagnostics or {}
        super().__init__(f"Trial cap exceeded: {detail}")
