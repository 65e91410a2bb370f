import math
from typing import List, Optional

from pydantic import BaseModel, Field, model_validator

from app.core.exceptions import DegenerateFitException

ORACLE = "oracle"
MC = "mc"


class EscapeFormulaInput(BaseModel):
    phi: float = Field(gt=0.0, le=math.pi)
    K: float = Field(gt=1.0)


class EscapeBound(BaseModel):
    formula: float
    bound: float
    constant: float
    holds: bool


class ExponentFit(BaseModel):
    """Least-squares line through (log x, log y)."""
    log_x: List[float]
    log_y: List[float]
    slope: float
    intercept: float
    r_squared: float = Field(ge=0.0, le=1.0)
    stderr: float
    half_width: float

    @model_validator(mode="after")
    def check_points(self):
        if len(self.log_x) < 3 or len(self.log_x) != len(self.log_y):
            raise DegenerateFitException("an exponent fit needs at least 3 paired points")
        return self


class EscapeEstimate(BaseModel):
    """sup over starting sites of an escape probability, with how it was obtained."""
    estimate: float
    stderr: float
    backend: str
    r: float
    L: float
    inner: str
    continuous: float
    relative_error: float
    argmax: List[int]
    sources: int
    trials: Optional[int] = None
    cap_hits: int = 0


class HarmonicMeasureEstimate(BaseModel):
    probability: float
    stderr: float
    backend: str
    source_radius: float
    trials: Optional[int] = None
    cap_hits: int = 0


class BeurlingRow(BaseModel):
    L: float
    ratio: float
    probability: float
    stderr: float


class BeurlingResult(BaseModel):
    r: float
    rows: List[BeurlingRow]
    fit: ExponentFit
    theory_slope: float


class DominanceResult(BaseModel):
    lhs: float
    rhs_upper: float
    rhs_lower: float
    dominated: bool
    pointwise_exceedances: int
    sites_checked: int


class RingEscapeResult(BaseModel):
    inner_first_prob: float
    stderr: float
    limit: float
    backend: str
    inner_radius: float
    start_radius: float
    outer_radius: float
    trials: Optional[int] = None
    cap_hits: int = 0


class FarExitResult(BaseModel):
    probability: float
    stderr: float
    R: float
    T: float
    eps: float
    exit_radius: float
    step_cap: int
    trials: int
    per_source: List[float]
    cap_hits: int


class FarExitScan(BaseModel):
    rows: List[FarExitResult]
    decreasing: bool
    fit: Optional[ExponentFit] = None


class SmallSetHit(BaseModel):
    probability: float
    stderr: float
    R: float
    T: float
    set_size: int
    trials: int
    per_source: List[float]


class ConvergenceRow(BaseModel):
    R: float
    max_tv: float
    sources: int


class ConvergenceTable(BaseModel):
    rows: List[ConvergenceRow]
    decreasing: bool


class ResistanceRow(BaseModel):
    L: float
    resistance: float
    escape_probability: float
    scaled_escape: float


class ResistanceScan(BaseModel):
    rows: List[ResistanceRow]
    slope: float
    intercept: float
    r_squared: float
    band_ratio: float
