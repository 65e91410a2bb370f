from typing import Dict, List, Optional

from pydantic import BaseModel, Field

SATISFIED = "satisfied"
VIOLATED = "violated"
INCONCLUSIVE = "inconclusive"


class SamplerParams(BaseModel):
    """
    Harmonic-measure-from-infinity sampler settings.

    Walkers start on dW^{R_s} with R_s = max(start_factor * rho, rho + 16) and
    restart once they leave the ball of radius escape_factor * R_s.
    """
    start_factor: float = Field(default=8.0, ge=4.0)
    escape_factor: float = Field(default=4.0, ge=2.0)
    jump_k_max: int = Field(default=64, ge=0, le=64)
    max_restarts: int = Field(default=10000, gt=0)
    step_cap: Optional[int] = Field(default=None, gt=0)

    def start_radius(self, rho: float) -> float:
        return max(self.start_factor * rho, rho + 16.0)


class StabilizationExponent(BaseModel):
    phi: float
    a_min: float
    a_strong: float
    b_threshold_strict: float
    b_threshold_weak: float


class StabilizationLedger(BaseModel):
    """T_last(R) = last attach index n with |a_n| < R, for every dial radius."""
    radii: List[float]
    t_last: Dict[float, int]
    exponent: Optional[float] = None

    @classmethod
    def start(cls, radii: List[float], exponent: Optional[float]) -> "StabilizationLedger":
        return cls(radii=sorted(radii), t_last={R: 0 for R in radii}, exponent=exponent)

    def record(self, n: int, norm: float) -> None:
        for R in self.radii:
            if norm < R:
                self.t_last[R] = n

    @classmethod
    def recompute(cls, norms: List[float], radii: List[float], exponent: Optional[float]) -> "StabilizationLedger":
        ledger = cls.start(radii, exponent)
        for n, norm in enumerate(norms):
            ledger.record(n, norm)
        return ledger


class StabilizationRow(BaseModel):
    radius: float
    t_last: int
    threshold: int
    status: str


class StabilizationReport(BaseModel):
    exponent: float
    n_particles: int
    rows: List[StabilizationRow]
    fraction_satisfied: Optional[float] = None


class GrowthRateEstimate(BaseModel):
    beta_hat: float
    stderr: float
    n_points: int
    window_start: int
    window_end: int


class SamplerConsistency(BaseModel):
    tv: float
    samples: int
    start_radius: float
    doubled_start_radius: float


class GrowthResult(BaseModel):
    n_particles: int
    ledger: StabilizationLedger
    restarts: int
    ledger_verified: bool
