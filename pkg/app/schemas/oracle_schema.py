from typing import Optional

from pydantic import BaseModel


class ReturnProbability(BaseModel):
    """P^u(reach the closure of A no later than returning to u), with its truncation check."""
    probability: float
    truncation: float
    doubled_truncation_probability: float
    relative_change: float
    sensitive: bool


class SolveStats(BaseModel):
    free_sites: int
    iterations: int
    residual: float
    method: str
    truncation: Optional[str] = None
