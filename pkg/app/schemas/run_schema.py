import csv
import io
from typing import Any, Dict, List, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator

from app.core.exceptions import InvalidParameterException
from app.schemas.wedge_schema import WedgeSpec, WedgeSummary


# =========================================================
# Run requests
# =========================================================

class RunRequest(BaseModel):
    """Parameters shared by every command. Unknown keys are rejected."""
    command: str
    theta1: str = "0/1"
    theta2: str = "1/1"
    seed: int = Field(default=0, ge=0)
    workers: Optional[int] = Field(default=None, gt=0)

    model_config = ConfigDict(extra="forbid")

    @model_validator(mode="after")
    def check_wedge(self):
        self.wedge()
        return self

    def wedge(self) -> WedgeSpec:
        # decimal input means radians; exact p/q slopes otherwise
        if "." in self.theta1 or "." in self.theta2:
            return WedgeSpec.from_angles(float(self.theta1), float(self.theta2))
        return WedgeSpec.from_slopes(self.theta1, self.theta2)

    def parameters(self) -> Dict[str, Any]:
        return self.model_dump(exclude={"workers"})


class GrowRequest(RunRequest):
    command: Literal["grow"] = "grow"
    particles: int = Field(gt=0)
    start_factor: float = Field(default=8.0, ge=4.0)
    escape_factor: float = Field(default=4.0, ge=2.0)
    jump_k_max: int = Field(default=64, ge=0, le=64)
    max_restarts: int = Field(default=10000, gt=0)
    exponent: Optional[float] = Field(default=None, gt=0)
    consistency_samples: int = Field(default=0, ge=0)


class EscapeRequest(RunRequest):
    command: Literal["escape"] = "escape"
    r: float = Field(default=16.0, gt=0)
    L: float = Field(default=64.0, gt=0)
    backend: Literal["oracle", "mc"] = "oracle"
    trials: int = Field(default=10000, gt=0)
    inner: Literal["wall", "ring"] = "wall"


class BeurlingRequest(RunRequest):
    command: Literal["beurling"] = "beurling"
    r: float = Field(default=16.0, gt=0)
    L_list: List[float] = [64.0, 128.0, 256.0]
    side: Literal["lower", "upper"] = "lower"
    backend: Literal["oracle", "mc"] = "oracle"
    trials: int = Field(default=10000, gt=0)
    far_factor: float = Field(default=2.0, gt=1.0)


class DominanceRequest(RunRequest):
    command: Literal["dominance"] = "dominance"
    r: float = Field(default=4.0, gt=0)
    L: float = Field(default=24.0, gt=0)
    sets: int = Field(default=100, gt=0)
    extra_sites: int = Field(default=20, ge=0)


class RingRequest(RunRequest):
    command: Literal["ring"] = "ring"
    R: float = Field(default=128.0, gt=0)
    C: float = Field(default=4.0, gt=1.0)
    eps: float = Field(default=1.0, gt=0)
    backend: Literal["oracle", "mc"] = "oracle"
    trials: int = Field(default=10000, gt=0)


class FarExitRequest(RunRequest):
    command: Literal["far-exit"] = "far-exit"
    R: float = Field(default=16.0, gt=0)
    T_values: List[float] = [4.0, 16.0, 64.0]
    eps: float = Field(default=0.1, gt=0)
    trials: int = Field(default=1000, gt=0)
    small_set_T: Optional[float] = Field(default=1.0, gt=0)


class ConvergeRequest(RunRequest):
    command: Literal["converge"] = "converge"
    seed_radius: float = Field(default=4.0, gt=0)
    R_list: List[float] = [16.0, 32.0, 64.0]
    sources: int = Field(default=16, gt=1)


class OracleRequest(RunRequest):
    command: Literal["oracle"] = "oracle"
    source_x: int
    source_y: int
    ring_radius: float = Field(default=4.0, gt=0)
    sites_file: Optional[str] = None
    truncation: float = Field(default=64.0, gt=0)


REQUESTS = {
    "grow": GrowRequest,
    "escape": EscapeRequest,
    "beurling": BeurlingRequest,
    "dominance": DominanceRequest,
    "ring": RingRequest,
    "far-exit": FarExitRequest,
    "converge": ConvergeRequest,
    "oracle": OracleRequest,
}


def request_from_dict(data: Dict[str, Any]) -> RunRequest:
    command = data.get("command", "grow")
    if command not in REQUESTS:
        raise InvalidParameterException(f"unknown command '{command}'")
    return REQUESTS[command](**{**data, "command": command})


# =========================================================
# Reports and manifests
# =========================================================

class ExperimentReport(BaseModel):
    """A result table plus the parameters and fits that produced it."""
    parameters: Dict[str, Any] = {}
    columns: List[str] = []
    rows: List[List[Any]] = []
    fits: Dict[str, Any] = {}

    def to_csv(self) -> str:
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(self.columns)
        writer.writerows(self.rows)
        return buffer.getvalue()


class RunManifest(BaseModel):
    version: str
    project: str
    command: str
    wedge: WedgeSummary
    request: Dict[str, Any]
    seed: int
    streams: Dict[str, Dict[str, int]] = {}
    started_at: str
    finished_at: str
    inputs: Dict[str, str] = {}
    outputs: Dict[str, str] = {}
    checks: Dict[str, bool] = {}
    notes: Dict[str, Any] = {}

    @property
    def passed(self) -> bool:
        return all(self.checks.values())


class ReplayReport(BaseModel):
    files_checked: int
    identical: bool
    mismatched: Dict[str, str] = {}
