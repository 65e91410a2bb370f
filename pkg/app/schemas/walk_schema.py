from typing import Dict, List, Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator

from app.core.config import settings
from app.core.exceptions import InvalidParameterException
from app.models.site import Site, SiteSet


class AbsorbSet(BaseModel):
    label: str
    sites: SiteSet

    model_config = ConfigDict(arbitrary_types_allowed=True)


class StopSpec(BaseModel):
    """
    When a walk ends: first entry into an absorbing set, leaving the open
    ball of radius `escape_radius`, or the step cap.

    `strict` selects return-time semantics: a walker that starts inside an
    absorbing set must move before it can be absorbed.
    """
    absorb_sets: List[AbsorbSet] = []
    step_cap: int = Field(default_factory=lambda: settings.STEP_CAP, gt=0)
    escape_radius: Optional[float] = Field(default=None, gt=0)
    strict: bool = False
    # sites outside the listed sets and outside `domain` are free unless reflect is chosen
    domain: Optional[SiteSet] = None
    reflect_outside: bool = False

    model_config = ConfigDict(arbitrary_types_allowed=True)

    @model_validator(mode="after")
    def check_stoppable(self):
        if not self.absorb_sets and self.escape_radius is None and "step_cap" not in self.model_fields_set:
            raise InvalidParameterException("a stop spec needs an absorbing set, an escape radius or a step cap")
        labels = [a.label for a in self.absorb_sets]
        if len(set(labels)) != len(labels):
            raise InvalidParameterException(f"absorbing labels must be unique, got {labels}")
        if len(labels) > 100:
            raise InvalidParameterException("at most 100 absorbing labels are supported")
        return self


class WalkState(BaseModel):
    position: Site
    steps_taken: int = 0
    stream: str
    draws: int = 0


class WalkOutcome(BaseModel):
    """How one walk ended."""
    label: Optional[str] = None
    site: Site
    steps: int
    jumps: int = 0
    steps_equivalent: float
    escaped: bool = False
    cap_hit: bool = False

    @property
    def absorbed(self) -> bool:
        return self.label is not None


class OutcomeTally(BaseModel):
    """Order-independent merge of walk outcomes."""
    trials: int = 0
    by_label: Dict[str, int] = {}
    escaped: int = 0
    cap_hits: int = 0
    steps_equivalent: float = 0.0

    def add(self, outcome: WalkOutcome) -> "OutcomeTally":
        by_label = dict(self.by_label)
        if outcome.label is not None:
            by_label[outcome.label] = by_label.get(outcome.label, 0) + 1
        return OutcomeTally(trials=self.trials + 1, by_label=by_label,
                            escaped=self.escaped + int(outcome.escaped),
                            cap_hits=self.cap_hits + int(outcome.cap_hit),
                            steps_equivalent=self.steps_equivalent + outcome.steps_equivalent)

    def merge(self, other: "OutcomeTally") -> "OutcomeTally":
        by_label = dict(self.by_label)
        for label, count in other.by_label.items():
            by_label[label] = by_label.get(label, 0) + count
        return OutcomeTally(trials=self.trials + other.trials, by_label=by_label,
                            escaped=self.escaped + other.escaped, cap_hits=self.cap_hits + other.cap_hits,
                            steps_equivalent=self.steps_equivalent + other.steps_equivalent)

    def fraction(self, label: str) -> float:
        return self.by_label.get(label, 0) / self.trials if self.trials else 0.0


class ReversibilityReport(BaseModel):
    paths_checked: int
    violations: int
    max_length: int
    radius: float
