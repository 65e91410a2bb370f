import logging
import math
from fractions import Fraction
from typing import Tuple

from pydantic import BaseModel, ConfigDict, field_validator, model_validator

from app.core.exceptions import InvalidWedgeException

logger = logging.getLogger(__name__)

# Slope components stay below 2^22 so int64 products with |coordinate| <= 2^40 cannot overflow.
SLOPE_LIMIT = 1 << 22
COORDINATE_LIMIT = 1 << 40


def _normalize(pair: Tuple[int, int]) -> Tuple[int, int]:
    p, q = int(pair[0]), int(pair[1])
    if p == 0 and q == 0:
        raise InvalidWedgeException("slope (0, 0) does not describe a ray")
    if q < 0:
        p, q = -p, -q
    if q == 0:
        return (1 if p > 0 else -1), 0
    g = math.gcd(p, q)
    return p // g, q // g


def _format(pair: Tuple[int, int]) -> str:
    return f"{pair[0]}/{pair[1]}"


class WedgeSpec(BaseModel):
    """
    Exact description of the wedge between two rays from the origin.

    Each ray is a coprime pair (p, q) with q >= 0 and tan(theta) = p/q;
    q = 0 encodes the vertical rays (1, 0) -> pi/2 and (-1, 0) -> -pi/2.
    Membership never looks at `phi`.
    """
    lower_slope: Tuple[int, int]
    upper_slope: Tuple[int, int]
    # theta1 == theta2 gives a single ray; only used for one-dimensional checks
    degenerate_ray: bool = False

    model_config = ConfigDict(frozen=True)

    @field_validator("lower_slope", "upper_slope", mode="before")
    @classmethod
    def normalize_slope(cls, value):
        if isinstance(value, str):
            return cls.parse_slope(value)
        if len(value) != 2:
            raise InvalidWedgeException(f"slope must be a pair, got {value!r}")
        pair = _normalize(value)
        if abs(pair[0]) >= SLOPE_LIMIT or abs(pair[1]) >= SLOPE_LIMIT:
            raise InvalidWedgeException(f"slope {_format(pair)} has components beyond 2^22")
        return pair

    @model_validator(mode="after")
    def check_order(self):
        p1, q1 = self.lower_slope
        p2, q2 = self.upper_slope
        if self.lower_slope == self.upper_slope:
            if not self.degenerate_ray:
                raise InvalidWedgeException(
                    f"theta1 == theta2 ({_format(self.lower_slope)}); degenerate wedges are rejected"
                )
            return self
        # both vertical: the half-plane
        if q1 == 0 and q2 == 0:
            if p1 < p2:
                return self
            raise InvalidWedgeException("theta1 must be below theta2")
        if q1 * p2 - p1 * q2 <= 0:
            raise InvalidWedgeException(
                f"theta1 ({_format(self.lower_slope)}) must be strictly below theta2 ({_format(self.upper_slope)})"
            )
        return self

    # --- derived angles (formulas only) ---
    @property
    def theta1(self) -> float:
        return math.atan2(self.lower_slope[0], self.lower_slope[1])

    @property
    def theta2(self) -> float:
        return math.atan2(self.upper_slope[0], self.upper_slope[1])

    @property
    def phi(self) -> float:
        return self.theta2 - self.theta1

    def label(self) -> str:
        return f"{_format(self.lower_slope)}..{_format(self.upper_slope)}"

    def is_symmetric(self) -> bool:
        return self.lower_slope == (-self.upper_slope[0], self.upper_slope[1])

    # --- constructors ---
    @staticmethod
    def parse_slope(text: str) -> Tuple[int, int]:
        """Parse "p/q" (or a bare integer p meaning p/1)."""
        raw = text.strip()
        try:
            if "/" in raw:
                p, q = raw.split("/", 1)
                pair = (int(p), int(q))
            else:
                pair = (int(raw), 1)
        except ValueError:
            raise InvalidWedgeException(f"slope '{text}' is not of the form p/q")
        return _normalize(pair)

    @classmethod
    def from_slopes(cls, lower: str, upper: str, degenerate_ray: bool = False) -> "WedgeSpec":
        return cls(lower_slope=cls.parse_slope(lower), upper_slope=cls.parse_slope(upper),
                   degenerate_ray=degenerate_ray)

    @classmethod
    def from_angles(cls, theta1: float, theta2: float, tolerance: float = 1e-9) -> "WedgeSpec":
        """
        Rational approximation of arbitrary angles.
        Each tangent is replaced by the closest fraction whose angle is within `tolerance`.
        """
        pairs = [cls._approximate_angle(theta, tolerance) for theta in (theta1, theta2)]
        spec = cls(lower_slope=pairs[0], upper_slope=pairs[1])
        logger.warning(
            f"Decimal angles ({theta1}, {theta2}) approximated by slopes {spec.label()} "
            f"(angle errors {abs(spec.theta1 - theta1):.2e}, {abs(spec.theta2 - theta2):.2e})"
        )
        return spec

    @staticmethod
    def _approximate_angle(theta: float, tolerance: float) -> Tuple[int, int]:
        if abs(theta - math.pi / 2) <= tolerance:
            return 1, 0
        if abs(theta + math.pi / 2) <= tolerance:
            return -1, 0
        if not -math.pi / 2 < theta < math.pi / 2:
            raise InvalidWedgeException(f"angle {theta} is outside [-pi/2, pi/2]")
        target = math.tan(theta)
        limit = 16
        while True:
            frac = Fraction(target).limit_denominator(limit)
            if abs(math.atan2(frac.numerator, frac.denominator) - theta) <= tolerance:
                return frac.numerator, frac.denominator
            if limit >= SLOPE_LIMIT // 4:
                raise InvalidWedgeException(f"angle {theta} has no slope within {tolerance}")
            limit *= 4

    @classmethod
    def half_plane(cls) -> "WedgeSpec":
        return cls(lower_slope=(-1, 0), upper_slope=(1, 0))

    @classmethod
    def ray(cls) -> "WedgeSpec":
        """The degenerate wedge W_{0,0}: the non-negative x-axis."""
        return cls(lower_slope=(0, 1), upper_slope=(0, 1), degenerate_ray=True)


class WedgeSummary(BaseModel):
    """Wedge as recorded in manifests."""
    theta1: str
    theta2: str
    phi: float

    @classmethod
    def of(cls, spec: WedgeSpec) -> "WedgeSummary":
        return cls(theta1=_format(spec.lower_slope), theta2=_format(spec.upper_slope), phi=spec.phi)
