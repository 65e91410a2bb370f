from typing import Dict, Iterable, List, Optional, Tuple

from app.models.site import Site


class HitDistribution:
    """
    Probability mass over absorbing sites for walks from one source
    (exact from the oracle or empirical from Monte Carlo).
    """

    def __init__(self, source: Site, masses: Dict[Site, float], trials: Optional[int] = None):
        self.source = Site(*source)
        # zero masses are kept so that supports of exact laws stay comparable
        self.masses: Dict[Site, float] = {Site(*s): float(p) for s, p in sorted(masses.items())}
        self.trials = trials

    @classmethod
    def from_counts(cls, source: Site, counts: Dict[Site, int], trials: int) -> "HitDistribution":
        if trials <= 0:
            return cls(source, {}, trials=0)
        return cls(source, {s: c / trials for s, c in counts.items()}, trials=trials)

    def __eq__(self, other) -> bool:
        if not isinstance(other, HitDistribution):
            return NotImplemented
        return self.source == other.source and self.masses == other.masses

    def __repr__(self) -> str:
        return f"HitDistribution(source={tuple(self.source)}, sites={len(self.masses)}, total={self.total():.6f})"

    def get(self, site: Tuple[int, int]) -> float:
        return self.masses.get(Site(*site), 0.0)

    def total(self) -> float:
        return float(sum(self.masses.values()))

    def support(self) -> List[Site]:
        return [s for s, p in self.masses.items() if p > 0.0]

    def restricted(self, sites: Iterable[Site]) -> float:
        """Mass carried by `sites`."""
        return float(sum(self.masses.get(Site(*s), 0.0) for s in sites))

    def tv(self, other: "HitDistribution") -> float:
        keys = set(self.masses) | set(other.masses)
        return 0.5 * float(sum(abs(self.masses.get(k, 0.0) - other.masses.get(k, 0.0)) for k in keys))

    def mirror(self) -> "HitDistribution":
        """Image under y -> -y (source included)."""
        return HitDistribution(Site(self.source.x, -self.source.y),
                               {Site(s.x, -s.y): p for s, p in self.masses.items()},
                               trials=self.trials)

    def rows(self) -> List[Tuple[int, int, int, int, float]]:
        return [(self.source.x, self.source.y, s.x, s.y, p) for s, p in self.masses.items()]
