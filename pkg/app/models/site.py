from typing import Dict, Iterable, Iterator, List, NamedTuple, Optional, Tuple

import numpy as np


class Site(NamedTuple):
    """
    A lattice point of Z^2.
    """
    x: int
    y: int

    def norm2(self) -> int:
        return self.x * self.x + self.y * self.y

    def norm(self) -> float:
        return float(np.hypot(self.x, self.y))


SITE_HEADER = "x,y"


class SiteSet:
    """
    Set of lattice sites that remembers insertion order.

    Equality is plain set equality; the order only matters for
    reproducible iteration and for attach-ordered snapshots.
    """

    __slots__ = ("_members",)

    def __init__(self, sites: Iterable[Tuple[int, int]] = ()):
        self._members: Dict[Site, None] = dict.fromkeys(Site(int(s[0]), int(s[1])) for s in sites)

    # --- container protocol ---
    def __contains__(self, item) -> bool:
        return item in self._members

    def __iter__(self) -> Iterator[Site]:
        return iter(self._members)

    def __len__(self) -> int:
        return len(self._members)

    def __bool__(self) -> bool:
        return bool(self._members)

    def __eq__(self, other) -> bool:
        if not isinstance(other, SiteSet):
            return NotImplemented
        return self._members.keys() == other._members.keys()

    def __repr__(self) -> str:
        return f"SiteSet(n={len(self)})"

    # --- mutation (builders only) ---
    def add(self, site: Tuple[int, int]) -> None:
        self._members[Site(int(site[0]), int(site[1]))] = None

    def discard(self, site: Tuple[int, int]) -> None:
        self._members.pop(Site(int(site[0]), int(site[1])), None)

    def copy(self) -> "SiteSet":
        out = SiteSet()
        out._members = dict(self._members)
        return out

    # --- algebra ---
    def union(self, *others: Iterable[Site]) -> "SiteSet":
        out = self.copy()
        for other in others:
            for s in other:
                out._members[s] = None
        return out

    def difference(self, other) -> "SiteSet":
        return SiteSet(s for s in self if s not in other)

    def intersection(self, other) -> "SiteSet":
        return SiteSet(s for s in self if s in other)

    def isdisjoint(self, other) -> bool:
        return not any(s in other for s in self)

    def issubset(self, other) -> bool:
        return all(s in other for s in self)

    def mirror(self) -> "SiteSet":
        """Image under y -> -y."""
        return SiteSet(Site(s.x, -s.y) for s in self)

    # --- views ---
    def sorted_sites(self) -> List[Site]:
        return sorted(self._members)

    def to_array(self) -> np.ndarray:
        if not self._members:
            return np.zeros((0, 2), dtype=np.int64)
        return np.array(list(self._members), dtype=np.int64)

    @classmethod
    def from_array(cls, xy: np.ndarray) -> "SiteSet":
        return cls(map(tuple, np.asarray(xy, dtype=np.int64).tolist()))

    def radius(self) -> float:
        """Largest Euclidean norm of a member (0 for the empty set)."""
        if not self._members:
            return 0.0
        xy = self.to_array()
        return float(np.sqrt((xy * xy).sum(axis=1).max()))

    def bbox(self) -> Optional[Tuple[int, int, int, int]]:
        if not self._members:
            return None
        xy = self.to_array()
        return int(xy[:, 0].min()), int(xy[:, 1].min()), int(xy[:, 0].max()), int(xy[:, 1].max())

    # --- serialization: "x,y" lines sorted lexicographically ---
    def to_text(self) -> str:
        lines = [SITE_HEADER] + [f"{s.x},{s.y}" for s in self.sorted_sites()]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "SiteSet":
        out = cls()
        for raw in text.splitlines():
            line = raw.strip()
            if not line or line == SITE_HEADER or line.startswith("#"):
                continue
            x, y = line.split(",")
            out.add((int(x), int(y)))
        return out
