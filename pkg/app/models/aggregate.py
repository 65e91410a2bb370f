from typing import List, Optional

import numpy as np

from app.core.exceptions import InvalidSetException
from app.models.site import Site, SiteSet
from app.models.site_grid import CODE_REMOVED, SiteGrid

AGGREGATE_HEADER = "n,x,y"
ATTACH_CODE = 1
GRID_MARGIN = 8


class Aggregate:
    """
    A growing cluster in the wedge, kept in attach order.

    Alongside the sites it caches the outer boundary, the outer radius, the
    diameter sequence and a code raster (aggregate sites removed, boundary
    sites absorbing) that the attachment sampler walks on.
    """

    def __init__(self, spec):
        # local import: geometry depends on the models package
        from app.services.geometry_service import contains
        self.spec = spec
        self._contains = contains
        self.sites = SiteSet([Site(0, 0)])
        self.boundary = SiteSet()
        self.rho = 0.0
        self.diameters: List[float] = [0.0]
        self.walk_steps: List[float] = [0.0]
        self._xy = np.zeros((1024, 2), dtype=np.int64)
        self._grid: Optional[SiteGrid] = None
        self._refresh_boundary(Site(0, 0))
        self._rebuild_grid(radius=GRID_MARGIN)

    # --- views ---
    def __len__(self) -> int:
        return len(self.sites)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Aggregate):
            return NotImplemented
        return self.spec == other.spec and list(self.sites) == list(other.sites)

    def __repr__(self) -> str:
        return f"Aggregate(n={len(self) - 1}, rho={self.rho:.2f})"

    @property
    def n(self) -> int:
        """Number of attached particles (the origin is particle 0)."""
        return len(self.sites) - 1

    @property
    def grid(self) -> SiteGrid:
        return self._grid

    def trajectory(self) -> List[Site]:
        return list(self.sites)

    def site_at(self, n: int) -> Site:
        return Site(int(self._xy[n, 0]), int(self._xy[n, 1]))

    def coordinates(self) -> np.ndarray:
        return self._xy[:len(self.sites)].copy()

    # --- growth ---
    def attach(self, site: Site, walk_steps: float = 0.0) -> None:
        site = Site(*site)
        if site not in self.boundary:
            raise InvalidSetException(f"{tuple(site)} is not on the outer boundary of the aggregate")
        n = len(self.sites)
        if n == len(self._xy):
            self._xy = np.concatenate([self._xy, np.zeros_like(self._xy)])
        # diameter grows only through pairs that contain the new site
        d2 = ((self._xy[:n] - np.array(site)) ** 2).sum(axis=1).max()
        self.diameters.append(max(self.diameters[-1], float(np.sqrt(d2))))
        self._xy[n] = site
        self.sites.add(site)
        self.walk_steps.append(float(walk_steps))
        self.rho = max(self.rho, site.norm())
        self._refresh_boundary(site)
        self._update_grid(site)

    def diam(self) -> float:
        return self.diameters[-1]

    def _refresh_boundary(self, site: Site) -> None:
        from app.services.geometry_service import neighbors
        self.boundary.discard(site)
        for q in neighbors(self.spec, site):
            if q not in self.sites:
                self.boundary.add(q)

    def _rebuild_grid(self, radius: float) -> None:
        extent = int(np.ceil(radius)) + GRID_MARGIN
        size = 2 * extent + 1
        grid = SiteGrid(-extent, -extent, size, size)
        grid.set_codes(self.coordinates(), CODE_REMOVED)
        grid.set_codes(self.boundary.to_array(), ATTACH_CODE)
        self._grid = grid

    def _update_grid(self, site: Site) -> None:
        reach = int(np.ceil(self.rho)) + 1
        if -self._grid.x0 - reach < 1:
            # doubling keeps rebuilds logarithmic in the final radius
            self._rebuild_grid(radius=2 * self.rho)
            return
        from app.services.geometry_service import neighbors
        self._grid.set_codes(np.array([site]), CODE_REMOVED)
        fresh = [q for q in neighbors(self.spec, site) if q not in self.sites]
        if fresh:
            self._grid.set_codes(np.array(fresh, dtype=np.int64), ATTACH_CODE)

    # --- serialization: "n,x,y" in attach order ---
    def to_text(self) -> str:
        lines = [AGGREGATE_HEADER] + [f"{n},{s.x},{s.y}" for n, s in enumerate(self.sites)]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, spec, text: str) -> "Aggregate":
        agg = cls(spec)
        expected = 0
        for raw in text.splitlines():
            line = raw.strip()
            if not line or line == AGGREGATE_HEADER:
                continue
            n, x, y = (int(v) for v in line.split(","))
            if n != expected:
                raise InvalidSetException(f"aggregate rows out of order: expected n={expected}, got {n}")
            if n == 0:
                if (x, y) != (0, 0):
                    raise InvalidSetException("an aggregate must start at the origin")
            else:
                agg.attach(Site(x, y))
            expected += 1
        return agg

    @classmethod
    def from_sites(cls, spec, sites: List[Site]) -> "Aggregate":
        """Replay an attach sequence that starts at the origin."""
        agg = cls(spec)
        for s in sites[1:]:
            agg.attach(Site(*s))
        return agg
