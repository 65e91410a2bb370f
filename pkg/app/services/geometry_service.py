import logging
import math
from collections import deque
from typing import List, Sequence

import numpy as np

from app.core.exceptions import (
    CoordinateOverflowException,
    InvalidParameterException,
    SiteOutsideWedgeException
)
from app.models.site import Site, SiteSet
from app.schemas.wedge_schema import COORDINATE_LIMIT, WedgeSpec

logger = logging.getLogger(__name__)

# Neighbour order is part of the walk contract: +x, -x, +y, -y.
STEPS = ((1, 0), (-1, 0), (0, 1), (0, -1))
STEP_ARRAY = np.array(STEPS, dtype=np.int64)
KING_STEPS = tuple((dx, dy) for dx in (-1, 0, 1) for dy in (-1, 0, 1) if (dx, dy) != (0, 0))

UPPER = "upper"
LOWER = "lower"


def check_site(p: Sequence[int]) -> Site:
    x, y = int(p[0]), int(p[1])
    if abs(x) > COORDINATE_LIMIT or abs(y) > COORDINATE_LIMIT:
        raise CoordinateOverflowException(x, y, COORDINATE_LIMIT)
    return Site(x, y)


def contains(spec: WedgeSpec, p: Sequence[int]) -> bool:
    """
    Exact membership: the origin, or x >= 0 on the inner side of both rays.
    Vertical rays fall out of the same cross products.
    """
    x, y = check_site(p)
    if x == 0 and y == 0:
        return True
    if x < 0:
        return False
    p1, q1 = spec.lower_slope
    p2, q2 = spec.upper_slope
    return q1 * y - p1 * x >= 0 and p2 * x - q2 * y >= 0


def contains_array(spec: WedgeSpec, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """Vectorized `contains` over int64 coordinate arrays."""
    xs = np.asarray(xs, dtype=np.int64)
    ys = np.asarray(ys, dtype=np.int64)
    if xs.size and max(np.abs(xs).max(), np.abs(ys).max()) > COORDINATE_LIMIT:
        bad = int(np.argmax(np.maximum(np.abs(xs), np.abs(ys))))
        raise CoordinateOverflowException(int(xs.flat[bad]), int(ys.flat[bad]), COORDINATE_LIMIT)
    p1, q1 = spec.lower_slope
    p2, q2 = spec.upper_slope
    inside = (xs >= 0) & (q1 * ys - p1 * xs >= 0) & (p2 * xs - q2 * ys >= 0)
    return inside | ((xs == 0) & (ys == 0))


def neighbors(spec: WedgeSpec, p: Sequence[int]) -> List[Site]:
    site = check_site(p)
    if not contains(spec, site):
        raise SiteOutsideWedgeException(site.x, site.y)
    out = []
    for dx, dy in STEPS:
        q = Site(site.x + dx, site.y + dy)
        if contains(spec, q):
            out.append(q)
    return out


def degree(spec: WedgeSpec, p: Sequence[int]) -> int:
    return len(neighbors(spec, p))


def degree_one_sites(spec: WedgeSpec, sites: SiteSet) -> List[Site]:
    """Members of `sites` whose only move is back where they came from."""
    found = [s for s in sites if degree(spec, s) == 1]
    if found:
        logger.debug(f"{len(found)} degree-one sites in {spec.label()}")
    return found


def outer_boundary(spec: WedgeSpec, s: SiteSet) -> SiteSet:
    """Wedge sites outside `s` with an l1-neighbour in `s`, sorted lexicographically."""
    if not s:
        return SiteSet()
    xy = s.to_array()
    candidates = (xy[:, None, :] + STEP_ARRAY[None, :, :]).reshape(-1, 2)
    candidates = candidates[contains_array(spec, candidates[:, 0], candidates[:, 1])]
    candidates = np.unique(candidates, axis=0)
    return SiteSet(t for t in map(tuple, candidates.tolist()) if t not in s)


def closure(spec: WedgeSpec, s: SiteSet) -> SiteSet:
    return s.union(outer_boundary(spec, s))


def ball_sector_array(spec: WedgeSpec, R: float) -> np.ndarray:
    if R <= 0:
        raise InvalidParameterException(f"ball radius must be positive, got {R}")
    extent = int(math.floor(R))
    xs, ys = np.meshgrid(np.arange(0, extent + 1, dtype=np.int64),
                         np.arange(-extent, extent + 1, dtype=np.int64), indexing="ij")
    xs, ys = xs.ravel(), ys.ravel()
    keep = (xs * xs + ys * ys < R * R) & contains_array(spec, xs, ys)
    return np.stack([xs[keep], ys[keep]], axis=1)


def ball_sector(spec: WedgeSpec, R: float) -> SiteSet:
    """W^R: wedge sites with x^2 + y^2 < R^2, in lexicographic order."""
    return SiteSet.from_array(ball_sector_array(spec, R))


def sphere_array(spec: WedgeSpec, R: float) -> np.ndarray:
    """
    The outer boundary of W^R, enumerated row by row over the annulus
    R <= |p| < R + 1 so the cost stays linear in R.
    """
    if R <= 0:
        raise InvalidParameterException(f"sphere radius must be positive, got {R}")
    rows = []
    outer2 = (R + 1.0) ** 2
    inner2 = R * R
    for x in range(0, int(math.floor(R)) + 2):
        y_hi = int(math.floor(math.sqrt(max(outer2 - x * x, 0.0)))) + 1
        y_lo = max(0, int(math.ceil(math.sqrt(max(inner2 - x * x, 0.0)))) - 1)
        ys = np.arange(y_lo, y_hi + 1, dtype=np.int64)
        ys = np.unique(np.concatenate([ys, -ys]))
        rows.append(np.stack([np.full(ys.shape, x, dtype=np.int64), ys], axis=1))
    cand = np.concatenate(rows)
    n2 = cand[:, 0] * cand[:, 0] + cand[:, 1] * cand[:, 1]
    cand = cand[(n2 >= inner2) & contains_array(spec, cand[:, 0], cand[:, 1])]
    touches = np.zeros(len(cand), dtype=bool)
    for dx, dy in STEPS:
        nx, ny = cand[:, 0] + dx, cand[:, 1] + dy
        touches |= (nx * nx + ny * ny < inner2) & contains_array(spec, nx, ny)
    cand = cand[touches]
    order = np.lexsort((cand[:, 1], cand[:, 0]))
    return cand[order]


def sphere(spec: WedgeSpec, R: float) -> SiteSet:
    """The outer boundary of W^R."""
    return SiteSet.from_array(sphere_array(spec, R))


def _beyond_mask(spec: WedgeSpec, side: str, ys1: np.ndarray, ys2: np.ndarray) -> np.ndarray:
    """
    True where arctan(y2/y1) lies strictly above theta2 (upper) or below theta1 (lower),
    with arctan(y2/0) = +-pi/2 by sign and the origin never beyond either ray.
    """
    if side == UPPER:
        p, q = spec.upper_slope
        if q == 0:
            return np.zeros(ys1.shape, dtype=bool)
        on_axis = (ys1 == 0) & (ys2 > 0)
        # y2/y1 > p/q  <=>  (y2*q - p*y1) has the sign of y1
        cross = ys2 * q - p * ys1
        return on_axis | ((ys1 != 0) & (cross * np.sign(ys1) > 0))
    if side == LOWER:
        p, q = spec.lower_slope
        if q == 0:
            return np.zeros(ys1.shape, dtype=bool)
        on_axis = (ys1 == 0) & (ys2 < 0)
        cross = ys2 * q - p * ys1
        return on_axis | ((ys1 != 0) & (cross * np.sign(ys1) < 0))
    raise InvalidParameterException(f"side must be '{UPPER}' or '{LOWER}', got {side!r}")


def gamma_mask(spec: WedgeSpec, side: str, xy: np.ndarray) -> np.ndarray:
    """Which rows of `xy` (wedge sites) belong to the discrete upper/lower boundary."""
    hit = np.zeros(len(xy), dtype=bool)
    for dx, dy in KING_STEPS:
        hit |= _beyond_mask(spec, side, xy[:, 0] + dx, xy[:, 1] + dy)
    return hit


def gamma_ray(spec: WedgeSpec, side: str, r: float, L: float) -> SiteSet:
    """
    The absorbing set dW^r plus the discrete boundary on `side` between radii r and L.
    """
    if not 0 <= r < L:
        raise InvalidParameterException(f"need 0 <= r < L, got r={r}, L={L}")
    band = ball_sector_array(spec, L)
    if r > 0:
        n2 = band[:, 0] * band[:, 0] + band[:, 1] * band[:, 1]
        band = band[n2 >= r * r]
    band = band[gamma_mask(spec, side, band)]
    inner = sphere(spec, r) if r > 0 else SiteSet()
    return inner.union(SiteSet.from_array(band))


def is_connected(s: SiteSet) -> bool:
    """l1-connectivity by breadth-first search; the empty set counts as connected."""
    if not s:
        return True
    start = next(iter(s))
    seen = {start}
    queue = deque([start])
    while queue:
        x, y = queue.popleft()
        for dx, dy in STEPS:
            q = Site(x + dx, y + dy)
            if q in s and q not in seen:
                seen.add(q)
                queue.append(q)
    return len(seen) == len(s)


def spread(sites: SiteSet, count: int) -> List[Site]:
    """
    `count` sites evenly spaced in angle, always including both extreme angles.
    """
    ordered = sorted(sites, key=lambda s: (math.atan2(s.y, s.x), s.x, s.y))
    if count <= 0:
        raise InvalidParameterException(f"spread count must be positive, got {count}")
    if len(ordered) <= count:
        return ordered
    if count == 1:
        return [ordered[len(ordered) // 2]]
    picks = sorted({round(i * (len(ordered) - 1) / (count - 1)) for i in range(count)})
    return [ordered[i] for i in picks]
