import csv
import logging
from fractions import Fraction
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np

from app.core.config import settings
from app.core.exceptions import (
    InvalidParameterException,
    SiteOutsideWedgeException,
    StorageSystemException
)
from app.models.harmonic_problem import STRICT, HarmonicProblem
from app.models.jump_table import JumpLadder, JumpTable
from app.models.site import Site, SiteSet
from app.models.site_grid import CODE_ESCAPE, CODE_FREE, CODE_REMOVED, SiteGrid
from app.schemas.walk_schema import ReversibilityReport, StopSpec, WalkOutcome, WalkState
from app.schemas.wedge_schema import WedgeSpec
from app.services import oracle_service
from app.services.geometry_service import (
    ball_sector,
    check_site,
    contains,
    neighbors
)
from app.services.trial_service import UniformStream
from app.utils import walk_kernels as kernels

logger = logging.getLogger(__name__)

DEFAULT_LADDER = (1, 2, 4, 8, 16, 32, 64)
MAX_BOX = 64


# =========================================================
# Single steps (reference implementation)
# =========================================================

def step(spec: WedgeSpec, state: WalkState, stream: UniformStream) -> WalkState:
    """One move to a uniformly chosen wedge neighbour; one uniform per move."""
    options = neighbors(spec, state.position)
    choice = stream.choice_index(len(options))
    return WalkState(position=options[choice], steps_taken=state.steps_taken + 1,
                     stream=state.stream, draws=state.draws + 1)


# =========================================================
# Walk contexts
# =========================================================

class WalkContext:
    """
    Everything the kernel needs for one stop configuration: the code grid,
    the clearance map and the jump ladder. Built once, shared by all trials
    (read-only while walks run).
    """

    def __init__(self, spec: WedgeSpec, grid: SiteGrid, labels: List[str],
                 escape_radius: Optional[float], step_cap: int, strict: bool,
                 ladder: Optional[JumpLadder] = None, radial_limit: Optional[float] = None):
        self.spec = spec
        self.grid = grid
        self.labels = labels
        self.escape_radius = escape_radius
        self.step_cap = int(step_cap)
        self.strict = strict
        self.ladder = ladder or JumpLadder.empty()
        self.radial_limit = radial_limit
        if self.ladder and radial_limit is None:
            self.clear = grid.clearance()
        else:
            self.clear = np.zeros((1, 1), dtype=np.int32)

    @property
    def accelerated(self) -> bool:
        return bool(self.ladder)

    def label_of(self, code: int) -> str:
        return self.labels[code - 1]

    def refresh_clearance(self) -> None:
        if self.ladder and self.radial_limit is None:
            self.clear = self.grid.clearance()


def build_walk_context(spec: WedgeSpec, stop: StopSpec, forbidden: Optional[SiteSet] = None,
                       ladder: Optional[JumpLadder] = None) -> WalkContext:
    """
    Raster the stop configuration. Absorbing sets get codes 1..n in order,
    `forbidden` sites that are not absorbing are kept free but block box jumps.
    """
    pieces = [a.sites.to_array() for a in stop.absorb_sets]
    if forbidden:
        pieces.append(forbidden.to_array())
    if stop.domain is not None:
        pieces.append(stop.domain.to_array())
    xy = np.concatenate(pieces) if pieces else np.zeros((0, 2), dtype=np.int64)
    outside = CODE_REMOVED if stop.reflect_outside else CODE_FREE
    if stop.reflect_outside and stop.domain is None:
        raise InvalidParameterException("reflecting outside needs an explicit domain")

    grid = SiteGrid.covering(xy, margin=1, fill=CODE_REMOVED if stop.reflect_outside else CODE_FREE,
                             outside_code=outside)
    if stop.domain is not None:
        grid.set_codes(stop.domain.to_array(), CODE_FREE)
    for code, absorb in enumerate(stop.absorb_sets, start=1):
        grid.set_codes(absorb.sites.to_array(), code)
    context = WalkContext(spec, grid, [a.label for a in stop.absorb_sets], stop.escape_radius,
                          stop.step_cap, stop.strict, ladder)
    if forbidden and context.accelerated:
        # forbidden sites only shrink the clearance map
        shadow = SiteGrid(grid.x0, grid.y0, *grid.shape, outside_code=grid.outside_code)
        shadow.codes = grid.codes.copy()
        shadow.set_codes(forbidden.to_array(), CODE_REMOVED)
        hidden = (shadow.codes == CODE_REMOVED) & (grid.codes == CODE_FREE)
        shadow.codes[hidden] = CODE_ESCAPE
        context.clear = shadow.clearance()
    return context


def walk_from(context: WalkContext, start: Site, stream: UniformStream,
              step_cap: Optional[int] = None) -> WalkOutcome:
    """Run one walker to completion on a prepared context."""
    start = check_site(start)
    spec = context.spec
    if not contains(spec, start):
        raise SiteOutsideWedgeException(start.x, start.y)
    code = context.grid.code_at(start.x, start.y)
    if code == CODE_REMOVED:
        raise InvalidParameterException(f"start {tuple(start)} is outside the walk domain")
    if not context.strict:
        if code > 0:
            return WalkOutcome(label=context.label_of(code), site=start, steps=0, steps_equivalent=0.0)
        if code == CODE_ESCAPE or (context.escape_radius and start.norm2() >= context.escape_radius ** 2):
            return WalkOutcome(site=start, steps=0, steps_equivalent=0.0, escaped=True)

    cap = int(step_cap if step_cap is not None else context.step_cap)
    state = np.array([start.x, start.y, 0, 0], dtype=np.int64)
    fstate = np.zeros(1, dtype=np.float64)
    status = _advance(context, state, fstate, stream, cap)
    return _outcome(context, status, state, fstate)


def _advance(context: WalkContext, state: np.ndarray, fstate: np.ndarray,
             stream: UniformStream, cap: int) -> int:
    p1, q1 = context.spec.lower_slope
    p2, q2 = context.spec.upper_slope
    ladder = context.ladder
    radial = -1.0 if context.radial_limit is None else float(context.radial_limit)
    escape = float(context.escape_radius) if context.escape_radius else 0.0
    while True:
        status, position = kernels.walk_kernel(
            state, fstate, p1, q1, p2, q2,
            context.grid.codes, context.grid.x0, context.grid.y0, context.grid.outside_code,
            context.clear, radial, escape, cap,
            ladder.ks, ladder.cumulative, ladder.exit_dx, ladder.exit_dy, ladder.n_exits, ladder.mean_exit,
            stream.buffer, stream.position,
        )
        stream.position = position
        if status != kernels.STATUS_NEED_UNIFORMS:
            return status
        stream.refill()


def _outcome(context: WalkContext, status: int, state: np.ndarray, fstate: np.ndarray) -> WalkOutcome:
    site = Site(int(state[0]), int(state[1]))
    common = dict(site=site, steps=int(state[2]), jumps=int(state[3]), steps_equivalent=float(fstate[0]))
    if status == kernels.STATUS_ABSORBED:
        return WalkOutcome(label=context.label_of(context.grid.code_at(site.x, site.y)), **common)
    if status == kernels.STATUS_ESCAPED:
        return WalkOutcome(escaped=True, **common)
    if status == kernels.STATUS_CAP:
        logger.debug(f"Walk hit its step cap at {tuple(site)} after {common['steps']} steps")
        return WalkOutcome(cap_hit=True, **common)
    raise InvalidParameterException(f"walker stuck at {tuple(site)}: no walkable neighbour")


def run_until(spec: WedgeSpec, start: Site, stop: StopSpec, stream: UniformStream,
              trace_path: Optional[Path] = None) -> WalkOutcome:
    """Plain single-step walk until absorption, escape or the step cap."""
    context = build_walk_context(spec, stop)
    if trace_path is not None or settings.TRACE_WALKS:
        return trace_walk(context, start, stream, trace_path or Path(f"trace-{stream.experiment}-{stream.trial}.csv"))
    return walk_from(context, start, stream)


def accelerated_run_until(spec: WedgeSpec, start: Site, stop: StopSpec, forbidden: SiteSet,
                          jump, stream: UniformStream) -> WalkOutcome:
    """
    Same hitting law as `run_until`; far from `forbidden`, the wedge walls and the
    escape ball, whole boxes are crossed with one draw from the jump table(s).
    """
    ladder = jump if isinstance(jump, JumpLadder) else JumpLadder([jump])
    context = build_walk_context(spec, stop, forbidden=forbidden, ladder=ladder)
    return walk_from(context, start, stream)


def trace_walk(context: WalkContext, start: Site, stream: UniformStream, path: Path) -> WalkOutcome:
    """Debug helper: the same walk, one kernel call per move, logged as x,y,step."""
    start = check_site(start)
    state = np.array([start.x, start.y, 0, 0], dtype=np.int64)
    fstate = np.zeros(1, dtype=np.float64)
    try:
        with open(path, "w", newline="") as handle:
            writer = csv.writer(handle)
            writer.writerow(["x", "y", "step"])
            writer.writerow([start.x, start.y, 0])
            code = context.grid.code_at(start.x, start.y)
            if not context.strict and code > 0:
                return WalkOutcome(label=context.label_of(code), site=start, steps=0, steps_equivalent=0.0)
            while True:
                moves = int(state[2] + state[3])
                status = _advance(context, state, fstate, stream, min(moves + 1, context.step_cap))
                writer.writerow([int(state[0]), int(state[1]), int(state[2] + state[3])])
                if status != kernels.STATUS_CAP or moves + 1 >= context.step_cap:
                    return _outcome(context, status, state, fstate)
    except OSError as e:
        logger.error(f"Could not write walk trace {path}: {e}")
        raise StorageSystemException(str(e))


# =========================================================
# Jump tables
# =========================================================

def build_jump_table(k: int, cache_dir: Optional[Path] = None, use_cache: bool = True) -> JumpTable:
    """
    Exit law of the (2k+1) box from its centre, solved exactly with the oracle
    on a copy of the box placed inside the right half-plane.
    """
    if not 1 <= k <= MAX_BOX:
        raise InvalidParameterException(f"box half-width must be in [1, {MAX_BOX}], got {k}")
    cache = Path(cache_dir or settings.CACHE_DIR)
    path = cache / f"jump_k{k}.tbl"
    if use_cache and path.exists():
        try:
            table = JumpTable.load(path)
            if table.k == k:
                return table
            logger.warning(f"Jump table {path} holds k={table.k}; rebuilding")
        except Exception as e:
            logger.warning(f"Ignoring unreadable jump table {path}: {e}")

    spec = WedgeSpec.half_plane()
    cx = k + 1
    offsets = [(dx, dy) for dx in range(-k, k + 1) for dy in range(-k, k + 1)]
    ring = [(dx, dy) for dx, dy in offsets if max(abs(dx), abs(dy)) == k]
    domain = SiteSet((cx + dx, dy) for dx, dy in offsets)
    exits = SiteSet((cx + dx, dy) for dx, dy in ring)
    problem = HarmonicProblem(spec, domain, {"exit": exits}, STRICT)
    law = oracle_service.hit_distribution(problem, Site(cx, 0))
    steps = oracle_service.solve_expected_steps(problem)

    faces = [(dx, dy) for dx, dy in ring if abs(dx) != abs(dy)]
    weights = np.array([law.get((cx + dx, dy)) for dx, dy in faces])
    weights = weights / weights.sum()
    table = JumpTable(k, [d[0] for d in faces], [d[1] for d in faces], weights,
                      steps.value_at(Site(cx, 0)))
    if use_cache:
        try:
            cache.mkdir(parents=True, exist_ok=True)
            table.save(path)
        except OSError as e:
            # cache is optional: keep the table in memory
            logger.warning(f"Could not cache jump table {path}: {e}")
    logger.info(f"Built jump table k={k}: {len(table)} exits, mean exit {table.mean_exit_steps:.3f} steps")
    return table


def jump_ladder(k_max: int = MAX_BOX, cache_dir: Optional[Path] = None) -> JumpLadder:
    """Tables for k = 1, 2, 4, ... up to k_max."""
    ks = [k for k in DEFAULT_LADDER if k <= k_max]
    return JumpLadder([build_jump_table(k, cache_dir) for k in ks])


# =========================================================
# Reversibility
# =========================================================

def reversibility_check(spec: WedgeSpec, radius: float = 6, max_length: int = 8,
                        avoid: Optional[SiteSet] = None) -> ReversibilityReport:
    """
    Enumerate every path of length <= max_length inside W^radius whose interior
    avoids `avoid`, and check deg(u) P^u(path) = deg(y) P^y(reversed path)
    exactly in rational arithmetic.
    """
    if max_length < 1:
        raise InvalidParameterException(f"max_length must be positive, got {max_length}")
    region = ball_sector(spec, radius)
    avoid = avoid or SiteSet()
    degree: Dict[Site, int] = {}

    def deg(s: Site) -> int:
        if s not in degree:
            degree[s] = len(neighbors(spec, s))
        return degree[s]

    checked = 0
    violations = 0
    # prefix-shared depth-first enumeration: (path, forward probability)
    stack = [([s], Fraction(1)) for s in region]
    while stack:
        path, forward = stack.pop()
        if len(path) > 1:
            checked += 1
            u, y = path[0], path[-1]
            backward = Fraction(1)
            for s in reversed(path[1:]):
                backward /= deg(s)
            if deg(u) * forward != deg(y) * backward:
                violations += 1
                logger.error(f"Reversibility violated on path {path}")
        if len(path) - 1 == max_length:
            continue
        tail = path[-1]
        if len(path) > 1 and tail in avoid:
            continue
        for nxt in neighbors(spec, tail):
            if nxt in region:
                stack.append((path + [nxt], forward / deg(tail)))
    return ReversibilityReport(paths_checked=checked, violations=violations,
                               max_length=max_length, radius=float(radius))
