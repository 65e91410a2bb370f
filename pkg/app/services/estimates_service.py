import logging
import math
from itertools import combinations
from typing import Callable, Dict, Optional, Sequence

import numpy as np
from scipy import stats

from app.core.config import settings
from app.core.exceptions import (
    DegenerateFitException,
    InfeasibleProblemException,
    InvalidParameterException,
    InvalidSetException
)
from app.models.harmonic_problem import REFLECT, STRICT, HarmonicProblem
from app.models.site import Site, SiteSet
from app.schemas.estimates_schema import (
    MC,
    ORACLE,
    BeurlingResult,
    BeurlingRow,
    ConvergenceRow,
    ConvergenceTable,
    DominanceResult,
    EscapeBound,
    EscapeEstimate,
    ExponentFit,
    FarExitResult,
    FarExitScan,
    HarmonicMeasureEstimate,
    ResistanceRow,
    ResistanceScan,
    RingEscapeResult,
    SmallSetHit
)
from app.schemas.walk_schema import AbsorbSet, OutcomeTally, StopSpec
from app.schemas.wedge_schema import WedgeSpec
from app.services import oracle_service
from app.services.geometry_service import (
    LOWER,
    UPPER,
    ball_sector,
    check_site,
    closure,
    contains,
    degree,
    gamma_ray,
    is_connected,
    neighbors,
    outer_boundary,
    sphere,
    spread
)
from app.services.trial_service import UniformStream, run_trials, trial_stream
from app.services.walk_service import WalkContext, build_walk_context, jump_ladder, walk_from

logger = logging.getLogger(__name__)

ESCAPE_CONSTANT = 4.0 / math.pi
SPREAD_SOURCES = 16
DOMINANCE_TOLERANCE = 1e-9
WALL = "wall"
RING = "ring"
TARGET = "target"
BLOCKER = "blocker"


# =========================================================
# Closed forms
# =========================================================

def continuous_escape_probability(phi: float, K: float) -> float:
    """
    (2/pi) arctan(2 K^{pi/2phi} / (K^{pi/phi} - 1)) for a Brownian motion in a
    wedge of opening phi, started on the unit arc, to reach radius K before
    one of the walls.
    """
    if not 0 < phi <= math.pi or K <= 1:
        raise InvalidParameterException(f"need phi in (0, pi] and K > 1, got phi={phi}, K={K}")
    # written in s = K^{-pi/2phi} so large K never overflows
    s = K ** (-math.pi / (2.0 * phi))
    return (2.0 / math.pi) * math.atan2(2.0 * s, 1.0 - s * s)


def escape_upper_bound(phi: float, K: float) -> EscapeBound:
    """C / K^{pi/2phi} with C = 4/pi, since arctan(s) <= s."""
    if K < 2:
        raise InvalidParameterException(f"the escape bound is stated for K >= 2, got {K}")
    formula = continuous_escape_probability(phi, K)
    bound = ESCAPE_CONSTANT * K ** (-math.pi / (2.0 * phi))
    holds = formula <= bound * (1.0 + 1e-12)
    if not holds:
        logger.error(f"Escape formula {formula} exceeds its bound {bound} at phi={phi}, K={K}")
    return EscapeBound(formula=formula, bound=bound, constant=ESCAPE_CONSTANT, holds=holds)


def fit_exponent(xs: Sequence[float], ys: Sequence[float]) -> ExponentFit:
    """Log-log least squares with a 95% Student-t half-width on the slope."""
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    if len(xs) < 3 or len(xs) != len(ys):
        raise DegenerateFitException(f"need at least 3 paired points, got {len(xs)} and {len(ys)}")
    if np.any(xs <= 0) or np.any(ys <= 0):
        raise DegenerateFitException("log-log fit needs strictly positive values")
    log_x, log_y = np.log(xs), np.log(ys)
    if np.ptp(log_x) == 0:
        raise DegenerateFitException("all x values coincide")
    fit = stats.linregress(log_x, log_y)
    half_width = float(stats.t.ppf(0.975, len(xs) - 2) * fit.stderr)
    r_squared = min(max(float(fit.rvalue) ** 2, 0.0), 1.0)
    return ExponentFit(log_x=log_x.tolist(), log_y=log_y.tolist(), slope=float(fit.slope),
                       intercept=float(fit.intercept), r_squared=r_squared, stderr=float(fit.stderr),
                       half_width=half_width)


# =========================================================
# Shared machinery
# =========================================================

def _stderr(p: float, n: int) -> float:
    return math.sqrt(max(p * (1.0 - p), 0.0) / n) if n > 0 else 0.0


def _check_backend(backend: str) -> None:
    if backend not in (ORACLE, MC):
        raise InvalidParameterException(f"backend must be '{ORACLE}' or '{MC}', got {backend!r}")


def _check_feasible(domain: SiteSet) -> None:
    if len(domain) > settings.ORACLE_MAX_FREE_SITES:
        raise InfeasibleProblemException(
            f"{len(domain)} sites exceed the oracle limit of {settings.ORACLE_MAX_FREE_SITES}"
        )


def _walk_context(spec: WedgeSpec, stop: StopSpec, forbidden: SiteSet, accelerate: bool) -> WalkContext:
    if accelerate:
        return build_walk_context(spec, stop, forbidden=forbidden, ladder=jump_ladder())
    return build_walk_context(spec, stop)


def _tally(context: WalkContext, start: Callable[[UniformStream], Site], trials: int, seed: int,
           experiment: str, workers: Optional[int]) -> OutcomeTally:
    def one(trial: int):
        stream = trial_stream(seed, experiment, trial)
        return walk_from(context, start(stream), stream)

    tally = OutcomeTally()
    for outcome in run_trials(one, trials, workers):
        tally = tally.add(outcome)
    if tally.cap_hits:
        logger.warning(f"{experiment}: {tally.cap_hits} of {trials} trials hit the step cap")
    return tally


def _uniform_on(sites: SiteSet) -> Callable[[UniformStream], Site]:
    ordered = sites.sorted_sites()
    return lambda stream: ordered[stream.choice_index(len(ordered))]


def escape_before(spec: WedgeSpec, r: float, L: float, blocker: SiteSet) -> Dict[Site, float]:
    """
    P^y(tau+ of dW^L < tau+ of blocker) for every y on dW^r, solved exactly.
    Sites of dW^L inside the blocker count as blocked.
    """
    target = sphere(spec, L).difference(blocker)
    starts = sphere(spec, r)
    if not target:
        return {y: 0.0 for y in starts}
    domain = ball_sector(spec, L).union(sphere(spec, L))
    _check_feasible(domain)
    absorbing = {TARGET: target}
    wall = blocker.intersection(domain)
    if wall:
        absorbing[BLOCKER] = wall
    problem = HarmonicProblem(spec, domain, absorbing, STRICT)
    solution = oracle_service.solve_potential(problem, TARGET)
    boundary = {TARGET: 1.0, BLOCKER: 0.0}
    # first-step analysis gives the return-time reading for every start
    return {y: oracle_service.one_step_average(problem, solution, y, boundary)[0] for y in starts}


# =========================================================
# Lattice escape
# =========================================================

def lattice_blocker(spec: WedgeSpec, r: float, L: float, inner: str = WALL) -> SiteSet:
    """
    The set the escaping walker must avoid. `wall` is the lower discrete
    boundary from the apex out to radius L; `ring` adds dW^r and starts the
    wall at radius r.
    """
    if inner == WALL:
        return gamma_ray(spec, LOWER, 0, L)
    if inner == RING:
        return gamma_ray(spec, LOWER, r, L)
    raise InvalidParameterException(f"inner must be '{WALL}' or '{RING}', got {inner!r}")


def lattice_escape_experiment(spec: WedgeSpec, r: float, L: float, backend: str = ORACLE,
                              trials: int = 10000, seed: int = 0, inner: str = WALL,
                              accelerate: bool = True, workers: Optional[int] = None) -> EscapeEstimate:
    """sup over y on dW^r of P^y(reach dW^L before the lower boundary)."""
    _check_backend(backend)
    if not 0 < r < L:
        raise InvalidParameterException(f"need 0 < r < L, got r={r}, L={L}")
    if r < 8 or L / r < 2:
        logger.warning(f"Lattice escape at r={r}, L={L} is outside the calibrated range r >= 8, L/r >= 2")
    blocker = lattice_blocker(spec, r, L, inner)
    continuous = continuous_escape_probability(spec.phi, L / r) if spec.phi > 0 else 0.0

    if backend == ORACLE:
        values = escape_before(spec, r, L, blocker)
        best = max(values, key=lambda y: (values[y], y))
        estimate, stderr, sources, n_trials, caps = values[best], 0.0, len(values), None, 0
    else:
        target = sphere(spec, L).difference(blocker)
        stop = StopSpec(absorb_sets=[AbsorbSet(label=TARGET, sites=target),
                                     AbsorbSet(label=BLOCKER, sites=blocker)], strict=True)
        context = _walk_context(spec, stop, target.union(blocker), accelerate)
        best, estimate, caps = None, -1.0, 0
        picks = spread(sphere(spec, r), SPREAD_SOURCES)
        for y in picks:
            tally = _tally(context, lambda _, y=y: y, trials, seed, f"escape:{y.x},{y.y}", workers)
            caps += tally.cap_hits
            if tally.fraction(TARGET) > estimate:
                best, estimate = y, tally.fraction(TARGET)
        stderr, sources, n_trials = _stderr(estimate, trials), len(picks), trials

    relative = abs(estimate - continuous) / continuous if continuous > 0 else math.inf
    logger.info(f"Lattice escape r={r}, L={L} ({backend}, {inner}): {estimate:.6f} vs continuum {continuous:.6f}")
    return EscapeEstimate(estimate=estimate, stderr=stderr, backend=backend, r=r, L=L, inner=inner,
                          continuous=continuous, relative_error=relative, argmax=[best.x, best.y],
                          sources=sources, trials=n_trials, cap_hits=caps)


# =========================================================
# Beurling-type estimates
# =========================================================

def _ray_set(spec: WedgeSpec, side: str, r: float, L: float) -> SiteSet:
    # ray from the apex so dW^r stays outside the set; radius L + 1 takes it through dW^L
    return ball_sector(spec, r).union(gamma_ray(spec, side, 0, L + 1))


def lower_ray_set(spec: WedgeSpec, r: float, L: float) -> SiteSet:
    """W^r with the lower discrete boundary ray out to dW^L."""
    return _ray_set(spec, LOWER, r, L)


def upper_ray_set(spec: WedgeSpec, r: float, L: float) -> SiteSet:
    return _ray_set(spec, UPPER, r, L)


def random_connected_set(spec: WedgeSpec, r: float, L: float, rng: UniformStream,
                         extra_sites: int = 0) -> SiteSet:
    """
    W^r plus the trace of a wedge walk from a uniform site of dW^r to its first
    visit of dW^L, grown by `extra_sites` Eden steps inside W^L.
    """
    core = ball_sector(spec, r)
    ring = sphere(spec, r).sorted_sites()
    cap = int(100 * L * L) + 1000
    for _ in range(100):
        trace = SiteSet([ring[rng.choice_index(len(ring))]])
        here = next(iter(trace))
        for _ in range(cap):
            if here.norm() >= L:
                break
            options = neighbors(spec, here)
            here = options[rng.choice_index(len(options))]
            trace.add(here)
        if here.norm() >= L:
            break
    else:
        raise InfeasibleProblemException(f"no walk from dW^{r} reached dW^{L}")

    out = core.union(trace)
    for _ in range(extra_sites):
        frontier = [s for s in outer_boundary(spec, out).sorted_sites() if s.norm() < L]
        if not frontier:
            break
        out.add(frontier[rng.choice_index(len(frontier))])
    return out


def _check_blocking_set(spec: WedgeSpec, r: float, L: float, A: SiteSet) -> None:
    if not is_connected(A):
        raise InvalidSetException("the set must be connected")
    if not all(contains(spec, s) for s in A):
        raise InvalidSetException("the set must lie inside the wedge")
    if A.isdisjoint(sphere(spec, L)):
        raise InvalidSetException(f"the set must reach dW^{L}")
    if not ball_sector(spec, r).issubset(A):
        raise InvalidSetException(f"the set must contain W^{r}")


def inner_ring_harmonic_measure(spec: WedgeSpec, r: float, A: SiteSet, far_factor: float = 2.0,
                                backend: str = ORACLE, trials: int = 10000, seed: int = 0,
                                accelerate: bool = True, workers: Optional[int] = None) -> HarmonicMeasureEstimate:
    """
    Mass that the harmonic measure of dA, seen from walkers started uniformly on
    a far ring, puts on dW^r.
    """
    _check_backend(backend)
    source_radius = far_factor * max(A.radius(), r) + 2.0
    edge = outer_boundary(spec, A)
    hit_inner = edge.intersection(sphere(spec, r))
    sources = sphere(spec, source_radius)
    if not hit_inner:
        return HarmonicMeasureEstimate(probability=0.0, stderr=0.0, backend=backend,
                                       source_radius=source_radius, trials=trials if backend == MC else None)
    rest = edge.difference(hit_inner)
    domain = ball_sector(spec, source_radius + 2).difference(A)
    absorbing = [AbsorbSet(label="inner", sites=hit_inner)]
    if rest:
        absorbing.append(AbsorbSet(label="rest", sites=rest))

    if backend == ORACLE:
        _check_feasible(domain)
        problem = HarmonicProblem(spec, domain, {a.label: a.sites for a in absorbing}, REFLECT)
        solution = oracle_service.solve_potential(problem, "inner")
        values = [solution.value_at(x, {"inner": 1.0, "rest": 0.0}) for x in sources]
        return HarmonicMeasureEstimate(probability=float(np.mean(values)), stderr=0.0, backend=backend,
                                       source_radius=source_radius)

    stop = StopSpec(absorb_sets=absorbing, domain=domain, reflect_outside=True)
    context = _walk_context(spec, stop, edge, accelerate)
    tally = _tally(context, _uniform_on(sources), trials, seed, f"beurling:{r:g}:{len(A)}", workers)
    p = tally.fraction("inner")
    return HarmonicMeasureEstimate(probability=p, stderr=_stderr(p, trials), backend=backend,
                                   source_radius=source_radius, trials=trials, cap_hits=tally.cap_hits)


def beurling_experiment(spec: WedgeSpec, r: float, L_list: Sequence[float],
                        set_generator: Callable[[WedgeSpec, float, float], SiteSet] = lower_ray_set,
                        backend: str = ORACLE, trials: int = 10000, seed: int = 0,
                        far_factor: float = 2.0, workers: Optional[int] = None) -> BeurlingResult:
    """Fit log P(reach dW^r) against log(L/r) with r held fixed."""
    rows = []
    for L in L_list:
        if L / r < 4:
            raise InvalidParameterException(f"L/r must be at least 4, got L={L}, r={r}")
        A = set_generator(spec, r, L)
        _check_blocking_set(spec, r, L, A)
        measure = inner_ring_harmonic_measure(spec, r, A, far_factor, backend, trials, seed, workers=workers)
        rows.append(BeurlingRow(L=L, ratio=L / r, probability=measure.probability, stderr=measure.stderr))
        logger.info(f"Beurling r={r}, L={L}: P={measure.probability:.3e}")
    fit = fit_exponent([row.ratio for row in rows], [row.probability for row in rows])
    theory = -math.pi / (2.0 * spec.phi) if spec.phi > 0 else -math.inf
    return BeurlingResult(r=r, rows=rows, fit=fit, theory_slope=theory)


def dominance_check(spec: WedgeSpec, r: float, L: float, A: SiteSet) -> DominanceResult:
    """
    Compare max over dW^r of P^y(tau+ dW^L < tau+ closure(A)) with the same
    quantity for the upper and lower boundary rays.
    """
    _check_blocking_set(spec, r, L, A)
    lhs = escape_before(spec, r, L, closure(spec, A))
    upper = escape_before(spec, r, L, gamma_ray(spec, UPPER, r, L))
    lower = escape_before(spec, r, L, gamma_ray(spec, LOWER, r, L))
    rhs = max(max(upper.values()), max(lower.values()))
    worst = max(lhs.values())
    exceed = sum(lhs[y] > max(upper[y], lower[y]) + DOMINANCE_TOLERANCE for y in lhs)
    dominated = worst <= rhs + DOMINANCE_TOLERANCE
    if not dominated:
        logger.error(f"Dominance violated at r={r}, L={L}: {worst:.12f} > {rhs:.12f}")
    return DominanceResult(lhs=worst, rhs_upper=max(upper.values()), rhs_lower=max(lower.values()),
                           dominated=dominated, pointwise_exceedances=exceed, sites_checked=len(lhs))


# =========================================================
# Ring escape and exit times
# =========================================================

def ring_escape_experiment(spec: WedgeSpec, R: float, C: float, eps: float, trials: int = 10000,
                           seed: int = 0, backend: str = ORACLE, accelerate: bool = True,
                           workers: Optional[int] = None) -> RingEscapeResult:
    """P(hit dW^{R/C} before dW^{C^eps R}) from a uniform start on dW^R."""
    _check_backend(backend)
    if C <= 1 or eps <= 0:
        raise InvalidParameterException(f"need C > 1 and eps > 0, got C={C}, eps={eps}")
    if R / C < 4:
        raise InvalidParameterException(f"R/C must be at least 4, got {R / C}")
    inner_r, outer_r = R / C, C ** eps * R
    if outer_r - inner_r < 2:
        raise InvalidParameterException("the inner and outer rings must be at least 2 apart")
    inner, outer = sphere(spec, inner_r), sphere(spec, outer_r)
    starts = sphere(spec, R)
    limit = eps / (1.0 + eps)

    if backend == ORACLE:
        domain = ball_sector(spec, outer_r).union(outer).difference(ball_sector(spec, inner_r))
        _check_feasible(domain)
        problem = HarmonicProblem(spec, domain, {"inner": inner, "outer": outer}, STRICT)
        solution = oracle_service.solve_potential(problem, "inner")
        boundary = {"inner": 1.0, "outer": 0.0}
        p = float(np.mean([solution.value_at(x, boundary) for x in starts]))
        stderr, n_trials, caps = 0.0, None, 0
    else:
        stop = StopSpec(absorb_sets=[AbsorbSet(label="inner", sites=inner), AbsorbSet(label="outer", sites=outer)])
        context = _walk_context(spec, stop, inner.union(outer), accelerate)
        tally = _tally(context, _uniform_on(starts), trials, seed, f"ring:{R:g}:{C:g}:{eps:g}", workers)
        p, stderr, n_trials, caps = tally.fraction("inner"), _stderr(tally.fraction("inner"), trials), trials, tally.cap_hits
    logger.info(f"Ring escape R={R}, C={C}, eps={eps} ({backend}): {p:.4f} vs limit {limit:.4f}")
    return RingEscapeResult(inner_first_prob=p, stderr=stderr, limit=limit, backend=backend,
                            inner_radius=inner_r, start_radius=R, outer_radius=outer_r,
                            trials=n_trials, cap_hits=caps)


def far_exit_time_experiment(spec: WedgeSpec, R: float, T: float, eps: float, trials: int = 1000,
                             seed: int = 0, sources: int = SPREAD_SOURCES,
                             workers: Optional[int] = None) -> FarExitResult:
    """
    max over a spread of x on dW^R of P^x(reach dW^{T^{1/2+eps} R} within T R^2 steps).
    Always the plain engine: box jumps do not keep the step clock.
    """
    if T <= 0 or eps <= 0:
        raise InvalidParameterException(f"need T > 0 and eps > 0, got T={T}, eps={eps}")
    cap = int(math.ceil(T * R * R))
    if cap > settings.STEP_CAP:
        raise InvalidParameterException(f"T R^2 = {cap} exceeds the step budget {settings.STEP_CAP}")
    exit_r = T ** (0.5 + eps) * R
    stop = StopSpec(escape_radius=exit_r, step_cap=cap)
    context = build_walk_context(spec, stop)
    per_source, caps = [], 0
    for x in spread(sphere(spec, R), sources):
        tally = _tally(context, lambda _, x=x: x, trials, seed, f"far-exit:{T:g}:{x.x},{x.y}", workers)
        per_source.append(tally.escaped / trials)
        caps += tally.cap_hits
    p = max(per_source)
    return FarExitResult(probability=p, stderr=_stderr(p, trials), R=R, T=T, eps=eps, exit_radius=exit_r,
                         step_cap=cap, trials=trials, per_source=per_source, cap_hits=caps)


def far_exit_time_scan(spec: WedgeSpec, R: float, T_values: Sequence[float] = (4, 16, 64), eps: float = 0.1,
                       trials: int = 1000, seed: int = 0, workers: Optional[int] = None) -> FarExitScan:
    rows = [far_exit_time_experiment(spec, R, T, eps, trials, seed, workers=workers) for T in T_values]
    probabilities = [row.probability for row in rows]
    decreasing = all(b <= a for a, b in zip(probabilities, probabilities[1:]))
    fit = None
    if len(rows) >= 3 and all(p > 0 for p in probabilities):
        fit = fit_exponent(list(T_values), probabilities)
    return FarExitScan(rows=rows, decreasing=decreasing, fit=fit)


def small_set_hit_probability(spec: WedgeSpec, R: float, T: float, A: Optional[SiteSet] = None,
                              trials: int = 1000, seed: int = 0, sources: int = SPREAD_SOURCES,
                              workers: Optional[int] = None) -> SmallSetHit:
    """max over a spread of x on dW^R of P^x(hit A within T R^2 steps)."""
    if A is None:
        A = SiteSet([Site(0, 0)]).union(neighbors(spec, Site(0, 0)))
    cap = int(math.ceil(T * R * R))
    if cap > settings.STEP_CAP:
        raise InvalidParameterException(f"T R^2 = {cap} exceeds the step budget {settings.STEP_CAP}")
    context = build_walk_context(spec, StopSpec(absorb_sets=[AbsorbSet(label="A", sites=A)], step_cap=cap))
    per_source = []
    for x in spread(sphere(spec, R), sources):
        tally = _tally(context, lambda _, x=x: x, trials, seed, f"small-set:{T:g}:{x.x},{x.y}", workers)
        per_source.append(tally.fraction("A"))
    p = max(per_source)
    return SmallSetHit(probability=p, stderr=_stderr(p, trials), R=R, T=T, set_size=len(A),
                       trials=trials, per_source=per_source)


# =========================================================
# Harmonic measure convergence and resistance
# =========================================================

def convergence_diagnostic(spec: WedgeSpec, A: SiteSet, R_list: Sequence[float],
                           sources: int = SPREAD_SOURCES) -> ConvergenceTable:
    """Max pairwise TV between hit laws of A from a spread of sources on dW^R."""
    if not A:
        raise InvalidSetException("A must be non-empty")
    if A.radius() >= min(R_list) / 4:
        raise InvalidParameterException(f"A must lie inside W^{min(R_list) / 4:g}")
    rows = []
    for R in sorted(R_list):
        domain = ball_sector(spec, 2 * R)
        _check_feasible(domain)
        problem = HarmonicProblem(spec, domain, {"A": A}, REFLECT)
        picks = spread(sphere(spec, R), sources)
        laws = oracle_service.hit_distributions(problem, picks)
        worst = max((p.tv(q) for p, q in combinations(laws, 2)), default=0.0)
        rows.append(ConvergenceRow(R=R, max_tv=worst, sources=len(picks)))
        logger.info(f"Convergence R={R}: max TV {worst:.3e} over {len(picks)} sources")
    decreasing = all(b.max_tv < a.max_tv for a, b in zip(rows, rows[1:]))
    return ConvergenceTable(rows=rows, decreasing=decreasing)


def resistance_scan(spec: WedgeSpec, L_list: Sequence[float]) -> ResistanceScan:
    """R_eff(origin <-> dW^L) against log L, and the escape probability times log L."""
    origin = check_site((0, 0))
    rows = []
    for L in sorted(L_list):
        resistance = oracle_service.effective_resistance(spec, origin, sphere(spec, L), L + 1)
        p = 1.0 / (degree(spec, origin) * resistance)
        rows.append(ResistanceRow(L=L, resistance=resistance, escape_probability=p, scaled_escape=p * math.log(L)))
    if len(rows) < 3:
        raise DegenerateFitException("a resistance scan needs at least 3 radii")
    fit = stats.linregress(np.log([row.L for row in rows]), [row.resistance for row in rows])
    scaled = [row.scaled_escape for row in rows]
    return ResistanceScan(rows=rows, slope=float(fit.slope), intercept=float(fit.intercept),
                          r_squared=float(fit.rvalue) ** 2, band_ratio=max(scaled) / min(scaled))
