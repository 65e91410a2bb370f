import logging
import math
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import ndimage, stats

from app.core.config import settings
from app.core.exceptions import (
    DegenerateFitException,
    InvalidParameterException,
    StorageSystemException,
    TrialCapExceededException,
    UnsupportedRegimeException
)
from app.models.aggregate import Aggregate
from app.models.hit_distribution import HitDistribution
from app.models.jump_table import JumpLadder
from app.models.site import Site
from app.schemas.dla_schema import (
    INCONCLUSIVE,
    SATISFIED,
    VIOLATED,
    GrowthRateEstimate,
    GrowthResult,
    SamplerConsistency,
    SamplerParams,
    StabilizationExponent,
    StabilizationLedger,
    StabilizationReport,
    StabilizationRow
)
from app.schemas.wedge_schema import WedgeSpec
from app.services.geometry_service import STEPS, sphere_array
from app.services.trial_service import UniformStream, run_trials, trial_stream
from app.services.walk_service import WalkContext, jump_ladder, walk_from

logger = logging.getLogger(__name__)

GROW_EXPERIMENT = "grow"
ATTACH_EXPERIMENT = "attach"
ATTACH_LABEL = "attach"
MIN_TRAJECTORY = 100
THRESHOLD_CAP = 2 ** 63 - 1


class _StartRing:
    """Start sites on dW^{R_s}; recomputed only when R_s changes."""

    def __init__(self, spec: WedgeSpec):
        self.spec = spec
        self.radius: Optional[float] = None
        self.sites: Optional[np.ndarray] = None

    def get(self, radius: float) -> np.ndarray:
        if radius != self.radius:
            self.radius = radius
            self.sites = sphere_array(self.spec, radius)
        return self.sites


def _ladder_for(params: SamplerParams) -> JumpLadder:
    if params.jump_k_max < 1:
        return JumpLadder.empty()
    return jump_ladder(params.jump_k_max)


def sample_attachment(spec: WedgeSpec, agg: Aggregate, params: SamplerParams, rng: UniformStream,
                      ladder: Optional[JumpLadder] = None, start_radius: Optional[float] = None,
                      ring: Optional[_StartRing] = None) -> Tuple[Site, int, float]:
    """
    Draw one attachment site from (approximately) the harmonic measure from infinity of dA.

    Returns (site, restarts, walk steps equivalent).
    """
    ladder = ladder if ladder is not None else _ladder_for(params)
    r_start = start_radius or params.start_radius(agg.rho)
    r_escape = params.escape_factor * r_start
    # boxes must stay clear of the closure of A, which sits inside |x| <= rho + 1
    context = WalkContext(spec, agg.grid, [ATTACH_LABEL], r_escape,
                          params.step_cap or settings.STEP_CAP, strict=False,
                          ladder=ladder, radial_limit=agg.rho + 1.0)
    starts = (ring or _StartRing(spec)).get(r_start)
    steps = 0.0
    for restart in range(params.max_restarts):
        i = rng.choice_index(len(starts))
        outcome = walk_from(context, Site(int(starts[i, 0]), int(starts[i, 1])), rng)
        steps += outcome.steps_equivalent
        if outcome.absorbed:
            return outcome.site, restart, steps
        if outcome.cap_hit:
            logger.warning(f"Attachment walk hit its step cap; restarting (restart {restart + 1})")
    logger.error(f"Sampler gave up after {params.max_restarts} restarts at n={agg.n}, rho={agg.rho:.2f}")
    raise TrialCapExceededException(
        f"no attachment after {params.max_restarts} restarts",
        diagnostics={"n": agg.n, "rho": agg.rho, "start_radius": r_start, "escape_radius": r_escape,
                     "steps_equivalent": steps},
    )


def grow(spec: WedgeSpec, n_particles: int, params: SamplerParams, seed: int,
         dial_radii: Optional[Sequence[float]] = None, exponent: Optional[float] = None,
         resume_from: Optional[Aggregate] = None,
         partial_path: Optional[Path] = None) -> Tuple[Aggregate, GrowthResult]:
    """
    Grow the aggregate to `n_particles` attached particles.

    Particle n draws from its own stream (seed, "grow", n), so a resumed run
    continues exactly where an uninterrupted one would be. On sampler failure
    the partial trajectory is written to `partial_path` before re-raising.
    """
    if n_particles < 1:
        raise InvalidParameterException(f"n_particles must be at least 1, got {n_particles}")
    if exponent is None and spec.phi < math.pi / 4:
        exponent = default_exponent(spec)
    if exponent is None:
        logger.warning(f"No stabilization exponent for phi={spec.phi:.4f} >= pi/4; ledger kept without a report")
    radii = list(dial_radii) if dial_radii else default_dial_radii(exponent or 2.0, n_particles)
    agg = resume_from if resume_from is not None else Aggregate(spec)
    if agg.spec != spec:
        raise InvalidParameterException("resumed aggregate was grown in a different wedge")
    if agg.n > n_particles:
        raise InvalidParameterException(f"resumed aggregate already has {agg.n} > {n_particles} particles")

    ledger = StabilizationLedger.recompute(_norms(agg), radii, exponent)
    ladder = _ladder_for(params)
    ring = _StartRing(spec)
    restarts = 0
    logger.info(f"Growing {spec.label()} from n={agg.n} to n={n_particles} (seed {seed})")
    try:
        for n in range(agg.n + 1, n_particles + 1):
            stream = trial_stream(seed, GROW_EXPERIMENT, n)
            site, extra, steps = sample_attachment(spec, agg, params, stream, ladder=ladder, ring=ring)
            agg.attach(site, steps)
            ledger.record(n, site.norm())
            restarts += extra
            if n % 1000 == 0:
                logger.info(f"n={n}: rho={agg.rho:.1f}, diam={agg.diam():.1f}, restarts so far {restarts}")
    except TrialCapExceededException:
        if partial_path is not None:
            _write_partial(agg, partial_path)
        raise

    verified = ledger == StabilizationLedger.recompute(_norms(agg), radii, exponent)
    if not verified:
        logger.error("Incremental stabilization ledger disagrees with the recomputed one")
    return agg, GrowthResult(n_particles=n_particles, ledger=ledger, restarts=restarts, ledger_verified=verified)


def _norms(agg: Aggregate) -> List[float]:
    return [s.norm() for s in agg.sites]


def _write_partial(agg: Aggregate, path: Path) -> None:
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(agg.to_text())
        logger.warning(f"Persisted partial aggregate with {agg.n} particles to {path}")
    except OSError as e:
        logger.error(f"Could not persist partial aggregate to {path}: {e}")
        raise StorageSystemException(str(e))


# =========================================================
# Stabilization
# =========================================================

def stabilization_exponent(spec: WedgeSpec) -> StabilizationExponent:
    phi = spec.phi
    if phi >= math.pi / 4:
        raise UnsupportedRegimeException(phi, "pi/4")
    gap = math.pi - 4 * phi
    return StabilizationExponent(
        phi=phi,
        a_min=(2 * math.pi + 4 * phi) / gap,
        a_strong=(2 * math.pi + 8 * phi) / gap,
        b_threshold_strict=(math.pi + 4 * phi) / gap,
        b_threshold_weak=(math.pi + 2 * phi) / gap,
    )


def default_exponent(spec: WedgeSpec) -> float:
    """The stronger of the two stabilization exponents."""
    return stabilization_exponent(spec).a_strong


def default_dial_radii(a: float, n_particles: int) -> List[float]:
    """4, 8, 16, ... while R^a <= n_particles; always at least [4]."""
    radii = [4.0]
    # log space: R^a overflows a float as phi approaches pi/4
    limit = math.log(n_particles) + 1e-12
    while a * math.log(2 * radii[-1]) <= limit:
        radii.append(2 * radii[-1])
    return radii


def dial_threshold(R: float, a: float) -> int:
    """ceil(R^a), capped at THRESHOLD_CAP once it leaves the int64 range."""
    if a * math.log(R) >= math.log(THRESHOLD_CAP):
        return THRESHOLD_CAP
    return min(math.ceil(R ** a), THRESHOLD_CAP)


def stabilization_report(ledger: StabilizationLedger, a: float, n_particles: int) -> StabilizationReport:
    rows = []
    for R in ledger.radii:
        threshold = dial_threshold(R, a)
        t_last = ledger.t_last[R]
        if threshold > n_particles:
            status = INCONCLUSIVE
        elif t_last < threshold:
            status = SATISFIED
        else:
            status = VIOLATED
        rows.append(StabilizationRow(radius=R, t_last=t_last, threshold=threshold, status=status))
    conclusive = [r for r in rows if r.status != INCONCLUSIVE]
    fraction = sum(r.status == SATISFIED for r in conclusive) / len(conclusive) if conclusive else None
    return StabilizationReport(exponent=a, n_particles=n_particles, rows=rows, fraction_satisfied=fraction)


# =========================================================
# Shape statistics
# =========================================================

def count_arms(agg: Aggregate, r_inner: float, r_outer: float) -> int:
    """
    Components of A in the annulus r_inner <= |x| < r_outer that touch B_{r_inner}
    and reach |x| >= r_outer - 1. A finite-scale proxy for the number of ends.
    """
    if not r_inner < r_outer:
        raise InvalidParameterException(f"need r_inner < r_outer, got {r_inner} and {r_outer}")
    if r_outer > agg.rho:
        raise InvalidParameterException(f"r_outer={r_outer} is beyond the aggregate radius {agg.rho:.2f}")
    xy = agg.coordinates()
    n2 = (xy * xy).sum(axis=1)
    band = xy[(n2 >= r_inner * r_inner) & (n2 < r_outer * r_outer)]
    if len(band) == 0:
        return 0
    lo = band.min(axis=0)
    raster = np.zeros(tuple(band.max(axis=0) - lo + 1), dtype=bool)
    raster[band[:, 0] - lo[0], band[:, 1] - lo[1]] = True
    labels, _ = ndimage.label(raster)
    component = labels[band[:, 0] - lo[0], band[:, 1] - lo[1]]

    touches_inner = np.zeros(len(band), dtype=bool)
    for dx, dy in STEPS:
        nx, ny = band[:, 0] + dx, band[:, 1] + dy
        touches_inner |= nx * nx + ny * ny < r_inner * r_inner
    reaches_outer = np.sqrt((band * band).sum(axis=1)) >= r_outer - 1
    inner_ids = set(component[touches_inner].tolist())
    outer_ids = set(component[reaches_outer].tolist())
    return len(inner_ids & outer_ids)


def growth_rate_estimate(diameters: Sequence[float],
                         window: Optional[Tuple[int, int]] = None) -> GrowthRateEstimate:
    """
    Least-squares slope of log diam(A_n) against log n. `diameters[n]` is diam(A_n);
    the default window is the trailing decade [N/10, N].
    """
    n_total = len(diameters) - 1
    if len(diameters) < MIN_TRAJECTORY:
        raise DegenerateFitException(f"need at least {MIN_TRAJECTORY} diameters, got {len(diameters)}")
    start, end = window if window is not None else (max(1, n_total // 10), n_total)
    if not 1 <= start < end <= n_total:
        raise DegenerateFitException(f"window [{start}, {end}] is not inside [1, {n_total}]")
    ns = np.arange(start, end + 1, dtype=np.float64)
    ds = np.asarray(diameters[start:end + 1], dtype=np.float64)
    if np.any(ds <= 0):
        raise DegenerateFitException("diameters in the window must be positive")
    if len(ns) < 3:
        raise DegenerateFitException("window holds fewer than 3 points")
    fit = stats.linregress(np.log(ns), np.log(ds))
    return GrowthRateEstimate(beta_hat=float(fit.slope), stderr=float(fit.stderr), n_points=len(ns),
                              window_start=start, window_end=end)


# =========================================================
# Sampler diagnostics
# =========================================================

def frozen_attachment_distribution(spec: WedgeSpec, agg: Aggregate, params: SamplerParams, samples: int,
                                   seed: int, start_radius: Optional[float] = None,
                                   workers: Optional[int] = None) -> HitDistribution:
    """Empirical attachment law of a fixed aggregate."""
    ladder = _ladder_for(params)
    r_start = start_radius or params.start_radius(agg.rho)
    ring = _StartRing(spec)
    ring.get(r_start)
    experiment = f"{ATTACH_EXPERIMENT}:{r_start:g}"

    def one(trial: int) -> Site:
        stream = trial_stream(seed, experiment, trial)
        site, _, _ = sample_attachment(spec, agg, params, stream, ladder=ladder,
                                       start_radius=r_start, ring=ring)
        return site

    counts: Dict[Site, int] = {}
    for site in run_trials(one, samples, workers):
        counts[site] = counts.get(site, 0) + 1
    return HitDistribution.from_counts(Site(0, 0), counts, samples)


def sampler_consistency(spec: WedgeSpec, agg: Aggregate, params: SamplerParams, samples: int,
                        seed: int, workers: Optional[int] = None) -> SamplerConsistency:
    """TV distance between attachment laws sampled from R_s and from 2 R_s."""
    r_start = params.start_radius(agg.rho)
    near = frozen_attachment_distribution(spec, agg, params, samples, seed, r_start, workers)
    far = frozen_attachment_distribution(spec, agg, params, samples, seed, 2 * r_start, workers)
    tv = near.tv(far)
    logger.info(f"Sampler consistency at n={agg.n}: TV={tv:.4f} between R_s={r_start:g} and {2 * r_start:g}")
    return SamplerConsistency(tv=tv, samples=samples, start_radius=r_start, doubled_start_radius=2 * r_start)
