import csv
import hashlib
import io
import logging
import math
import tempfile
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Dict, Optional, Tuple

from app.core.config import settings
from app.core.exceptions import (
    DigestMismatchException,
    ReplayMismatchException,
    ResourceConflictException,
    RunNotFoundException,
    StorageSystemException,
    VersionMismatchException
)
from app.models.aggregate import Aggregate
from app.models.harmonic_problem import REFLECT, HarmonicProblem
from app.models.hit_distribution import HitDistribution
from app.models.site import Site, SiteSet
from app.schemas.dla_schema import SamplerParams
from app.schemas.run_schema import (
    BeurlingRequest,
    ConvergeRequest,
    DominanceRequest,
    EscapeRequest,
    ExperimentReport,
    FarExitRequest,
    GrowRequest,
    OracleRequest,
    ReplayReport,
    RingRequest,
    RunManifest,
    RunRequest,
    request_from_dict
)
from app.schemas.wedge_schema import WedgeSpec, WedgeSummary
from app.services import dla_service, estimates_service, oracle_service
from app.services.geometry_service import ball_sector, degree_one_sites, is_connected, sphere
from app.services.trial_service import StreamLedger, run_trials, trial_stream

logger = logging.getLogger(__name__)

MANIFEST = "manifest.json"
REPORT_CSV = "report.csv"
REPORT_JSON = "report.json"
AGGREGATE_CSV = "aggregate.csv"
STABILIZATION_CSV = "stabilization.csv"
HIT_DISTRIBUTION_CSV = "hit_distribution.csv"
HIT_HEADER = ["source_x", "source_y", "x", "y", "probability"]


def sha256_text(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def sha256_file(path: Path) -> str:
    try:
        return hashlib.sha256(Path(path).read_bytes()).hexdigest()
    except FileNotFoundError:
        raise RunNotFoundException(str(path))
    except OSError as e:
        logger.error(f"Could not read {path}: {e}")
        raise StorageSystemException(str(e))


# =========================================================
# Writing
# =========================================================

class RunWriter:
    """The single writer of one run directory; records a digest per file."""

    def __init__(self, run_dir: Path):
        self.run_dir = Path(run_dir)
        if (self.run_dir / MANIFEST).exists():
            raise ResourceConflictException(f"{self.run_dir} already holds a run")
        try:
            self.run_dir.mkdir(parents=True, exist_ok=True)
        except OSError as e:
            logger.error(f"Could not create run directory {self.run_dir}: {e}")
            raise StorageSystemException(str(e))
        self.outputs: Dict[str, str] = {}

    def write_text(self, name: str, text: str) -> str:
        try:
            (self.run_dir / name).write_text(text, encoding="utf-8")
        except OSError as e:
            logger.error(f"Could not write {name} into {self.run_dir}: {e}")
            raise StorageSystemException(str(e))
        digest = sha256_text(text)
        self.outputs[name] = digest
        return digest

    def write_manifest(self, manifest: RunManifest) -> Path:
        path = self.run_dir / MANIFEST
        try:
            path.write_text(manifest.model_dump_json(indent=2), encoding="utf-8")
        except OSError as e:
            logger.error(f"Could not write manifest into {self.run_dir}: {e}")
            raise StorageSystemException(str(e))
        return path


def _read_verified(run_dir: Path, name: str, digests: Optional[Dict[str, str]]) -> str:
    run_dir = Path(run_dir)
    if digests is None:
        digests = load_manifest(run_dir).outputs
    path = run_dir / name
    if not path.exists():
        raise RunNotFoundException(str(path))
    actual = sha256_file(path)
    expected = digests.get(name)
    if expected is None:
        raise DigestMismatchException(name, "<not recorded>", actual)
    if actual != expected:
        raise DigestMismatchException(name, expected, actual)
    return path.read_text(encoding="utf-8")


# =========================================================
# Persist / load
# =========================================================

def persist_aggregate(agg: Aggregate, writer: RunWriter) -> str:
    return writer.write_text(AGGREGATE_CSV, agg.to_text())


def load_aggregate(spec: WedgeSpec, run_dir: Path, digests: Optional[Dict[str, str]] = None) -> Aggregate:
    return Aggregate.from_text(spec, _read_verified(run_dir, AGGREGATE_CSV, digests))


def persist_hit_distribution(dist: HitDistribution, writer: RunWriter, name: str = HIT_DISTRIBUTION_CSV) -> str:
    buffer = io.StringIO()
    out = csv.writer(buffer, lineterminator="\n")
    out.writerow(HIT_HEADER)
    for sx, sy, x, y, p in dist.rows():
        out.writerow([sx, sy, x, y, repr(p)])
    return writer.write_text(name, buffer.getvalue())


def load_hit_distribution(run_dir: Path, digests: Optional[Dict[str, str]] = None,
                          name: str = HIT_DISTRIBUTION_CSV) -> HitDistribution:
    reader = csv.reader(io.StringIO(_read_verified(run_dir, name, digests)))
    header = next(reader, None)
    if header != HIT_HEADER:
        raise ResourceConflictException(f"{name} has header {header}, expected {HIT_HEADER}")
    source, masses = None, {}
    for sx, sy, x, y, p in reader:
        source = Site(int(sx), int(sy))
        masses[Site(int(x), int(y))] = float(p)
    if source is None:
        raise ResourceConflictException(f"{name} holds no rows")
    return HitDistribution(source, masses)


def persist_report(report: ExperimentReport, writer: RunWriter) -> Tuple[str, str]:
    return writer.write_text(REPORT_CSV, report.to_csv()), writer.write_text(REPORT_JSON, report.model_dump_json(indent=2))


def load_report(run_dir: Path, digests: Optional[Dict[str, str]] = None) -> ExperimentReport:
    return ExperimentReport.model_validate_json(_read_verified(run_dir, REPORT_JSON, digests))


def load_manifest(run_dir: Path) -> RunManifest:
    path = Path(run_dir) / MANIFEST
    if not path.exists():
        raise RunNotFoundException(str(run_dir))
    try:
        return RunManifest.model_validate_json(path.read_text(encoding="utf-8"))
    except OSError as e:
        logger.error(f"Could not read manifest {path}: {e}")
        raise StorageSystemException(str(e))


# =========================================================
# Runners: request -> outputs, checks, notes
# =========================================================

class RunContext:
    def __init__(self, request: RunRequest, writer: RunWriter):
        self.request = request
        self.spec = request.wedge()
        self.writer = writer
        self.streams = StreamLedger()
        self.checks: Dict[str, bool] = {}
        self.notes: Dict[str, object] = {}
        self.inputs: Dict[str, str] = {}

    @property
    def workers(self) -> Optional[int]:
        return self.request.workers


def _finite(value: float) -> Optional[float]:
    return value if math.isfinite(value) else None


def _run_grow(ctx: RunContext) -> None:
    req: GrowRequest = ctx.request
    params = SamplerParams(start_factor=req.start_factor, escape_factor=req.escape_factor,
                           jump_k_max=req.jump_k_max, max_restarts=req.max_restarts)
    agg, result = dla_service.grow(ctx.spec, req.particles, params, req.seed, exponent=req.exponent,
                                   partial_path=ctx.writer.run_dir / AGGREGATE_CSV)
    ctx.streams.record(dla_service.GROW_EXPERIMENT, req.particles)
    persist_aggregate(agg, ctx.writer)

    exponent = result.ledger.exponent
    rows = []
    if exponent is not None:
        stab = dla_service.stabilization_report(result.ledger, exponent, req.particles)
        rows = [[row.radius, row.t_last, row.threshold, row.status] for row in stab.rows]
        ctx.notes["fraction_satisfied"] = stab.fraction_satisfied
    ctx.writer.write_text(STABILIZATION_CSV, ExperimentReport(
        columns=["radius", "t_last", "threshold", "status"], rows=rows).to_csv())

    summary = [["particles", req.particles], ["rho", agg.rho], ["diameter", agg.diam()],
               ["restarts", result.restarts]]
    fits: Dict[str, object] = {}
    if len(agg.diameters) >= dla_service.MIN_TRAJECTORY:
        rate = dla_service.growth_rate_estimate(agg.diameters)
        fits["growth_rate"] = rate.model_dump()
    if agg.rho >= 8:
        summary.append(["arms_proxy", dla_service.count_arms(agg, agg.rho / 4, agg.rho / 2)])
    if req.consistency_samples:
        consistency = dla_service.sampler_consistency(ctx.spec, agg, params, req.consistency_samples,
                                                      req.seed, ctx.workers)
        ctx.streams.record(f"{dla_service.ATTACH_EXPERIMENT}:{consistency.start_radius:g}", req.consistency_samples)
        ctx.streams.record(f"{dla_service.ATTACH_EXPERIMENT}:{consistency.doubled_start_radius:g}",
                           req.consistency_samples)
        fits["sampler_consistency"] = consistency.model_dump()
    persist_report(ExperimentReport(parameters=req.parameters(), columns=["quantity", "value"],
                                    rows=summary, fits=fits), ctx.writer)

    ctx.checks["ledger_recomputed"] = result.ledger_verified
    ctx.checks["aggregate_connected"] = is_connected(agg.sites)
    ctx.checks["diameter_monotone"] = all(b >= a for a, b in zip(agg.diameters, agg.diameters[1:]))
    ctx.notes["arms_proxy"] = "annulus-crossing components, a finite-scale proxy for ends"


def _run_escape(ctx: RunContext) -> None:
    req: EscapeRequest = ctx.request
    est = estimates_service.lattice_escape_experiment(ctx.spec, req.r, req.L, req.backend, req.trials,
                                                      req.seed, req.inner, workers=ctx.workers)
    if req.backend == "mc":
        ctx.streams.record("escape", req.trials * est.sources)
    rows = [[req.r, req.L, est.estimate, est.stderr, est.continuous, _finite(est.relative_error),
             est.argmax[0], est.argmax[1], est.trials, est.cap_hits]]
    persist_report(ExperimentReport(
        parameters=req.parameters(),
        columns=["r", "L", "estimate", "stderr", "continuous", "relative_error", "argmax_x", "argmax_y",
                 "trials", "cap_hits"],
        rows=rows), ctx.writer)
    ctx.checks["probability_in_range"] = 0.0 <= est.estimate <= 1.0
    if req.L / req.r >= 2 and ctx.spec.phi > 0:
        ctx.checks["continuous_bound_holds"] = estimates_service.escape_upper_bound(ctx.spec.phi, req.L / req.r).holds
    ctx.notes["truncation"] = "strict: W^L plus dW^L"
    ctx.notes["inner"] = req.inner
    ctx.notes["degree_one_sites"] = [list(s) for s in degree_one_sites(ctx.spec, ball_sector(ctx.spec, req.L))]


def _run_beurling(ctx: RunContext) -> None:
    req: BeurlingRequest = ctx.request
    generator = estimates_service.lower_ray_set if req.side == "lower" else estimates_service.upper_ray_set
    result = estimates_service.beurling_experiment(ctx.spec, req.r, req.L_list, generator, req.backend,
                                                   req.trials, req.seed, req.far_factor, ctx.workers)
    persist_report(ExperimentReport(
        parameters=req.parameters(), columns=["L", "ratio", "probability", "stderr"],
        rows=[[row.L, row.ratio, row.probability, row.stderr] for row in result.rows],
        fits={"exponent": result.fit.model_dump(), "theory_slope": result.theory_slope}), ctx.writer)
    ctx.checks["slope_within_theory"] = result.fit.slope <= result.theory_slope + 0.3
    ctx.notes["truncation"] = f"reflect at the source ring plus 2 (far factor {req.far_factor})"


def _run_dominance(ctx: RunContext) -> None:
    req: DominanceRequest = ctx.request

    def one(trial: int):
        stream = trial_stream(req.seed, "dominance", trial)
        A = estimates_service.random_connected_set(ctx.spec, req.r, req.L, stream, req.extra_sites)
        return len(A), estimates_service.dominance_check(ctx.spec, req.r, req.L, A)

    results = run_trials(one, req.sets, ctx.workers)
    ctx.streams.record("dominance", req.sets)
    rows = [[i, size, d.lhs, d.rhs_upper, d.rhs_lower, d.dominated, d.pointwise_exceedances]
            for i, (size, d) in enumerate(results)]
    persist_report(ExperimentReport(
        parameters=req.parameters(),
        columns=["set", "size", "lhs", "rhs_upper", "rhs_lower", "dominated", "pointwise_exceedances"],
        rows=rows), ctx.writer)
    ctx.checks["dominated"] = all(d.dominated for _, d in results)


def _run_ring(ctx: RunContext) -> None:
    req: RingRequest = ctx.request
    res = estimates_service.ring_escape_experiment(ctx.spec, req.R, req.C, req.eps, req.trials, req.seed,
                                                   req.backend, workers=ctx.workers)
    if req.backend == "mc":
        ctx.streams.record(f"ring:{req.R:g}:{req.C:g}:{req.eps:g}", req.trials)
    persist_report(ExperimentReport(
        parameters=req.parameters(),
        columns=["R", "C", "eps", "inner_first_prob", "stderr", "limit", "trials", "cap_hits"],
        rows=[[req.R, req.C, req.eps, res.inner_first_prob, res.stderr, res.limit, res.trials, res.cap_hits]]),
        ctx.writer)
    ctx.checks["probability_in_range"] = 0.0 <= res.inner_first_prob <= 1.0


def _run_far_exit(ctx: RunContext) -> None:
    req: FarExitRequest = ctx.request
    scan = estimates_service.far_exit_time_scan(ctx.spec, req.R, req.T_values, req.eps, req.trials, req.seed,
                                                ctx.workers)
    rows = [[row.T, row.exit_radius, row.step_cap, row.probability, row.stderr, row.trials, row.cap_hits]
            for row in scan.rows]
    fits: Dict[str, object] = {"decreasing": scan.decreasing}
    if scan.fit is not None:
        fits["exponent"] = scan.fit.model_dump()
    if req.small_set_T is not None:
        small = estimates_service.small_set_hit_probability(ctx.spec, req.R, req.small_set_T, trials=req.trials,
                                                            seed=req.seed, workers=ctx.workers)
        fits["small_set"] = small.model_dump()
        ctx.checks["small_set_in_range"] = 0.0 <= small.probability <= 1.0
    persist_report(ExperimentReport(
        parameters=req.parameters(),
        columns=["T", "exit_radius", "step_cap", "probability", "stderr", "trials", "cap_hits"],
        rows=rows, fits=fits), ctx.writer)
    ctx.streams.record("far-exit", req.trials * sum(len(row.per_source) for row in scan.rows))
    ctx.checks["probability_in_range"] = all(0.0 <= row.probability <= 1.0 for row in scan.rows)
    ctx.notes["engine"] = "plain single steps; box jumps do not keep the step clock"


def _run_converge(ctx: RunContext) -> None:
    req: ConvergeRequest = ctx.request
    A = ball_sector(ctx.spec, req.seed_radius)
    table = estimates_service.convergence_diagnostic(ctx.spec, A, req.R_list, req.sources)
    persist_report(ExperimentReport(
        parameters=req.parameters(), columns=["R", "max_tv", "sources"],
        rows=[[row.R, row.max_tv, row.sources] for row in table.rows]), ctx.writer)
    ctx.checks["max_tv_decreasing"] = table.decreasing
    ctx.notes["truncation"] = "reflect at 2R"


def _run_oracle(ctx: RunContext) -> None:
    req: OracleRequest = ctx.request
    if req.sites_file:
        path = Path(req.sites_file)
        if not path.exists():
            raise RunNotFoundException(str(path))
        absorbing = SiteSet.from_text(path.read_text(encoding="utf-8"))
        ctx.inputs[str(path)] = sha256_file(path)
    else:
        absorbing = sphere(ctx.spec, req.ring_radius)
    domain = ball_sector(ctx.spec, req.truncation)
    problem = HarmonicProblem(ctx.spec, domain, {"A": absorbing}, REFLECT)
    dist = oracle_service.hit_distribution(problem, Site(req.source_x, req.source_y))
    persist_hit_distribution(dist, ctx.writer)
    ctx.checks["mass_at_most_one"] = dist.total() <= 1.0 + 1e-9
    ctx.notes["truncation"] = f"reflect at {req.truncation:g}"
    ctx.notes["degree_one_sites"] = [list(s) for s in degree_one_sites(ctx.spec, domain)]


RUNNERS: Dict[str, Callable[[RunContext], None]] = {
    "grow": _run_grow,
    "escape": _run_escape,
    "beurling": _run_beurling,
    "dominance": _run_dominance,
    "ring": _run_ring,
    "far-exit": _run_far_exit,
    "converge": _run_converge,
    "oracle": _run_oracle,
}


# =========================================================
# Execute / replay
# =========================================================

def new_run_dir(command: str, seed: int, root: Optional[Path] = None) -> Path:
    stamp = datetime.now(timezone.utc).strftime("%Y%m%dT%H%M%S%f")
    return Path(root or settings.OUTPUT_ROOT) / f"{command}-s{seed}-{stamp}"


def execute(request: RunRequest, out_dir: Optional[Path] = None) -> RunManifest:
    """Run one request into a fresh directory and write its manifest last."""
    run_dir = Path(out_dir) if out_dir is not None else new_run_dir(request.command, request.seed)
    writer = RunWriter(run_dir)
    ctx = RunContext(request, writer)
    started = datetime.now(timezone.utc).isoformat()
    logger.info(f"Run {request.command} started in {run_dir}")
    RUNNERS[request.command](ctx)
    manifest = RunManifest(
        version=settings.PROJECT_VERSION, project=settings.PROJECT_NAME, command=request.command,
        wedge=WedgeSummary.of(ctx.spec), request=request.parameters(), seed=request.seed,
        streams=ctx.streams.allocations, started_at=started,
        finished_at=datetime.now(timezone.utc).isoformat(), inputs=ctx.inputs,
        outputs=dict(writer.outputs), checks=ctx.checks, notes=ctx.notes,
    )
    writer.write_manifest(manifest)
    failed = [name for name, ok in ctx.checks.items() if not ok]
    if failed:
        logger.warning(f"Run {run_dir} finished with failed checks: {failed}")
    else:
        logger.info(f"Run {run_dir} finished; {len(ctx.checks)} checks passed")
    return manifest


def replay(run_dir: Path, workers: Optional[int] = None) -> ReplayReport:
    """Re-execute a recorded run in a scratch directory and compare every output digest."""
    manifest = load_manifest(run_dir)
    if manifest.version != settings.PROJECT_VERSION:
        raise VersionMismatchException(manifest.version, settings.PROJECT_VERSION)
    if manifest.seed != manifest.request.get("seed"):
        raise ReplayMismatchException({"manifest": f"seed {manifest.seed} != request seed {manifest.request.get('seed')}"})
    data = dict(manifest.request)
    if workers is not None:
        data["workers"] = workers
    request = request_from_dict(data)
    with tempfile.TemporaryDirectory(prefix="wedge-dla-replay-") as scratch:
        fresh = execute(request, Path(scratch) / "run")
    mismatched: Dict[str, str] = {}
    for name, digest in manifest.outputs.items():
        actual = fresh.outputs.get(name)
        if actual is None:
            mismatched[name] = "missing in replay"
        elif actual != digest:
            mismatched[name] = f"{digest[:12]} != {actual[:12]}"
    for name in fresh.outputs:
        if name not in manifest.outputs:
            mismatched[name] = "not in the recorded run"
    if mismatched:
        logger.error(f"Replay of {run_dir} differs in {sorted(mismatched)}")
        raise ReplayMismatchException(mismatched)
    logger.info(f"Replay of {run_dir}: {len(manifest.outputs)} outputs identical")
    return ReplayReport(files_checked=len(manifest.outputs), identical=True)
