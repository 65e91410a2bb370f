from .wedge_schema import WedgeSpec, WedgeSummary
from .walk_schema import AbsorbSet, OutcomeTally, ReversibilityReport, StopSpec, WalkOutcome, WalkState
from .oracle_schema import ReturnProbability, SolveStats
from .dla_schema import GrowthRateEstimate, GrowthResult, SamplerParams, StabilizationLedger, StabilizationReport
from .estimates_schema import DominanceResult, EscapeEstimate, ExponentFit, RingEscapeResult
from .run_schema import ExperimentReport, RunManifest, RunRequest

__all__ = [
    WedgeSpec,
    WedgeSummary,
    AbsorbSet,
    OutcomeTally,
    ReversibilityReport,
    StopSpec,
    WalkOutcome,
    WalkState,
    ReturnProbability,
    SolveStats,
    GrowthRateEstimate,
    GrowthResult,
    SamplerParams,
    StabilizationLedger,
    StabilizationReport,
    DominanceResult,
    EscapeEstimate,
    ExponentFit,
    RingEscapeResult,
    ExperimentReport,
    RunManifest,
    RunRequest
]
