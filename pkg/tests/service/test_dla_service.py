import math

import pytest

from app.core.exceptions import (
    DegenerateFitException,
    InvalidParameterException,
    InvalidSetException,
    TrialCapExceededException,
    UnsupportedRegimeException
)
from app.models.aggregate import Aggregate
from app.models.site import Site
from app.schemas.dla_schema import (
    INCONCLUSIVE,
    SATISFIED,
    VIOLATED,
    SamplerParams,
    StabilizationLedger
)
from app.schemas.walk_schema import WalkOutcome
from app.schemas.wedge_schema import WedgeSpec
from app.services import dla_service
from app.services.geometry_service import is_connected, outer_boundary
from app.services.trial_service import trial_stream


# --- FIXTURES ---

@pytest.fixture
def plain_params():
    """Single-step walks only, so no jump tables are built."""
    return SamplerParams(jump_k_max=0)


@pytest.fixture
def slim_wedge():
    """W_{0, arctan(1/2)}: below pi/4, so stabilization exponents exist."""
    return WedgeSpec.from_slopes("0/1", "1/2")


@pytest.fixture
def two_arms(right_wedge):
    """Two straight arms along the axes of the quarter plane."""
    sites = [Site(0, 0)] + [Site(x, 0) for x in range(1, 21)] + [Site(0, y) for y in range(1, 21)]
    return Aggregate.from_sites(right_wedge, sites)


# ====================================================================
# TEST GROUP 1: Aggregate
# ====================================================================

def test_new_aggregate_is_the_origin(quarter_wedge):
    agg = Aggregate(quarter_wedge)
    assert agg.n == 0
    assert agg.trajectory() == [Site(0, 0)]
    assert list(agg.boundary) == [Site(1, 0)]


def test_attach_keeps_boundary_and_diameter(right_wedge):
    """
    Scenario: A straight arm of 12 sites.
    Expected: The cached boundary matches the definition and diam grows by one per site.
    """
    # Arrange
    agg = Aggregate(right_wedge)

    # Act
    for x in range(1, 13):
        agg.attach(Site(x, 0), walk_steps=float(x))

    # Assert
    assert agg.boundary == outer_boundary(right_wedge, agg.sites)
    assert agg.diameters == [float(n) for n in range(13)]
    assert agg.rho == 12.0
    assert agg.site_at(5) == Site(5, 0)


def test_attach_off_boundary_raises(right_wedge):
    agg = Aggregate(right_wedge)
    with pytest.raises(InvalidSetException):
        agg.attach(Site(3, 3))


def test_grid_grows_with_the_aggregate(right_wedge):
    """
    Scenario: The arm outgrows the initial raster.
    Expected: The raster is rebuilt and still marks the boundary as absorbing.
    """
    # Arrange
    agg = Aggregate(right_wedge)

    # Act
    for x in range(1, 40):
        agg.attach(Site(x, 0))

    # Assert
    assert agg.grid.code_at(40, 0) == 1
    assert agg.grid.code_at(39, 0) == -1
    assert agg.grid.code_at(10, 5) == 0


def test_aggregate_text_round_trip(two_arms, right_wedge):
    # Act
    again = Aggregate.from_text(right_wedge, two_arms.to_text())

    # Assert
    assert again == two_arms
    assert two_arms.to_text().splitlines()[:3] == ["n,x,y", "0,0,0", "1,1,0"]


def test_aggregate_text_out_of_order(right_wedge):
    with pytest.raises(InvalidSetException):
        Aggregate.from_text(right_wedge, "n,x,y\n0,0,0\n2,1,0\n")


def test_aggregate_text_must_start_at_origin(right_wedge):
    with pytest.raises(InvalidSetException):
        Aggregate.from_text(right_wedge, "n,x,y\n0,1,0\n")


# ====================================================================
# TEST GROUP 2: growth
# ====================================================================

def test_grow_small_aggregate(right_wedge, plain_params):
    """
    Scenario: 30 particles in the quarter plane.
    Expected: A connected aggregate with monotone diameters and a verified ledger.
    """
    # Act
    agg, result = dla_service.grow(right_wedge, 30, plain_params, seed=3)

    # Assert
    assert agg.n == 30
    assert is_connected(agg.sites)
    assert all(b >= a for a, b in zip(agg.diameters, agg.diameters[1:]))
    assert result.ledger_verified
    assert result.ledger.exponent is None


def test_grow_first_particle_in_quarter_wedge(quarter_wedge, plain_params):
    """
    Scenario: The origin of W_{0, pi/4} has a single neighbour.
    Expected: The first particle always lands on (1, 0).
    """
    agg, _ = dla_service.grow(quarter_wedge, 1, plain_params, seed=11)
    assert agg.trajectory() == [Site(0, 0), Site(1, 0)]


def test_grow_is_reproducible(right_wedge, plain_params):
    first, _ = dla_service.grow(right_wedge, 25, plain_params, seed=5)
    second, _ = dla_service.grow(right_wedge, 25, plain_params, seed=5)
    assert first.trajectory() == second.trajectory()


def test_grow_resume_matches_uninterrupted(right_wedge, plain_params):
    """
    Scenario: Stop at 12 particles and resume to 25.
    Expected: The same trajectory as growing 25 in one go.
    """
    # Arrange
    direct, _ = dla_service.grow(right_wedge, 25, plain_params, seed=8)
    partial, _ = dla_service.grow(right_wedge, 12, plain_params, seed=8)

    # Act
    resumed, result = dla_service.grow(right_wedge, 25, plain_params, seed=8, resume_from=partial)

    # Assert
    assert resumed.trajectory() == direct.trajectory()
    assert result.ledger_verified


def test_grow_with_exponent_records_dials(slim_wedge, plain_params):
    # Act
    agg, result = dla_service.grow(slim_wedge, 20, plain_params, seed=2, dial_radii=[4, 8])

    # Assert
    assert result.ledger.exponent == pytest.approx(dla_service.default_exponent(slim_wedge))
    norms = [s.norm() for s in agg.trajectory()]
    assert result.ledger.t_last[4] == max(n for n, r in enumerate(norms) if r < 4)


def test_grow_just_below_pi_over_4_keeps_the_default_dial(plain_params):
    """
    Scenario: Slopes 0/1 and 99/100 (phi = 0.7804), where the stronger exponent is about 623.
    Expected: The default dials stay at [4] and the report is inconclusive, no overflow.
    """
    # Arrange
    spec = WedgeSpec.from_slopes("0/1", "99/100")

    # Act
    agg, result = dla_service.grow(spec, 10, plain_params, seed=1)
    report = dla_service.stabilization_report(result.ledger, result.ledger.exponent, 10)

    # Assert
    assert agg.n == 10
    assert result.ledger.exponent > 600
    assert result.ledger.radii == [4.0]
    assert [row.status for row in report.rows] == [INCONCLUSIVE]
    assert report.rows[0].threshold == dla_service.THRESHOLD_CAP
    assert report.fraction_satisfied is None


def test_grow_rejects_bad_requests(right_wedge, quarter_wedge, plain_params):
    with pytest.raises(InvalidParameterException):
        dla_service.grow(right_wedge, 0, plain_params, seed=0)
    with pytest.raises(InvalidParameterException):
        dla_service.grow(right_wedge, 5, plain_params, seed=0, resume_from=Aggregate(quarter_wedge))


def test_sampler_gives_up_after_restarts(right_wedge, monkeypatch):
    """
    Scenario: Every attachment walk escapes.
    Expected: TrialCapExceededException carrying the sampler diagnostics.
    """
    # Arrange
    escaped = WalkOutcome(site=Site(500, 0), steps=7, steps_equivalent=7.0, escaped=True)
    monkeypatch.setattr(dla_service, "walk_from", lambda *args, **kwargs: escaped)
    params = SamplerParams(jump_k_max=0, max_restarts=3)

    # Act & Assert
    with pytest.raises(TrialCapExceededException) as exc:
        dla_service.sample_attachment(right_wedge, Aggregate(right_wedge), params, trial_stream(0, "grow", 1))

    assert exc.value.diagnostics["n"] == 0
    assert exc.value.diagnostics["steps_equivalent"] == 21.0


def test_grow_persists_partial_trajectory(right_wedge, monkeypatch, tmp_path):
    # Arrange
    escaped = WalkOutcome(site=Site(500, 0), steps=1, steps_equivalent=1.0, escaped=True)
    monkeypatch.setattr(dla_service, "walk_from", lambda *args, **kwargs: escaped)
    path = tmp_path / "partial.csv"

    # Act
    with pytest.raises(TrialCapExceededException):
        dla_service.grow(right_wedge, 5, SamplerParams(jump_k_max=0, max_restarts=2), seed=0, partial_path=path)

    # Assert
    assert Aggregate.from_text(right_wedge, path.read_text()).n == 0


def test_attachment_law_is_mirror_symmetric(symmetric_wedge, plain_params):
    """
    Scenario: A = {(0,0), (1,0)} in W_{-pi/4, pi/4}.
    Expected: The two off-axis boundary sites are hit equally often.
    """
    # Arrange
    agg = Aggregate.from_sites(symmetric_wedge, [Site(0, 0), Site(1, 0)])
    samples = 2000

    # Act
    dist = dla_service.frozen_attachment_distribution(symmetric_wedge, agg, plain_params, samples, seed=1)

    # Assert
    assert set(dist.support()) <= {Site(2, 0), Site(1, 1), Site(1, -1)}
    assert math.isclose(dist.total(), 1.0)
    assert abs(dist.get((1, 1)) - dist.get((1, -1))) < 0.08


def test_sampler_consistency_doubles_start_radius(right_wedge, plain_params):
    # Arrange
    agg = Aggregate.from_sites(right_wedge, [Site(0, 0), Site(1, 0), Site(1, 1)])

    # Act
    result = dla_service.sampler_consistency(right_wedge, agg, plain_params, samples=200, seed=4)

    # Assert
    assert 0.0 <= result.tv <= 1.0
    assert result.doubled_start_radius == 2 * result.start_radius


# ====================================================================
# TEST GROUP 3: stabilization
# ====================================================================

def test_stabilization_exponents_at_pi_over_8(narrow_wedge):
    # Act
    exponents = dla_service.stabilization_exponent(narrow_wedge)

    # Assert
    assert math.isclose(exponents.a_min, 5.0, rel_tol=1e-6)
    assert math.isclose(exponents.a_strong, 6.0, rel_tol=1e-6)
    assert math.isclose(exponents.b_threshold_strict, 3.0, rel_tol=1e-6)
    assert math.isclose(exponents.b_threshold_weak, 2.5, rel_tol=1e-6)


@pytest.mark.parametrize("wedge", ["quarter_wedge", "right_wedge"])
def test_stabilization_exponent_unsupported_from_pi_over_4(wedge, request):
    with pytest.raises(UnsupportedRegimeException):
        dla_service.stabilization_exponent(request.getfixturevalue(wedge))


@pytest.mark.parametrize("a, n, expected", [
    (5.0, 20000, [4.0]),
    (2.0, 100, [4.0, 8.0]),
    (2.0, 64, [4.0, 8.0]),
    (2.0, 10, [4.0]),
    (623.18, 20000, [4.0]),
    (5000.0, 10 ** 9, [4.0]),
])
def test_default_dial_radii(a, n, expected):
    assert dla_service.default_dial_radii(a, n) == expected


@pytest.mark.parametrize("R, a, expected", [(4.0, 2.0, 16), (8.0, 2.0, 64), (5.0, 1.5, 12)])
def test_dial_threshold_is_the_ceiling_of_r_to_the_a(R, a, expected):
    assert dla_service.dial_threshold(R, a) == expected


@pytest.mark.parametrize("R, a", [(4.0, 623.18), (8.0, 64.0), (1024.0, 1e6)])
def test_dial_threshold_caps_huge_powers(R, a):
    assert dla_service.dial_threshold(R, a) == dla_service.THRESHOLD_CAP


def test_ledger_recompute_matches_incremental():
    # Arrange
    norms = [0.0, 1.0, 5.0, 2.0]
    ledger = StabilizationLedger.start([3.0, 6.0], 2.0)

    # Act
    for n, norm in enumerate(norms):
        ledger.record(n, norm)

    # Assert
    assert ledger.t_last == {3.0: 3, 6.0: 3}
    assert ledger == StabilizationLedger.recompute(norms, [3.0, 6.0], 2.0)


def test_stabilization_report_statuses():
    """
    Scenario: Dials at 4 and 8 with a = 2 (thresholds 16 and 64).
    Expected: Satisfied, violated or inconclusive depending on t_last and n.
    """
    # Arrange
    ledger = StabilizationLedger(radii=[4.0, 8.0], t_last={4.0: 10, 8.0: 70}, exponent=2.0)

    # Act
    full = dla_service.stabilization_report(ledger, 2.0, 100)
    short = dla_service.stabilization_report(ledger, 2.0, 50)

    # Assert
    assert [row.status for row in full.rows] == [SATISFIED, VIOLATED]
    assert [row.threshold for row in full.rows] == [16, 64]
    assert full.fraction_satisfied == 0.5
    assert [row.status for row in short.rows] == [SATISFIED, INCONCLUSIVE]
    assert short.fraction_satisfied == 1.0


# ====================================================================
# TEST GROUP 4: shape statistics
# ====================================================================

def test_count_arms_single_arm(right_wedge):
    agg = Aggregate.from_sites(right_wedge, [Site(x, 0) for x in range(21)])
    assert dla_service.count_arms(agg, 3, 10) == 1


def test_count_arms_two_arms(two_arms):
    assert dla_service.count_arms(two_arms, 3, 10) == 2


def test_count_arms_up_to_the_aggregate_radius(two_arms):
    assert dla_service.count_arms(two_arms, 3, two_arms.rho) == 2


@pytest.mark.parametrize("r_inner, r_outer", [(10, 3), (30, 40), (5, 21)])
def test_count_arms_rejects_bad_radii(two_arms, r_inner, r_outer):
    """
    Scenario: Reversed radii, or an outer radius past rho = 20.
    Expected: InvalidParameterException.
    """
    with pytest.raises(InvalidParameterException):
        dla_service.count_arms(two_arms, r_inner, r_outer)


@pytest.mark.parametrize("power", [1.0, 0.5])
def test_growth_rate_recovers_power_law(power):
    # Arrange
    diameters = [0.0] + [float(n) ** power for n in range(1, 1001)]

    # Act
    estimate = dla_service.growth_rate_estimate(diameters)

    # Assert
    assert math.isclose(estimate.beta_hat, power, abs_tol=1e-9)
    assert estimate.window_start == 100
    assert estimate.window_end == 1000


def test_growth_rate_needs_a_trajectory():
    with pytest.raises(DegenerateFitException):
        dla_service.growth_rate_estimate([0.0, 1.0, 2.0])


def test_growth_rate_rejects_bad_window():
    diameters = [0.0] + [float(n) for n in range(1, 200)]
    with pytest.raises(DegenerateFitException):
        dla_service.growth_rate_estimate(diameters, window=(50, 500))
