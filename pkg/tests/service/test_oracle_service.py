import math

import pytest

from app.core.exceptions import (
    InfeasibleProblemException,
    InvalidParameterException,
    InvalidSetException,
    SolverException
)
from app.models.harmonic_problem import REFLECT, STRICT, HarmonicProblem
from app.models.site import Site, SiteSet
from app.services import oracle_service
from app.services.geometry_service import ball_sector, sphere


# --- FIXTURES ---

@pytest.fixture
def ruin_problem(ray_wedge):
    """The segment 0..10 of the ray with both ends absorbing."""
    domain = SiteSet((x, 0) for x in range(11))
    return HarmonicProblem(ray_wedge, domain, {"win": SiteSet([(10, 0)]), "lose": SiteSet([(0, 0)])}, STRICT)


# ====================================================================
# TEST GROUP 1: potentials
# ====================================================================

def test_gamblers_ruin_potential(ruin_problem):
    """
    Scenario: Walk on 0..10, absorbed at both ends.
    Expected: P^x(hit 10 first) = x / 10.
    """
    # Act
    h = oracle_service.solve_hit_probability(ruin_problem, "win")

    # Assert
    for x in range(1, 10):
        assert math.isclose(h[Site(x, 0)], x / 10, abs_tol=1e-9)


def test_expected_steps_on_segment(ruin_problem):
    """
    Scenario: Same segment.
    Expected: E^x[tau] = x (10 - x).
    """
    # Act
    t = oracle_service.solve_expected_steps(ruin_problem)

    # Assert
    assert math.isclose(t.value_at(Site(3, 0)), 21.0, abs_tol=1e-8)
    assert math.isclose(t.value_at(Site(5, 0)), 25.0, abs_tol=1e-8)


def test_direct_and_cg_agree(right_wedge):
    # Arrange
    problem = HarmonicProblem(right_wedge, ball_sector(right_wedge, 12),
                              {"ring": sphere(right_wedge, 3)}, REFLECT)

    # Act
    cg = oracle_service.solve_potential(problem, "ring", method="cg")
    direct = oracle_service.solve_potential(problem, "ring", method="direct")

    # Assert
    assert abs(cg.values - direct.values).max() < 1e-8
    assert cg.residual <= 1e-10


def test_value_at_absorbing_site_uses_boundary(ruin_problem):
    solution = oracle_service.solve_potential(ruin_problem, "win")
    assert solution.value_at(Site(10, 0), {"win": 1.0, "lose": 0.0}) == 1.0
    with pytest.raises(InvalidSetException):
        solution.value_at(Site(10, 0))


def test_unknown_target_label(ruin_problem):
    with pytest.raises(InvalidParameterException):
        oracle_service.solve_potential(ruin_problem, "draw")


def test_unknown_method(ruin_problem):
    with pytest.raises(InvalidParameterException):
        oracle_service.solve_potential(ruin_problem, "win", method="magic")


# ====================================================================
# TEST GROUP 2: problem validation
# ====================================================================

def test_isolated_free_component_is_singular(ray_wedge):
    """
    Scenario: Sites 5 and 6 form a free component with no absorbing neighbour.
    Expected: SolverException naming the singular configuration.
    """
    # Arrange
    domain = SiteSet([(0, 0), (1, 0), (5, 0), (6, 0)])
    problem = HarmonicProblem(ray_wedge, domain, {"A": SiteSet([(0, 0)])}, REFLECT)

    # Act & Assert
    with pytest.raises(SolverException) as exc:
        oracle_service.solve_potential(problem, "A")

    assert "singular" in str(exc.value)


def test_strict_truncation_with_dangling_edge(right_wedge):
    """
    Scenario: Strict truncation on a ball whose rim has wedge neighbours outside it.
    Expected: InfeasibleProblemException.
    """
    # Arrange
    problem = HarmonicProblem(right_wedge, ball_sector(right_wedge, 5), {"A": SiteSet([(0, 0)])}, STRICT)

    # Act & Assert
    with pytest.raises(InfeasibleProblemException):
        oracle_service.solve_potential(problem, "A")


def test_overlapping_absorbing_sets(right_wedge):
    with pytest.raises(InvalidSetException):
        HarmonicProblem(right_wedge, ball_sector(right_wedge, 5),
                        {"a": SiteSet([(1, 0)]), "b": SiteSet([(1, 0), (2, 0)])})


def test_unknown_truncation_mode(right_wedge):
    with pytest.raises(InfeasibleProblemException):
        HarmonicProblem(right_wedge, ball_sector(right_wedge, 5), {"a": SiteSet([(1, 0)])}, "absorb")


# ====================================================================
# TEST GROUP 3: hit distributions
# ====================================================================

def test_hit_distribution_is_a_probability(right_wedge):
    """
    Scenario: Reflecting truncation around dW^3.
    Expected: Every walk is eventually absorbed, so the masses sum to one.
    """
    # Arrange
    problem = HarmonicProblem(right_wedge, ball_sector(right_wedge, 12), {"ring": sphere(right_wedge, 3)}, REFLECT)

    # Act
    dist = oracle_service.hit_distribution(problem, Site(9, 2))

    # Assert
    assert math.isclose(dist.total(), 1.0, abs_tol=1e-8)
    assert all(p >= 0.0 for p in dist.masses.values())


def test_hit_distribution_respects_mirror_symmetry(symmetric_wedge):
    """
    Scenario: Symmetric wedge, symmetric absorbing set, source on the axis.
    Expected: The law equals its mirror image.
    """
    # Arrange
    problem = HarmonicProblem(symmetric_wedge, ball_sector(symmetric_wedge, 14),
                              {"A": ball_sector(symmetric_wedge, 3)}, REFLECT)

    # Act
    dist = oracle_service.hit_distribution(problem, Site(8, 0))
    mirrored = dist.mirror()

    # Assert
    for site, p in dist.masses.items():
        assert math.isclose(p, mirrored.get(site), abs_tol=1e-8)


def test_mirrored_source_gives_mirrored_law(symmetric_wedge):
    # Arrange
    problem = HarmonicProblem(symmetric_wedge, ball_sector(symmetric_wedge, 14),
                              {"A": ball_sector(symmetric_wedge, 3)}, REFLECT)

    # Act
    up, down = oracle_service.hit_distributions(problem, [Site(8, 3), Site(8, -3)])

    # Assert
    assert up.mirror().source == down.source
    assert up.mirror().tv(down) < 1e-7


def test_adjoint_and_column_strategies_agree(right_wedge):
    """
    Scenario: A two-site target and many sources forces the per-column strategy;
    a single source uses the adjoint solve.
    Expected: The same laws either way.
    """
    # Arrange
    target = SiteSet([(0, 0), (1, 0)])
    problem = HarmonicProblem(right_wedge, ball_sector(right_wedge, 10), {"A": target}, REFLECT)
    sources = [Site(6, 1), Site(2, 7), Site(5, 5)]

    # Act
    together = oracle_service.hit_distributions(problem, sources)
    alone = [oracle_service.hit_distribution(problem, s) for s in sources]

    # Assert
    for a, b in zip(together, alone):
        assert a.tv(b) < 1e-7


def test_hit_distribution_source_must_be_free(ruin_problem):
    with pytest.raises(InvalidParameterException):
        oracle_service.hit_distribution(ruin_problem, Site(0, 0))


def test_hit_distribution_tv_of_identical_laws(right_wedge):
    problem = HarmonicProblem(right_wedge, ball_sector(right_wedge, 10), {"A": sphere(right_wedge, 2)}, REFLECT)
    dist = oracle_service.hit_distribution(problem, Site(4, 4))
    assert oracle_service.hit_distribution_tv(dist, dist) == 0.0


# ====================================================================
# TEST GROUP 4: electrical quantities
# ====================================================================

def test_effective_resistance_of_a_path(ray_wedge):
    """
    Scenario: The ray from 0 to 7 is seven unit resistors in series.
    Expected: R_eff = 7.
    """
    # Act
    resistance = oracle_service.effective_resistance(ray_wedge, Site(0, 0), SiteSet([(7, 0)]), truncation=10)

    # Assert
    assert math.isclose(resistance, 7.0, rel_tol=1e-9)


def test_effective_resistance_rejects_v_in_z(ray_wedge):
    with pytest.raises(InvalidParameterException):
        oracle_service.effective_resistance(ray_wedge, Site(0, 0), SiteSet([(0, 0)]), truncation=5)


def test_return_probability_first_step(ray_wedge):
    """
    Scenario: u = 3 on the ray, A = {0}, so the closure of A is {0, 1}.
    Expected: Step left with probability 1/2, then reach 1 before 3 with probability 1/2.
    """
    # Act
    result = oracle_service.return_probability(ray_wedge, Site(3, 0), SiteSet([(0, 0)]))

    # Assert
    assert math.isclose(result.probability, 0.25, abs_tol=1e-9)
    assert math.isclose(result.doubled_truncation_probability, 0.25, abs_tol=1e-9)
    assert not result.sensitive


def test_return_probability_rejects_u_in_closure(ray_wedge):
    with pytest.raises(InvalidParameterException):
        oracle_service.return_probability(ray_wedge, Site(1, 0), SiteSet([(0, 0)]))
