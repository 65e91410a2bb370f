import math

import pytest

from app.core.exceptions import (
    CoordinateOverflowException,
    InvalidParameterException,
    InvalidWedgeException,
    SiteOutsideWedgeException
)
from app.models.site import Site, SiteSet
from app.schemas.wedge_schema import WedgeSpec
from app.services.geometry_service import (
    LOWER,
    ball_sector,
    check_site,
    closure,
    contains,
    degree,
    degree_one_sites,
    gamma_ray,
    is_connected,
    neighbors,
    outer_boundary,
    sphere,
    spread
)


# ====================================================================
# TEST GROUP 1: WedgeSpec
# ====================================================================

def test_from_slopes_normalizes_pairs():
    """
    Scenario: Slopes are given unreduced and with a negative denominator.
    Expected: Stored as coprime pairs with q >= 0.
    """
    # Act
    spec = WedgeSpec.from_slopes("0/3", "2/2")

    # Assert
    assert spec.lower_slope == (0, 1)
    assert spec.upper_slope == (1, 1)
    assert math.isclose(spec.phi, math.pi / 4)


def test_from_slopes_rejects_reversed_order():
    """
    Scenario: theta1 lies above theta2.
    Expected: InvalidWedgeException.
    """
    with pytest.raises(InvalidWedgeException):
        WedgeSpec.from_slopes("1/1", "0/1")


def test_from_slopes_rejects_equal_rays():
    """
    Scenario: Both rays coincide and the degenerate ray was not asked for.
    """
    with pytest.raises(InvalidWedgeException):
        WedgeSpec.from_slopes("1/2", "1/2")


def test_from_slopes_rejects_garbage():
    with pytest.raises(InvalidWedgeException):
        WedgeSpec.from_slopes("one/two", "1/1")


def test_from_angles_recovers_exact_slopes():
    """
    Scenario: Decimal angles 0 and pi/4.
    Expected: The rational approximation lands on 0/1 and 1/1.
    """
    # Act
    spec = WedgeSpec.from_angles(0.0, math.pi / 4)

    # Assert
    assert spec.lower_slope == (0, 1)
    assert spec.upper_slope == (1, 1)


def test_from_angles_keeps_the_angle_within_tolerance(narrow_wedge):
    assert abs(narrow_wedge.theta2 - math.pi / 8) <= 1e-9
    assert narrow_wedge.lower_slope == (0, 1)


def test_half_plane_and_vertical_rays():
    """
    Scenario: Both rays vertical.
    Expected: The right half-plane, including the positive and negative y axis.
    """
    # Arrange
    spec = WedgeSpec.half_plane()

    # Assert
    assert math.isclose(spec.phi, math.pi)
    assert contains(spec, (0, 5))
    assert contains(spec, (0, -5))
    assert not contains(spec, (-1, 0))


# ====================================================================
# TEST GROUP 2: membership and neighbours
# ====================================================================

def test_contains_quarter_wedge(quarter_wedge):
    assert contains(quarter_wedge, (0, 0))
    assert contains(quarter_wedge, (3, 1))
    assert contains(quarter_wedge, (5, 5))
    assert not contains(quarter_wedge, (1, 2))
    assert not contains(quarter_wedge, (-1, 0))
    assert not contains(quarter_wedge, (2, -1))


def test_contains_ray_is_the_positive_axis(ray_wedge):
    assert contains(ray_wedge, (7, 0))
    assert not contains(ray_wedge, (7, 1))
    assert not contains(ray_wedge, (-1, 0))


def test_check_site_rejects_huge_coordinates():
    """
    Scenario: A coordinate beyond 2^40.
    Expected: CoordinateOverflowException instead of silent overflow.
    """
    with pytest.raises(CoordinateOverflowException):
        check_site((2 ** 41, 0))


def test_neighbors_of_apex_in_quarter_wedge(quarter_wedge):
    """
    Scenario: The apex of W_{0, pi/4} has a single wedge neighbour.
    """
    # Act
    result = neighbors(quarter_wedge, (0, 0))

    # Assert
    assert result == [Site(1, 0)]
    assert degree(quarter_wedge, (0, 0)) == 1


def test_neighbors_keep_step_order(right_wedge):
    """
    Scenario: Interior site of the quarter plane.
    Expected: All four neighbours in the fixed order +x, -x, +y, -y.
    """
    assert neighbors(right_wedge, (2, 2)) == [Site(3, 2), Site(1, 2), Site(2, 3), Site(2, 1)]


def test_neighbors_outside_wedge_raise(quarter_wedge):
    with pytest.raises(SiteOutsideWedgeException):
        neighbors(quarter_wedge, (0, 1))


def test_degree_one_sites_found_on_walls(quarter_wedge):
    # Arrange
    region = ball_sector(quarter_wedge, 6)

    # Act
    result = degree_one_sites(quarter_wedge, region)

    # Assert
    assert Site(0, 0) in result
    assert all(degree(quarter_wedge, s) == 1 for s in result)


# ====================================================================
# TEST GROUP 3: balls, spheres and boundaries
# ====================================================================

def test_ball_sector_small_radius(quarter_wedge):
    assert ball_sector(quarter_wedge, 2) == SiteSet([(0, 0), (1, 0), (1, 1)])


def _brute_force_ball(spec, R):
    """Double loop over the bounding square with the cross-product membership test."""
    (p1, q1), (p2, q2) = spec.lower_slope, spec.upper_slope
    extent = int(math.ceil(R))
    found = set()
    for x in range(-extent, extent + 1):
        for y in range(-extent, extent + 1):
            if x * x + y * y >= R * R:
                continue
            if (x, y) == (0, 0) or (x >= 0 and q1 * y - p1 * x >= 0 and p2 * x - q2 * y >= 0):
                found.add((x, y))
    return found


@pytest.mark.parametrize("wedge", ["quarter_wedge", "right_wedge", "symmetric_wedge", "narrow_wedge", "ray_wedge"])
@pytest.mark.parametrize("R", [1, 2.5, 7, 16.3, 33, 64])
def test_ball_sector_matches_brute_force(wedge, R, request):
    # Arrange
    spec = request.getfixturevalue(wedge)

    # Act
    ball = ball_sector(spec, R)

    # Assert
    expected = _brute_force_ball(spec, R)
    assert len(ball) == len(expected)
    assert {(s.x, s.y) for s in ball} == expected


@pytest.mark.parametrize("wedge", ["quarter_wedge", "right_wedge", "symmetric_wedge", "narrow_wedge"])
def test_sphere_size_grows_linearly(wedge, request):
    """
    Scenario: dW^r for r = 8, 16, ..., 256.
    Expected: |dW^r| <= 4 r throughout, and it keeps growing with r.
    """
    # Arrange
    spec = request.getfixturevalue(wedge)
    radii = [8, 16, 32, 64, 128, 256]

    # Act
    sizes = [len(sphere(spec, r)) for r in radii]

    # Assert
    assert all(size <= 4 * r for size, r in zip(sizes, radii))
    assert sizes == sorted(sizes)
    assert sizes[-1] > sizes[0]


def test_ball_sector_rejects_non_positive_radius(quarter_wedge):
    with pytest.raises(InvalidParameterException):
        ball_sector(quarter_wedge, 0)


def test_sphere_small_radius(quarter_wedge):
    assert sphere(quarter_wedge, 2) == SiteSet([(2, 0), (2, 1)])


@pytest.mark.parametrize("radius", [3, 7.5, 10, 23])
def test_sphere_is_outer_boundary_of_ball(symmetric_wedge, radius):
    """
    Scenario: The row-by-row annulus enumeration against the definition.
    Expected: dW^R equals the outer boundary of W^R.
    """
    # Act
    fast = sphere(symmetric_wedge, radius)
    slow = outer_boundary(symmetric_wedge, ball_sector(symmetric_wedge, radius))

    # Assert
    assert fast == slow


def test_outer_boundary_of_origin_pair(symmetric_wedge):
    """
    Scenario: A = {(0,0), (1,0)} in W_{-pi/4, pi/4}.
    Expected: Three boundary sites, none of them in A.
    """
    # Arrange
    A = SiteSet([(0, 0), (1, 0)])

    # Act
    result = outer_boundary(symmetric_wedge, A)

    # Assert
    assert result == SiteSet([(2, 0), (1, 1), (1, -1)])
    assert result.isdisjoint(A)


def test_closure_adds_boundary(quarter_wedge):
    A = SiteSet([(0, 0)])
    assert closure(quarter_wedge, A) == SiteSet([(0, 0), (1, 0)])


def test_gamma_ray_lower_side_of_quarter_wedge(quarter_wedge):
    """
    Scenario: Lower discrete boundary from the apex out to radius 5.
    Expected: The sites of the x axis below radius 5.
    """
    # Act
    result = gamma_ray(quarter_wedge, LOWER, 0, 5)

    # Assert
    assert result == SiteSet([(0, 0), (1, 0), (2, 0), (3, 0), (4, 0)])


def test_gamma_ray_with_inner_radius_includes_sphere(quarter_wedge):
    # Act
    result = gamma_ray(quarter_wedge, LOWER, 3, 8)

    # Assert
    assert sphere(quarter_wedge, 3).issubset(result)
    assert Site(6, 0) in result
    assert Site(1, 0) not in result


def test_gamma_ray_rejects_bad_radii(quarter_wedge):
    with pytest.raises(InvalidParameterException):
        gamma_ray(quarter_wedge, LOWER, 5, 5)
    with pytest.raises(InvalidParameterException):
        gamma_ray(quarter_wedge, "sideways", 1, 5)


def test_mirror_symmetry_of_symmetric_wedge(symmetric_wedge):
    ball = ball_sector(symmetric_wedge, 9)
    assert ball.mirror() == ball
    assert sphere(symmetric_wedge, 9).mirror() == sphere(symmetric_wedge, 9)


# ====================================================================
# TEST GROUP 4: connectivity, spread and text form
# ====================================================================

def test_is_connected():
    assert is_connected(SiteSet())
    assert is_connected(SiteSet([(0, 0), (1, 0), (1, 1)]))
    assert not is_connected(SiteSet([(0, 0), (2, 0)]))
    # diagonal contact does not count
    assert not is_connected(SiteSet([(0, 0), (1, 1)]))


def test_spread_keeps_extremes(right_wedge):
    # Arrange
    ring = sphere(right_wedge, 20)

    # Act
    picks = spread(ring, 5)

    # Assert
    angles = sorted(math.atan2(s.y, s.x) for s in ring)
    assert len(picks) == 5
    assert math.atan2(picks[0].y, picks[0].x) == angles[0]
    assert math.atan2(picks[-1].y, picks[-1].x) == angles[-1]


def test_spread_returns_everything_when_short(quarter_wedge):
    ring = sphere(quarter_wedge, 2)
    assert len(spread(ring, 16)) == len(ring)


def test_site_set_text_round_trip():
    # Arrange
    sites = SiteSet([(3, 1), (0, 0), (2, -4)])

    # Act
    again = SiteSet.from_text(sites.to_text())

    # Assert
    assert again == sites
    assert sites.to_text().splitlines()[0] == "x,y"
