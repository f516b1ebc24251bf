"""Tests for charts, transitions, lifts and the atlas checks."""

import numpy as np
import pytest

from spraygeom.atlas import (
    Atlas,
    Chart,
    DoubleTangentVector,
    Transition,
    check_inverse_pair,
    check_transition_regularity,
    cocycle_check,
    double_tangent_lift,
    overlap_points,
    sample_points,
    tangent_lift,
    transition_jacobian,
)
from spraygeom.exceptions import (
    ConfigurationError,
    DiagnosticError,
    DomainError,
    UnresolvedReferenceError,
)
from spraygeom.expressions import ExprMap, coordinate_names
from spraygeom.space import ModelSpace

XS = coordinate_names("x", 2)


def linear_transition(source: Chart, target: Chart) -> Transition:
    """Invertible linear change of coordinates (x0 + 2 x1, x1)."""
    return Transition(
        source,
        target,
        ExprMap.from_strings(["x0 + 2 * x1", "x1"], XS),
        ExprMap.from_strings(["x0 - 2 * x1", "x1"], XS),
    )


@pytest.mark.unit
class TestChart:
    """Test chart domains."""

    def test_whole_chart(self, plane_chart):
        """Test the whole-space chart contains everything."""
        assert plane_chart.contains([100.0, -100.0])
        assert plane_chart.dimension == 2
        assert plane_chart.box == ((-1.0, 1.0), (-1.0, 1.0))

    def test_margin_and_restriction(self, plane_chart):
        """Test restricted charts take the minimum predicate value."""
        disk = plane_chart.restricted(ExprMap.parse("1 - x0^2 - x1^2", XS))
        assert disk.margin([0.0, 0.0]) == pytest.approx(1.0)
        assert disk.contains([0.5, 0.5])
        assert not disk.contains([1.0, 0.5])

    def test_undefined_predicate_is_outside(self, plane_space):
        """Test points where the predicate fails to evaluate are outside."""
        chart = Chart("c", plane_space, ExprMap.parse("1 / x0", XS))
        assert chart.margin([0.0, 1.0]) == float("-inf")
        assert not chart.contains([0.0, 1.0])

    def test_predicate_arity(self, plane_space):
        """Test the predicate must take one input per coordinate."""
        with pytest.raises(ConfigurationError):
            Chart("c", plane_space, ExprMap.parse("1", XS[:1]))

    def test_box_size(self, plane_space):
        """Test the sampling box needs one interval per coordinate."""
        with pytest.raises(ConfigurationError):
            Chart("c", plane_space, ExprMap.parse("1", XS), ((0.0, 1.0),))


@pytest.mark.unit
class TestTransition:
    """Test transitions and their algebra."""

    def test_apply_and_inverse(self, plane_chart):
        """Test forward and inverse maps."""
        t = linear_transition(plane_chart, plane_chart)
        y = t.apply([1.0, 1.0])
        np.testing.assert_allclose(y, [3.0, 1.0])
        np.testing.assert_allclose(t.apply_inverse(y), [1.0, 1.0])
        assert t.label == "plane->plane"

    def test_reversed_and_then(self, plane_chart):
        """Test reversing and composing transitions."""
        t = linear_transition(plane_chart, plane_chart)
        loop = t.then(t.reversed())
        np.testing.assert_allclose(loop.apply([0.3, -0.7]), [0.3, -0.7])
        np.testing.assert_allclose(loop.apply_inverse([0.3, -0.7]), [0.3, -0.7])

    def test_missing_inverse(self, plane_chart):
        """Test transitions without inverse cannot be reversed."""
        t = Transition(plane_chart, plane_chart, ExprMap.identity(XS))
        with pytest.raises(ConfigurationError):
            t.reversed()
        with pytest.raises(DomainError):
            t.apply_inverse([0.0, 0.0])

    def test_arity_checked(self, plane_chart, line_chart):
        """Test the map arity must match both charts."""
        with pytest.raises(ConfigurationError):
            Transition(plane_chart, line_chart, ExprMap.identity(XS))

    def test_identity(self, plane_chart):
        """Test the identity transition."""
        t = Transition.identity(plane_chart)
        np.testing.assert_allclose(t.apply([0.1, 0.2]), [0.1, 0.2])

    def test_overlap(self, inversion_charts):
        """Test the inversion overlap is the annulus 1/2 < |x| < 2."""
        t = inversion_charts.transition("north", "south")
        assert t.in_overlap([1.0, 0.0])
        assert not t.in_overlap([0.25, 0.0])
        assert not t.in_overlap([0.0, 0.0])
        assert not t.in_overlap([2.5, 0.0])


@pytest.mark.unit
class TestAtlas:
    """Test atlas lookups."""

    def test_lookup(self, inversion_charts):
        """Test charts and transitions resolve by name."""
        assert inversion_charts.first_chart.name == "north"
        assert inversion_charts.chart("south").name == "south"
        assert [t.label for t in inversion_charts.outgoing("north")] == ["north->south"]

    def test_unknown_names(self, inversion_charts):
        """Test unknown names raise UnresolvedReferenceError."""
        with pytest.raises(UnresolvedReferenceError):
            inversion_charts.chart("east")
        with pytest.raises(UnresolvedReferenceError):
            inversion_charts.transition("north", "north")


@pytest.mark.unit
class TestSampling:
    """Test seeded rejection sampling."""

    def test_points_in_domain(self, plane_chart, rng):
        """Test every sample lies in the chart and box."""
        disk = plane_chart.restricted(ExprMap.parse("0.5 - x0^2 - x1^2", XS))
        points = sample_points(disk, 50, rng)
        assert len(points) == 50
        assert all(disk.contains(p) and np.all(np.abs(p) <= 1.0) for p in points)

    def test_deterministic(self, plane_chart):
        """Test equal seeds give equal samples."""
        a = sample_points(plane_chart, 5, np.random.default_rng(7))
        b = sample_points(plane_chart, 5, np.random.default_rng(7))
        np.testing.assert_array_equal(np.array(a), np.array(b))

    def test_overlap_points(self, inversion_charts, rng):
        """Test overlap samples satisfy the overlap predicate."""
        t = inversion_charts.transition("north", "south")
        assert all(t.in_overlap(p) for p in overlap_points(t, 20, rng))

    def test_empty_overlap(self, plane_space, rng):
        """Test an empty overlap raises DiagnosticError."""
        right = Chart("right", plane_space, ExprMap.parse("x0 - 5", XS))
        left = Chart("left", plane_space, ExprMap.parse("1", XS))
        t = Transition(left, right, ExprMap.identity(XS), ExprMap.identity(XS))
        with pytest.raises(DiagnosticError):
            overlap_points(t, 5, rng)


@pytest.mark.unit
class TestLifts:
    """Test tangent and double tangent lifts."""

    def test_tangent_lift_linear(self, plane_chart):
        """Test the lift of a linear map is the map itself on vectors."""
        t = linear_transition(plane_chart, plane_chart)
        y, w = tangent_lift(t, [1.0, 0.0], [0.0, 1.0])
        np.testing.assert_allclose(y, [1.0, 0.0])
        np.testing.assert_allclose(w, [2.0, 1.0])
        np.testing.assert_allclose(
            transition_jacobian(t, [0.3, 0.3]), [[1.0, 2.0], [0.0, 1.0]]
        )

    def test_lift_outside_chart(self, inversion_charts):
        """Test lifting at a point outside the source chart."""
        t = inversion_charts.transition("north", "south")
        with pytest.raises(DomainError):
            tangent_lift(t, [3.0, 0.0], [1.0, 0.0])

    def test_double_lift_linear(self, plane_chart, rng):
        """Test a linear map lifts blockwise with no second-order term."""
        t = linear_transition(plane_chart, plane_chart)
        xi = DoubleTangentVector.random(rng, np.array([0.2, 0.1]), "plane")
        lifted = double_tangent_lift(t, xi)
        matrix = np.array([[1.0, 2.0], [0.0, 1.0]])
        for got, block in zip(lifted.blocks(), xi.blocks(), strict=True):
            np.testing.assert_allclose(got, matrix @ block, atol=1e-14)

    def test_double_lift_is_functorial(self, inversion_charts, rng):
        """Test TT(phi^-1) o TT(phi) is the identity on the overlap."""
        there = inversion_charts.transition("north", "south")
        back = inversion_charts.transition("south", "north")
        for x in overlap_points(there, 20, rng):
            xi = DoubleTangentVector.random(rng, x, "north")
            round_trip = double_tangent_lift(back, double_tangent_lift(there, xi))
            assert round_trip.distance(xi) < 1e-10
            assert round_trip.chart == "north"


@pytest.mark.unit
class TestDoubleTangentVector:
    """Test the (x, u, v, w) container."""

    def test_block_sizes(self):
        """Test blocks must share one dimension."""
        with pytest.raises(DomainError):
            DoubleTangentVector([0.0, 0.0], [1.0], [0.0, 0.0], [0.0, 0.0])

    def test_predicates(self):
        """Test vertical and symmetric predicates."""
        xi = DoubleTangentVector([0.0], [1.0], [0.0], [2.0])
        assert xi.is_vertical
        assert not xi.is_symmetric
        assert DoubleTangentVector([0.0], [1.0], [1.0], [2.0]).is_symmetric
        assert xi.dimension == 1


@pytest.mark.unit
class TestAtlasChecks:
    """Test regularity, cocycle and inverse-pair checks."""

    def test_regularity(self, inversion_charts, rng):
        """Test the inversion is C^2 on its overlap."""
        t = inversion_charts.transition("north", "south")
        record = check_transition_regularity(t, 30, rng=rng)
        assert record.passed
        assert record.check_id == "atlas.regularity[north->south]"

    def test_regularity_needs_samples(self, inversion_charts):
        """Test zero samples are rejected."""
        t = inversion_charts.transition("north", "south")
        with pytest.raises(DomainError):
            check_transition_regularity(t, 0)

    def test_cocycle(self, inversion_charts, rng):
        """Test round trips through both charts return to the start."""
        record = cocycle_check(inversion_charts.transitions.values(), 30, rng)
        assert record.passed
        assert record.samples == 60

    def test_cocycle_missing_return(self, inversion_charts, rng):
        """Test a transition without a return is a configuration error."""
        only = [inversion_charts.transition("north", "south")]
        with pytest.raises(ConfigurationError):
            cocycle_check(only, 5, rng)

    def test_cocycle_single_chart(self):
        """Test an atlas without transitions passes trivially."""
        record = cocycle_check([], 5)
        assert record.passed
        assert record.detail == "single chart"

    def test_inverse_pair(self, inversion_charts, rng):
        """Test map o inverse is the identity on the image."""
        t = inversion_charts.transition("north", "south")
        assert check_inverse_pair(t, 30, rng).passed

    def test_wrong_inverse_fails(self, plane_chart, rng):
        """Test a wrong inverse is sampled and rejected, not filtered out."""
        wrong = Transition(
            plane_chart,
            plane_chart,
            ExprMap.from_strings(["2 * x0", "x1"], XS),
            ExprMap.from_strings(["x0", "x1"], XS),
        )
        record = check_inverse_pair(wrong, 10, rng)
        assert not record.passed
        assert record.samples == 10
        assert record.max_residual > 0.1

    def test_folded_inverse_fails(self, rng):
        """Test an inverse that only undoes the map for x > 0 fails both checks."""
        xs = coordinate_names("x", 1)
        space = ModelSpace((1,))
        left = Chart.whole("left", space)
        right = Chart.whole("right", space)
        there = Transition(
            left,
            right,
            ExprMap.from_strings(["x0"], xs),
            ExprMap.from_strings(["sqrt(x0^2)"], xs),
        )
        back = Transition(
            right,
            left,
            ExprMap.from_strings(["sqrt(x0^2)"], xs),
            ExprMap.from_strings(["x0"], xs),
        )
        assert there.in_overlap([-0.5])
        cocycle = cocycle_check([there, back], 20, rng)
        assert not cocycle.passed
        assert cocycle.samples == 40
        pair = check_inverse_pair(there, 20, rng)
        assert not pair.passed
        assert pair.max_residual > 0.1

    def test_inverse_pair_needs_inverse(self, plane_chart, rng):
        """Test a transition without inverse cannot be checked."""
        t = Transition(plane_chart, plane_chart, ExprMap.identity(XS))
        with pytest.raises(ConfigurationError):
            check_inverse_pair(t, 10, rng)

    def test_atlas_dataclass(self, plane_chart):
        """Test an atlas with a single chart has no outgoing transitions."""
        atlas = Atlas({"plane": plane_chart})
        assert atlas.outgoing("plane") == []
        assert ModelSpace((2,)).dimension == atlas.first_chart.dimension
