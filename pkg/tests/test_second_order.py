"""Tests for the second-order tangent bundle."""

import numpy as np
import pytest

from spraygeom.atlas import DoubleTangentVector, Transition
from spraygeom.connection import ConnectionMap, ConnectionSplitting
from spraygeom.exceptions import ConfigurationError, DomainError, SplittingRejectedError
from spraygeom.expressions import ExprMap
from spraygeom.second_order import (
    WITNESS_CHART,
    BlackBoxSecondOrder,
    SecondOrderConnection,
    SecondOrderPoint,
    SecondOrderTriv,
    check_conjugacy,
    check_conjugacy_equivalence,
    check_induced_connection,
    check_jet_pushforward,
    check_non_conjugate_witness,
    check_T2mu_linearity,
    check_trivialization,
    fiber_add,
    fiber_scale,
    induce_second_order_connection,
    jet_pushforward,
    pushforward_connection,
    reduce_to_first_order_connection,
    second_order_map,
    trivialize,
    untrivialize,
    upsilon,
    upsilon_inverse,
    witness_transition,
)
from spraygeom.spray import BilinearCoeffs, ExpressionBilinear

from .conftest import spray_from_strings


def values(*blocks):
    """Flatten one-dimensional blocks into plain floats."""
    return [float(b[0]) for b in blocks]


@pytest.fixture
def line_bilinear():
    """B(x; u, v) = u v on the line."""
    return spray_from_strings("line", ["v0^2"])[1]


@pytest.fixture
def square():
    """mu(x) = x^2 on the witness chart."""
    return witness_transition()


@pytest.fixture
def flat_witness():
    """B = 0 on the witness chart."""
    return BilinearCoeffs.flat([WITNESS_CHART])


@pytest.fixture
def pushed_witness():
    """B(y; u, v) = u v / (2 y), the flat connection pushed along x^2."""
    expr = ExprMap.parse("u0 * v0 / (2 * x0)", ("x0", "u0", "v0"))
    return BilinearCoeffs({WITNESS_CHART: ExpressionBilinear(expr)})


@pytest.mark.unit
class TestTrivialization:
    """Test lambda, Upsilon and the induced vector space structure."""

    def test_trivialize(self, line_bilinear):
        """Test (x, 2, 10) -> (x, 2, 10 - 4)."""
        q = trivialize(line_bilinear, SecondOrderPoint([0.5], [2.0], [10.0], "line"))
        assert values(q.x, q.h, q.k) == [0.5, 2.0, 6.0]
        back = untrivialize(line_bilinear, q)
        assert values(back.x, back.a, back.b) == [0.5, 2.0, 10.0]

    def test_upsilon(self, line_bilinear):
        """Test (x, 2, 3, 10) -> (x; 2, 3, 10 - 6)."""
        xi = DoubleTangentVector([0.5], [2.0], [3.0], [10.0], "line")
        assert values(*upsilon(line_bilinear, xi)) == [0.5, 2.0, 3.0, 4.0]
        again = upsilon_inverse(line_bilinear, [0.5], [2.0], [3.0], [4.0], "line")
        assert again.distance(xi) == 0.0

    def test_fiber_operations(self, line_bilinear):
        """Test addition and scaling happen in trivialized coordinates."""
        p = SecondOrderPoint([1.0], [2.0], [10.0], "line")
        q = SecondOrderPoint([1.0], [1.0], [3.0], "line")
        total = fiber_add(line_bilinear, p, q)
        # (2, 6) + (1, 2) = (3, 8), then b = 8 + 3 * 3
        assert values(total.a, total.b) == [3.0, 17.0]
        doubled = fiber_scale(line_bilinear, 2.0, p)
        assert values(doubled.a, doubled.b) == [4.0, 28.0]

    def test_fiber_add_needs_same_point(self, line_bilinear):
        """Test 2-jets over different points cannot be added."""
        p = SecondOrderPoint([1.0], [2.0], [10.0], "line")
        q = SecondOrderPoint([0.0], [1.0], [3.0], "line")
        with pytest.raises(DomainError):
            fiber_add(line_bilinear, p, q)

    def test_block_sizes(self):
        """Test 2-jet blocks must share one dimension."""
        with pytest.raises(DomainError):
            SecondOrderPoint([0.0, 0.0], [1.0], [0.0, 0.0])
        with pytest.raises(DomainError):
            SecondOrderTriv([0.0], [1.0], [0.0, 0.0])

    def test_trivialization_checks(self, plane_chart, curved_plane, rng):
        """Test both round trips and the symmetric agreement pass."""
        _, bilinear = curved_plane
        records = check_trivialization(bilinear, plane_chart, 30, rng)
        assert [r.check_id for r in records] == [
            "second-order.trivialize-roundtrip[plane]",
            "second-order.upsilon-roundtrip[plane]",
            "second-order.upsilon-symmetric[plane]",
        ]
        assert all(r.passed for r in records)


@pytest.mark.unit
class TestSecondOrderMaps:
    """Test T^2 mu on raw and trivialized 2-jets."""

    def test_jet_pushforward(self, square):
        """Test (1, 1, 0) -> (1, 2, 2) under x^2."""
        image = jet_pushforward(square, SecondOrderPoint([1.0], [1.0], [0.0], WITNESS_CHART))
        assert values(image.x, image.a, image.b) == [1.0, 2.0, 2.0]
        assert image.chart == WITNESS_CHART

    def test_outside_chart(self, square, flat_witness):
        """Test 2-jets outside the source chart are rejected."""
        p = SecondOrderPoint([-1.0], [1.0], [0.0], WITNESS_CHART)
        with pytest.raises(DomainError):
            jet_pushforward(square, p)
        with pytest.raises(DomainError):
            second_order_map(flat_witness, flat_witness, square, p)

    def test_flat_second_order_map(self, square, flat_witness):
        """Test flat coordinates send (h, k) = (1, 0) to (2, 2) at x = 1."""
        p = SecondOrderPoint([1.0], [1.0], [0.0], WITNESS_CHART)
        q = second_order_map(flat_witness, flat_witness, square, p)
        assert values(q.x, q.h, q.k) == [1.0, 2.0, 2.0]

    def test_conjugate_map_is_derivative(self, square, flat_witness, pushed_witness):
        """Test conjugate connections give (Dmu h, Dmu k)."""
        p = SecondOrderPoint([1.2], [0.7], [-0.4], WITNESS_CHART)
        q = second_order_map(flat_witness, pushed_witness, square, p)
        np.testing.assert_allclose(values(q.h, q.k), [2.4 * 0.7, 2.4 * -0.4])

    def test_jet_pushforward_check(self, square, flat_witness, pushed_witness, rng):
        """Test trivialize o T^2 mu agrees with second_order_map."""
        for target in (flat_witness, pushed_witness):
            assert check_jet_pushforward(flat_witness, target, square, 20, rng).passed


@pytest.mark.unit
class TestConjugacy:
    """Test conjugacy of connection maps."""

    def test_pushed_connection_is_conjugate(self, square, flat_witness, pushed_witness, rng):
        """Test the flat connection and its push-forward are mu-conjugate."""
        K1, K2 = ConnectionMap(flat_witness), ConnectionMap(pushed_witness)
        record = check_conjugacy(K1, K2, square, 30, rng)
        assert record.passed
        assert record.check_id == f"second-order.conjugacy[{WITNESS_CHART}->{WITNESS_CHART}]"
        assert check_T2mu_linearity(K1, K2, square, 30, rng).passed

    def test_flat_pair_is_not_conjugate(self, square, flat_witness, rng):
        """Test flat on both sides fails and the linearity record says why."""
        K = ConnectionMap(flat_witness)
        assert not check_conjugacy(K, K, square, 30, rng).passed
        record = check_T2mu_linearity(K, K, square, 30, rng)
        assert not record.passed
        assert "not conjugate" in record.detail

    def test_custom_check_id(self, square, flat_witness, pushed_witness, rng):
        """Test the record id can be overridden."""
        K1, K2 = ConnectionMap(flat_witness), ConnectionMap(pushed_witness)
        record = check_conjugacy(K1, K2, square, 5, rng, check_id="custom")
        assert record.check_id == "custom"

    def test_equivalence(self, square, flat_witness, pushed_witness, rng):
        """Test reflexivity, symmetry and transitivity records."""
        K1, K2 = ConnectionMap(flat_witness), ConnectionMap(pushed_witness)
        records = check_conjugacy_equivalence(K1, K2, square, 20, rng)
        assert [r.check_id.split("[")[0] for r in records] == [
            "second-order.conjugacy-reflexive",
            "second-order.conjugacy-symmetric",
            "second-order.conjugacy-transitive",
        ]
        assert all(r.passed for r in records)

    def test_transitivity_uses_pushed_connection(self, square, flat_witness, rng):
        """Test K1 ~ K2 failing also fails K1 ~ K3 with K3 pushed from K2."""
        K = ConnectionMap(flat_witness)
        records = check_conjugacy_equivalence(K, K, square, 20, rng)
        reflexive, symmetric, transitive = records
        assert reflexive.passed
        assert not symmetric.passed
        assert not transitive.passed
        label = f"{WITNESS_CHART}->{WITNESS_CHART}"
        assert transitive.check_id == f"second-order.conjugacy-transitive[{label}]"

    def test_transitivity_with_second_map(self, square, flat_witness, pushed_witness, rng):
        """Test K1 ~ K3 via nu o mu for nu(y) = 2 y."""
        xs = ("x0",)
        double = Transition(
            square.target,
            square.target,
            ExprMap.parse("2 * x0", xs),
            ExprMap.parse("x0 / 2", xs),
        )
        K1, K2 = ConnectionMap(flat_witness), ConnectionMap(pushed_witness)
        records = check_conjugacy_equivalence(K1, K2, square, 20, rng, nu=double)
        assert all(r.passed for r in records), [r.check_id for r in records if not r.passed]

    def test_transitivity_needs_composable_maps(self, square, flat_witness, line_chart, rng):
        """Test a second map starting on another chart is rejected."""
        K = ConnectionMap(flat_witness)
        with pytest.raises(ConfigurationError):
            check_conjugacy_equivalence(K, K, square, 5, rng, nu=Transition.identity(line_chart))

    def test_pushforward_connection(self, square, flat_witness):
        """Test pushing B = 0 along x^2 gives B(y; u, v) = u v / (2 y)."""
        K = pushforward_connection(ConnectionMap(flat_witness), square)
        np.testing.assert_allclose(
            K.bilinear(WITNESS_CHART, [1.44], [0.7], [-0.4]), [0.7 * -0.4 / 2.88], rtol=1e-10
        )

    def test_witness(self, rng):
        """Test the built-in non-conjugate example is visibly non-linear."""
        record = check_non_conjugate_witness(30, rng)
        assert record.passed
        assert record.max_residual >= record.tolerance


@pytest.mark.unit
class TestInducedConnections:
    """Test connections on T^2 M induced from TM."""

    def test_induced_formula(self, line_bilinear):
        """Test (dx, dh, dk) -> (0, dh - B(h, dx), dk - B(k, dx))."""
        C2 = induce_second_order_connection(ConnectionSplitting(line_bilinear))
        assert isinstance(C2, SecondOrderConnection)
        point = SecondOrderTriv([1.0], [2.0], [3.0], "line")
        out = C2(point, ([1.0], [5.0], [7.0]))
        assert values(*out) == [0.0, 3.0, 4.0]

    def test_reduce_known(self, line_bilinear):
        """Test a coordinate connection reduces to its own B."""
        C2 = induce_second_order_connection(ConnectionSplitting(line_bilinear))
        assert reduce_to_first_order_connection(C2).bilinear is line_bilinear

    def test_induced_checks(self, plane_chart, curved_plane, rng):
        """Test the splitting identity and both reduction round trips."""
        _, bilinear = curved_plane
        records = check_induced_connection(ConnectionSplitting(bilinear), plane_chart, 30, rng)
        assert len(records) == 3
        assert all(r.passed for r in records)

    def test_black_box_rejected(self, plane_chart, rng):
        """Test a connection that keeps the base direction is rejected."""
        box = BlackBoxSecondOrder(lambda point, tangent: tangent, [plane_chart])
        with pytest.raises(SplittingRejectedError) as excinfo:
            reduce_to_first_order_connection(box, 10, rng)
        assert "image" in excinfo.value.residuals
