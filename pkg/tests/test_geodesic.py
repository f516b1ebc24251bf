"""Tests for geodesic integration and the geodesic checks."""

import csv
import math

import numpy as np
import pytest

from spraygeom.atlas import Atlas
from spraygeom.const import METHOD_EULER
from spraygeom.exceptions import ConfigurationError, DomainError, IntegrationError
from spraygeom.expressions import ExprMap, coordinate_names
from spraygeom.geodesic import (
    GeodesicIntegrator,
    check_chart_switch_invariance,
    check_energy_order,
    check_exact_solution,
    check_homogeneity_reparam,
    check_rk4_order,
    check_time_reversal,
    energy_monitor,
    integrate,
)
from spraygeom.spray import BilinearCoeffs

XS = coordinate_names("x", 2)


def tan_oracle(t: float) -> np.ndarray:
    """Great circle through the pole in the north chart."""
    return np.array([math.tan(t), 0.0])


@pytest.fixture
def sphere_integrator(sphere2):
    """RK4 integrator on both stereographic charts."""
    return GeodesicIntegrator(sphere2.atlas, sphere2.bilinear)


@pytest.fixture
def flat_integrator(plane_chart):
    """RK4 integrator for B = 0 on the plane."""
    return GeodesicIntegrator(Atlas({"plane": plane_chart}), BilinearCoeffs.flat(["plane"]))


@pytest.mark.unit
class TestIntegrator:
    """Test the fixed-step integrator."""

    def test_flat_lines(self, flat_integrator):
        """Test B = 0 integrates straight lines."""
        traj = flat_integrator.integrate("plane", [0.0, 0.0], [1.0, 2.0], 1.0, 0.1)
        assert len(traj.samples) == 11
        np.testing.assert_allclose(traj.final.x, [1.0, 2.0])
        np.testing.assert_allclose(traj.final.v, [1.0, 2.0])
        assert traj.final.t == 1.0
        assert traj.switches == 0

    def test_partial_last_step(self, flat_integrator):
        """Test a final short step lands exactly on t1."""
        traj = flat_integrator.integrate("plane", [0.0, 0.0], [1.0, 0.0], 0.25, 0.1)
        assert traj.times == pytest.approx([0.0, 0.1, 0.2, 0.25])
        np.testing.assert_allclose(traj.final.x, [0.25, 0.0])

    def test_zero_time(self, flat_integrator):
        """Test t1 = 0 returns the initial state only."""
        traj = flat_integrator.integrate("plane", [0.3, 0.0], [1.0, 0.0], 0.0, 0.1)
        assert len(traj.samples) == 1

    @pytest.mark.parametrize(
        "x0,v0,t1,h",
        [
            ([0.0, 0.0], [1.0, 0.0], 1.0, 0.0),
            ([0.0, 0.0], [1.0, 0.0], -1.0, 0.1),
            ([0.0], [1.0, 0.0], 1.0, 0.1),
        ],
    )
    def test_invalid_arguments(self, flat_integrator, x0, v0, t1, h):
        """Test step, end time and dimension validation."""
        with pytest.raises(DomainError):
            flat_integrator.integrate("plane", x0, v0, t1, h)

    def test_start_outside_chart(self, sphere_integrator):
        """Test x0 must lie in the starting chart."""
        with pytest.raises(DomainError):
            sphere_integrator.integrate("north", [3.0, 0.0], [1.0, 0.0], 1.0, 0.1)

    def test_unknown_method(self, flat_integrator):
        """Test the method name is validated."""
        with pytest.raises(ConfigurationError):
            GeodesicIntegrator(flat_integrator.atlas, flat_integrator.bilinear, "leapfrog")

    def test_euler(self, flat_integrator):
        """Test explicit Euler on straight lines."""
        euler = GeodesicIntegrator(flat_integrator.atlas, flat_integrator.bilinear, METHOD_EULER)
        traj = euler.integrate("plane", [0.0, 0.0], [1.0, 0.0], 0.5, 0.1)
        np.testing.assert_allclose(traj.final.x, [0.5, 0.0])
        assert traj.method == METHOD_EULER

    def test_leaving_the_atlas(self, plane_chart):
        """Test leaving the only chart raises with the last state."""
        disk = plane_chart.restricted(ExprMap.parse("1 - x0^2 - x1^2", XS))
        integrator = GeodesicIntegrator(Atlas({"plane": disk}), BilinearCoeffs.flat(["plane"]))
        with pytest.raises(IntegrationError) as excinfo:
            integrator.integrate("plane", [0.0, 0.0], [1.0, 0.0], 2.0, 0.1)
        assert excinfo.value.last_state.x[0] < 1.0

    def test_module_integrate(self, curved_plane):
        """Test integrating a chart formula without an atlas."""
        _, bilinear = curved_plane
        traj = integrate(bilinear, [0.0, 0.0], [0.1, 0.1], 0.2, 0.01)
        assert traj.final.chart == "plane"
        assert traj.final.t == pytest.approx(0.2)

    def test_state_dict(self, flat_integrator):
        """Test states serialize to plain lists."""
        traj = flat_integrator.integrate("plane", [0.0, 0.0], [1.0, 0.0], 0.1, 0.1)
        assert traj.final.to_dict() == {
            "chart": "plane",
            "t": 0.1,
            "x": pytest.approx([0.1, 0.0]),
            "v": [1.0, 0.0],
        }


@pytest.mark.integration
class TestSphereGeodesics:
    """Test the round sphere against its great circles."""

    def test_matches_tangent(self, sphere_integrator):
        """Test x0(t) = tan(t) along the great circle through the pole."""
        traj = sphere_integrator.integrate("north", [0.0, 0.0], [1.0, 0.0], 1.0, 1e-3)
        np.testing.assert_allclose(traj.final.x, tan_oracle(1.0), atol=1e-6)

    def test_energy_conserved(self, sphere2, sphere_integrator):
        """Test g(v, v) is constant along the trajectory."""
        traj = sphere_integrator.integrate("north", [0.2, -0.1], [0.25, 0.5], 1.0, 1e-2)
        record = energy_monitor(sphere2.metric, traj)
        assert record.passed
        assert record.check_id == "geodesic.energy[rk4,h=0.01]"

    def test_energy_needs_metric(self, flat_integrator):
        """Test energy monitoring without a metric."""
        traj = flat_integrator.integrate("plane", [0.0, 0.0], [1.0, 0.0], 0.1, 0.1)
        with pytest.raises(ConfigurationError):
            energy_monitor(None, traj)

    def test_time_reversal(self, sphere_integrator):
        """Test flipping the velocity retraces the geodesic."""
        record = check_time_reversal(sphere_integrator, "north", [0.1, 0.2], [1.0, 0.5], 1.0, 1e-2)
        assert record.passed

    @pytest.mark.parametrize("s", [2.0, -1.0, 0.0, 0.5])
    def test_reparametrization(self, sphere_integrator, s):
        """Test gamma_{s v}(t) = gamma_v(s t)."""
        record = check_homogeneity_reparam(
            sphere_integrator, "north", [0.1, 0.0], [0.5, 0.5], s, 0.5, 0.01
        )
        assert record.passed
        assert record.check_id == f"geodesic.reparam[s={s:g}]"

    @pytest.mark.slow
    def test_chart_switch(self, sphere_integrator):
        """Test a geodesic crossing into the south chart matches the single-chart run."""
        record = check_chart_switch_invariance(
            sphere_integrator, "north", [0.0, 0.0], [1.0, 0.0], 1.3, 1e-3
        )
        assert record.passed
        assert record.detail != "0 chart switch(es)"

    @pytest.mark.slow
    def test_rk4_order(self, sphere_integrator):
        """Test error ratios near 16 per halving."""
        record = check_rk4_order(sphere_integrator, "north", [0.0, 0.0], [1.0, 0.0], 1.0, oracle=tan_oracle)
        assert record.passed
        assert record.detail.startswith("error ratios")

    def test_rk4_order_exact_solution(self, flat_integrator):
        """Test exact straight lines skip the order estimate."""
        record = check_rk4_order(flat_integrator, "plane", [0.0, 0.0], [1.0, 0.0], 1.0)
        assert record.passed
        assert record.skipped == 3

    def test_rk4_order_needs_two_steps(self, flat_integrator):
        """Test one step size is not enough."""
        with pytest.raises(DomainError):
            check_rk4_order(flat_integrator, "plane", [0.0, 0.0], [1.0, 0.0], 1.0, steps=(0.1,))

    def test_exact_solution(self, sphere_integrator):
        """Test every sample follows x0(t) = tan(t) at h = 1e-3."""
        record = check_exact_solution(
            sphere_integrator, "north", [0.0, 0.0], [1.0, 0.0], 1.0, 1e-3, tan_oracle
        )
        assert record.passed
        assert record.samples == 1001
        assert record.skipped == 0
        assert record.max_residual <= 1e-6
        assert record.check_id == "geodesic.exact[north,h=0.001]"

    def test_exact_solution_rejects_wrong_curve(self, sphere_integrator):
        """Test a straight line is not accepted as the great circle."""
        record = check_exact_solution(
            sphere_integrator,
            "north",
            [0.0, 0.0],
            [1.0, 0.0],
            1.0,
            1e-3,
            lambda t: np.array([t, 0.0]),
        )
        assert not record.passed
        assert record.max_residual > 0.1

    def test_exact_solution_stops_at_switch(self, sphere_integrator):
        """Test samples after the switch to the south chart are skipped."""
        record = check_exact_solution(
            sphere_integrator, "north", [0.0, 0.0], [1.0, 0.0], 1.3, 1e-3, tan_oracle
        )
        assert record.passed
        assert record.skipped > 0
        assert record.samples + record.skipped == 1301

    def test_energy_order(self, sphere2, sphere_integrator):
        """Test the RK4 energy drift shrinks about 16 times per halving."""
        record = check_energy_order(
            sphere_integrator, sphere2.metric, "north", [0.0, 0.0], [1.0, 0.0], 1.0
        )
        assert record.passed
        assert record.samples == 2
        assert record.tolerance == pytest.approx(0.2)
        assert record.detail.startswith("drift ratios")

    def test_energy_order_rejects_euler(self, sphere2):
        """Test first-order Euler drift fails the fourth-order ratio band."""
        euler = GeodesicIntegrator(sphere2.atlas, sphere2.bilinear, METHOD_EULER)
        record = check_energy_order(euler, sphere2.metric, "north", [0.0, 0.0], [1.0, 0.0], 1.0)
        assert not record.passed

    def test_energy_order_needs_metric(self, flat_integrator):
        """Test the energy order needs a metric."""
        with pytest.raises(ConfigurationError):
            check_energy_order(flat_integrator, None, "plane", [0.0, 0.0], [1.0, 0.0], 1.0)

    def test_energy_order_needs_two_steps(self, sphere2, sphere_integrator):
        """Test one step size is not enough."""
        with pytest.raises(DomainError):
            check_energy_order(
                sphere_integrator, sphere2.metric, "north", [0.0, 0.0], [1.0, 0.0], 1.0, steps=(0.1,)
            )


@pytest.mark.unit
class TestFlatExactSolution:
    """Test straight lines against the integrator."""

    def test_flat_exact_solution(self, flat_integrator):
        """Test B = 0 reproduces x(t) = x0 + t v0 to rounding at h = 1e-3."""
        record = check_exact_solution(
            flat_integrator,
            "plane",
            [0.1, -0.2],
            [0.5, 0.25],
            1.0,
            1e-3,
            lambda t: np.array([0.1 + 0.5 * t, -0.2 + 0.25 * t]),
        )
        assert record.passed
        assert record.max_residual <= 1e-12


@pytest.mark.unit
class TestTrajectoryOutput:
    """Test CSV export."""

    def test_write_csv_with_energy(self, sphere2, sphere_integrator, tmp_path):
        """Test the header, one row per sample and the energy column."""
        traj = sphere_integrator.integrate("north", [0.0, 0.0], [1.0, 0.0], 0.05, 0.01)
        path = tmp_path / "geodesic.csv"
        traj.write_csv(path, sphere2.metric)
        with path.open(encoding="utf-8") as handle:
            rows = list(csv.reader(handle))
        assert rows[0] == ["t", "chart", "x0", "x1", "v0", "v1", "energy"]
        assert len(rows) == 1 + len(traj.samples)
        assert float(rows[1][-1]) == pytest.approx(4.0)

    def test_rows_without_metric(self, flat_integrator):
        """Test rows omit the energy column without a metric."""
        traj = flat_integrator.integrate("plane", [0.0, 0.0], [1.0, 0.0], 0.1, 0.1)
        assert traj.rows()[0] == ["t", "chart", "x0", "x1", "v0", "v1"]
