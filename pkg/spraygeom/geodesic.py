"""Geodesic integration x'' = B(x; x', x') with chart switching."""

from __future__ import annotations

import csv
import logging
import math
from collections.abc import Callable, Mapping, Sequence
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
import numpy.typing as npt

from .atlas import Atlas, Chart, Transition, tangent_lift
from .const import (
    CHART_SWITCH_THRESHOLD,
    DEFAULT_TOLERANCES,
    ENERGY_ORDER_RATIO,
    ENERGY_ORDER_SLACK,
    METHOD_EULER,
    METHOD_RK4,
    METHODS,
    ORDER_NOISE_FLOOR,
    ORDER_RATIO_BAND,
    ORDER_STEPS,
)
from .exceptions import ConfigurationError, DomainError, IntegrationError
from .expressions import ExprMap, coordinate_names
from .metric import energy
from .report import CheckRecord
from .space import ModelSpace
from .spray import BilinearCoeffs

_LOGGER = logging.getLogger(__name__)

FloatArray = npt.NDArray[np.float64]
Oracle = Callable[[float], FloatArray]


def _norm(values: FloatArray) -> float:
    return float(np.max(np.abs(values))) if values.size else 0.0


# =============================================================================
# Types
# =============================================================================


@dataclass(frozen=True, eq=False)
class GeodesicState:
    """Position and velocity at parameter time ``t`` in ``chart``."""

    chart: str
    x: FloatArray
    v: FloatArray
    t: float

    def to_dict(self) -> dict[str, object]:
        """Convert to a JSON-friendly dictionary."""
        return {
            "chart": self.chart,
            "t": self.t,
            "x": self.x.tolist(),
            "v": self.v.tolist(),
        }


@dataclass
class Trajectory:
    """Accepted states of one integration, in increasing time."""

    samples: list[GeodesicState]
    step_size: float
    method: str
    switches: int = 0

    @property
    def final(self) -> GeodesicState:
        """Return the last state."""
        return self.samples[-1]

    @property
    def times(self) -> list[float]:
        """Return the sample times."""
        return [s.t for s in self.samples]

    def rows(
        self, metric: Mapping[str, ExprMap] | None = None
    ) -> list[list[str | float]]:
        """Return CSV rows: t, chart, x..., v... and energy with a metric."""
        n = self.samples[0].x.size
        header: list[str | float] = ["t", "chart"]
        header += [f"x{i}" for i in range(n)] + [f"v{i}" for i in range(n)]
        if metric is not None:
            header.append("energy")
        rows = [header]
        for s in self.samples:
            row: list[str | float] = [s.t, s.chart, *s.x.tolist(), *s.v.tolist()]
            if metric is not None:
                row.append(energy(metric[s.chart], s.x, s.v))
            rows.append(row)
        return rows

    def write_csv(
        self, path: str | Path, metric: Mapping[str, ExprMap] | None = None
    ) -> None:
        """Write the trajectory as CSV."""
        with Path(path).open("w", newline="", encoding="utf-8") as handle:
            csv.writer(handle).writerows(self.rows(metric))
        _LOGGER.info("Wrote %d geodesic samples to %s", len(self.samples), path)


# =============================================================================
# Integrator
# =============================================================================


@dataclass
class GeodesicIntegrator:
    """Fixed-step integrator for the geodesic equation of a bilinear map."""

    atlas: Atlas
    bilinear: BilinearCoeffs
    method: str = METHOD_RK4
    switch_threshold: float = CHART_SWITCH_THRESHOLD

    def __post_init__(self) -> None:
        """Validate the method name."""
        if self.method not in METHODS:
            raise ConfigurationError(
                f"unknown method '{self.method}', expected one of {', '.join(METHODS)}"
            )

    def _accel(self, chart: str, x: FloatArray, v: FloatArray) -> FloatArray:
        return self.bilinear.at(chart).quadratic(x, v)

    def _euler(
        self, chart: str, x: FloatArray, v: FloatArray, h: float
    ) -> tuple[FloatArray, FloatArray]:
        return x + h * v, v + h * self._accel(chart, x, v)

    def _rk4(
        self, chart: str, x: FloatArray, v: FloatArray, h: float
    ) -> tuple[FloatArray, FloatArray]:
        a1 = self._accel(chart, x, v)
        x2, v2 = x + 0.5 * h * v, v + 0.5 * h * a1
        a2 = self._accel(chart, x2, v2)
        x3, v3 = x + 0.5 * h * v2, v + 0.5 * h * a2
        a3 = self._accel(chart, x3, v3)
        x4, v4 = x + h * v3, v + h * a3
        a4 = self._accel(chart, x4, v4)
        x_next = x + (h / 6.0) * (v + 2.0 * v2 + 2.0 * v3 + v4)
        v_next = v + (h / 6.0) * (a1 + 2.0 * a2 + 2.0 * a3 + a4)
        return x_next, v_next

    def _switch(self, state: GeodesicState) -> GeodesicState | None:
        """Re-express ``state`` in the neighbouring chart with the largest margin."""
        current = self.atlas.chart(state.chart).margin(state.x)
        best: tuple[float, Transition] | None = None
        for t in self.atlas.outgoing(state.chart):
            if not t.in_overlap(state.x):
                continue
            margin = t.target.margin(t.apply(state.x))
            if margin > current and (best is None or margin > best[0]):
                best = (margin, t)
        if best is None:
            return None
        y, w = tangent_lift(best[1], state.x, state.v)
        _LOGGER.debug(
            "Switching chart %s -> %s at t=%.6f", state.chart, best[1].target.name, state.t
        )
        return GeodesicState(best[1].target.name, y, w, state.t)

    def _advance(self, state: GeodesicState, h: float) -> GeodesicState:
        stepper = self._rk4 if self.method == METHOD_RK4 else self._euler
        x, v = stepper(state.chart, state.x, state.v, h)
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(v))):
            raise IntegrationError(
                f"non-finite state after step at t={state.t:.6f}", state
            )
        return GeodesicState(state.chart, x, v, state.t + h)

    def integrate(
        self,
        chart: str,
        x0: npt.ArrayLike,
        v0: npt.ArrayLike,
        t1: float,
        h: float,
    ) -> Trajectory:
        """Integrate from (x0, v0) in ``chart`` up to time ``t1`` with step ``h``."""
        if h <= 0.0 or not math.isfinite(h):
            raise DomainError(f"step must be positive, got {h}")
        if t1 < 0.0:
            raise DomainError(f"end time must be >= 0, got {t1}")
        start = self.atlas.chart(chart)
        xs = np.atleast_1d(np.asarray(x0, dtype=np.float64))
        vs = np.atleast_1d(np.asarray(v0, dtype=np.float64))
        if xs.size != start.dimension or vs.size != start.dimension:
            raise DomainError(
                f"x0 and v0 must have {start.dimension} entries, got {xs.size} and {vs.size}"
            )
        if not start.contains(xs):
            raise DomainError(f"x0 {xs} is outside chart '{chart}'")

        full = int(math.floor(t1 / h + 1e-9))
        steps = [h] * full
        rest = t1 - full * h
        if rest > 1e-12 * max(t1, 1.0):
            steps.append(rest)

        state = GeodesicState(chart, xs, vs, 0.0)
        samples = [state]
        switches = 0
        for index, size in enumerate(steps):
            if self.atlas.chart(state.chart).margin(state.x) < self.switch_threshold:
                moved = self._switch(state)
                if moved is not None:
                    state, switches = moved, switches + 1
            nxt = self._advance(state, size)
            if not self.atlas.chart(nxt.chart).contains(nxt.x):
                moved = self._switch(state)
                if moved is None:
                    raise IntegrationError(
                        f"geodesic left chart '{state.chart}' at t={state.t:.6f} "
                        "and no neighbouring chart covers it",
                        state,
                    )
                state, switches = moved, switches + 1
                nxt = self._advance(state, size)
            # keep times on the grid
            state = replace(nxt, t=t1 if index == len(steps) - 1 else (index + 1) * h)
            samples.append(state)
        _LOGGER.debug(
            "Integrated %d steps (%s, h=%g) with %d chart switch(es)",
            len(steps),
            self.method,
            h,
            switches,
        )
        return Trajectory(samples, h, self.method, switches)


def _covering_atlas(chart: str, n: int) -> Atlas:
    names = coordinate_names("x", n)
    whole = Chart(
        chart,
        ModelSpace((n,)),
        ExprMap.parse("1", names),
        ((-1.0, 1.0),) * n,
    )
    return Atlas({chart: whole})


def integrate(
    B: BilinearCoeffs,
    x0: npt.ArrayLike,
    v0: npt.ArrayLike,
    t1: float,
    h: float,
    method: str = METHOD_RK4,
    atlas: Atlas | None = None,
    chart: str | None = None,
) -> Trajectory:
    """Integrate x'' = B(x; x', x').

    Without an atlas the chart formula of B is integrated wherever it evaluates.
    """
    if chart is None:
        chart = atlas.first_chart.name if atlas is not None else next(iter(B))
    if atlas is None:
        atlas = _covering_atlas(chart, np.atleast_1d(np.asarray(x0)).size)
    return GeodesicIntegrator(atlas, B, method).integrate(chart, x0, v0, t1, h)


# =============================================================================
# Checks
# =============================================================================


def _in_chart(atlas: Atlas, state: GeodesicState, chart: str) -> FloatArray:
    if state.chart == chart:
        return state.x
    return atlas.transition(state.chart, chart).apply(state.x)


def check_homogeneity_reparam(
    integrator: GeodesicIntegrator,
    chart: str,
    x0: npt.ArrayLike,
    v0: npt.ArrayLike,
    s: float,
    t1: float,
    h: float,
    tol: float | None = None,
) -> CheckRecord:
    """Check gamma_{s v0}(t) = gamma_{v0}(s t) at matched times."""
    tol = DEFAULT_TOLERANCES["reparam"] if tol is None else tol
    vs = np.atleast_1d(np.asarray(v0, dtype=np.float64))
    scaled = integrator.integrate(chart, x0, s * vs, t1, h)
    check_id = f"geodesic.reparam[s={s:g}]"
    if s == 0.0:
        start = scaled.samples[0].x
        residuals = [_norm(p.x - start) for p in scaled.samples]
        return CheckRecord.from_residuals(check_id, residuals, tol)
    sign = 1.0 if s > 0 else -1.0
    reference = integrator.integrate(chart, x0, sign * vs, abs(s) * t1, abs(s) * h)
    residuals = []
    for got, ref in zip(scaled.samples, reference.samples, strict=True):
        expected = _in_chart(integrator.atlas, ref, got.chart)
        residuals.append(_norm(got.x - expected) / (1.0 + _norm(expected)))
    return CheckRecord.from_residuals(check_id, residuals, tol)


def _energy_drift(
    metric: ExprMap | Mapping[str, ExprMap] | None, traj: Trajectory
) -> list[float]:
    if metric is None:
        raise ConfigurationError("energy monitoring needs a metric declaration")

    def energy_of(state: GeodesicState) -> float:
        g = metric if isinstance(metric, ExprMap) else metric[state.chart]
        return energy(g, state.x, state.v)

    first = energy_of(traj.samples[0])
    scale = abs(first) if abs(first) > 0.0 else 1.0
    return [abs(energy_of(s) - first) / scale for s in traj.samples]


def energy_monitor(
    metric: ExprMap | Mapping[str, ExprMap] | None,
    traj: Trajectory,
    tol: float | None = None,
) -> CheckRecord:
    """Check that g_x(v, v) stays constant along a trajectory."""
    tol = DEFAULT_TOLERANCES["energy"] if tol is None else tol
    return CheckRecord.from_residuals(
        f"geodesic.energy[{traj.method},h={traj.step_size:g}]",
        _energy_drift(metric, traj),
        tol,
    )


def check_energy_order(
    integrator: GeodesicIntegrator,
    metric: ExprMap | Mapping[str, ExprMap] | None,
    chart: str,
    x0: npt.ArrayLike,
    v0: npt.ArrayLike,
    t1: float,
    steps: Sequence[float] = ORDER_STEPS,
) -> CheckRecord:
    """Check the energy drift shrinks by ENERGY_ORDER_RATIO per halving of the step.

    The drift of a run is max |E(t) - E(0)| / |E(0)| over its samples.
    """
    if len(steps) < 2:
        raise DomainError("order estimate needs at least two step sizes")
    check_id = f"geodesic.energy-order[{chart}]"
    drifts = [
        max(_energy_drift(metric, integrator.integrate(chart, x0, v0, t1, h)))
        for h in steps
    ]
    if min(drifts) <= ORDER_NOISE_FLOOR:
        return CheckRecord.from_residuals(
            check_id,
            [],
            0.0,
            skipped=len(drifts),
            detail="energy drift below the noise floor",
        )
    ratios = [a / b for a, b in zip(drifts, drifts[1:], strict=False)]
    return CheckRecord.from_residuals(
        check_id,
        [abs(r / ENERGY_ORDER_RATIO - 1.0) for r in ratios],
        ENERGY_ORDER_SLACK,
        detail="drift ratios " + ", ".join(f"{r:.2f}" for r in ratios),
    )


def check_exact_solution(
    integrator: GeodesicIntegrator,
    chart: str,
    x0: npt.ArrayLike,
    v0: npt.ArrayLike,
    t1: float,
    h: float,
    oracle: Oracle,
    tol: float | None = None,
) -> CheckRecord:
    """Compare every sample with a closed-form solution given in ``chart``.

    Samples taken after the first chart switch are counted as skipped.
    """
    tol = DEFAULT_TOLERANCES["geodesic-exact"] if tol is None else tol
    traj = integrator.integrate(chart, x0, v0, t1, h)
    residuals = []
    for state in traj.samples:
        if state.chart != chart:
            break
        expected = np.asarray(oracle(state.t), dtype=np.float64)
        residuals.append(_norm(state.x - expected) / (1.0 + _norm(expected)))
    return CheckRecord.from_residuals(
        f"geodesic.exact[{chart},h={h:g}]",
        residuals,
        tol,
        skipped=len(traj.samples) - len(residuals),
    )


def check_time_reversal(
    integrator: GeodesicIntegrator,
    chart: str,
    x0: npt.ArrayLike,
    v0: npt.ArrayLike,
    t1: float,
    h: float,
    tol: float | None = None,
) -> CheckRecord:
    """Integrate forward, flip the velocity, integrate back and compare with x0."""
    tol = DEFAULT_TOLERANCES["reversal"] if tol is None else tol
    forward = integrator.integrate(chart, x0, v0, t1, h)
    end = forward.final
    backward = integrator.integrate(end.chart, end.x, -end.v, t1, h)
    start = forward.samples[0].x
    back = _in_chart(integrator.atlas, backward.final, chart)
    return CheckRecord.from_residuals(
        f"geodesic.time-reversal[{chart}]",
        [_norm(back - start) / (1.0 + _norm(start))],
        tol,
    )


def check_chart_switch_invariance(
    integrator: GeodesicIntegrator,
    chart: str,
    x0: npt.ArrayLike,
    v0: npt.ArrayLike,
    t1: float,
    h: float,
    tol: float | None = None,
) -> CheckRecord:
    """Compare a switching trajectory with one kept in the starting chart formula."""
    tol = DEFAULT_TOLERANCES["reversal"] if tol is None else tol
    switched = integrator.integrate(chart, x0, v0, t1, h)
    single = integrate(integrator.bilinear, x0, v0, t1, h, integrator.method, chart=chart)
    residuals = []
    for got, ref in zip(switched.samples, single.samples, strict=True):
        mapped = _in_chart(integrator.atlas, got, chart)
        residuals.append(_norm(mapped - ref.x) / (1.0 + _norm(ref.x)))
    detail = f"{switched.switches} chart switch(es)"
    if not switched.switches:
        _LOGGER.warning("Chart switch check on %s never switched chart", chart)
    return CheckRecord.from_residuals(
        f"geodesic.chart-switch[{chart}]", residuals, tol, detail=detail
    )


def check_rk4_order(
    integrator: GeodesicIntegrator,
    chart: str,
    x0: npt.ArrayLike,
    v0: npt.ArrayLike,
    t1: float,
    steps: Sequence[float] = ORDER_STEPS,
    oracle: Oracle | None = None,
) -> CheckRecord:
    """Estimate the order from endpoint errors over successively halved steps.

    Without a closed-form ``oracle`` the reference is a run with an eight
    times smaller step than the finest one.
    """
    if len(steps) < 2:
        raise DomainError("order estimate needs at least two step sizes")
    low, high = ORDER_RATIO_BAND
    check_id = f"geodesic.rk4-order[{chart}]"
    if oracle is not None:
        reference = np.asarray(oracle(t1), dtype=np.float64)
    else:
        fine = integrator.integrate(chart, x0, v0, t1, min(steps) / 8.0)
        reference = _in_chart(integrator.atlas, fine.final, chart)
    errors = []
    for h in steps:
        end = integrator.integrate(chart, x0, v0, t1, h).final
        errors.append(_norm(_in_chart(integrator.atlas, end, chart) - reference))
    if min(errors) <= ORDER_NOISE_FLOOR:
        return CheckRecord.from_residuals(
            check_id,
            [],
            0.0,
            skipped=len(errors),
            detail="endpoint errors below the noise floor",
        )
    ratios = [a / b for a, b in zip(errors, errors[1:], strict=False)]
    # |log2(ratio) - 4| <= 1 accepts ratios in [8, 32]
    deviations = [abs(math.log2(r) - math.log2(math.sqrt(low * high))) for r in ratios]
    return CheckRecord.from_residuals(
        check_id,
        deviations,
        math.log2(high / math.sqrt(low * high)),
        detail="error ratios " + ", ".join(f"{r:.2f}" for r in ratios),
    )
