"""Verification suites: registry of checks, async runner and truncation stability."""

from __future__ import annotations

import asyncio
import logging
import zlib
from collections.abc import Callable, Mapping, Sequence
from dataclasses import dataclass
from typing import Any

import numpy as np

from .atlas import (
    Chart,
    DoubleTangentVector,
    Transition,
    check_inverse_pair,
    check_transition_regularity,
    cocycle_check,
    sample_points,
)
from .connection import (
    BlackBoxSplitting,
    ConnectionMap,
    ConnectionSplitting,
    check_cd_axioms,
    check_connection_chart_invariance,
    check_field_compatibility,
    check_identities,
    check_nabla_equals_K_of_T,
    connection_from_splitting,
    connection_map_apply,
    splitting_apply,
)
from .const import (
    AXIOM_SAMPLES,
    DEFAULT_SAMPLES,
    DEFAULT_TOLERANCES,
    HOMOGENEITY_SAMPLES,
    IDENTITY_SAMPLES,
    INDUCED_SAMPLES,
    SPRAY_BASE,
    SPRAY_FLAT,
    SPRAY_NAMES,
    SPRAY_PUSHFORWARD,
    SUITE_ALL,
    SUITES,
)
from .exceptions import ConfigurationError, DomainError
from .expressions import ExprMap
from .geodesic import (
    GeodesicIntegrator,
    Oracle,
    check_chart_switch_invariance,
    check_energy_order,
    check_exact_solution,
    check_homogeneity_reparam,
    check_rk4_order,
    check_time_reversal,
    energy_monitor,
)
from .jets import dir_derivative, fd_oracle, pure_second
from .manifold import ManifoldDef
from .report import CheckRecord, Report
from .second_order import (
    check_conjugacy,
    check_conjugacy_equivalence,
    check_induced_connection,
    check_jet_pushforward,
    check_non_conjugate_witness,
    check_T2mu_linearity,
    check_trivialization,
)
from .space import Vector, project
from .spray import (
    BilinearCoeffs,
    ExpressionBilinear,
    ExpressionSpray,
    PolarizedBilinear,
    check_bilinear_symmetry,
    check_bilinearity,
    check_christoffel,
    check_extraction,
    check_homogeneity,
    check_pushforward_roundtrip,
    check_second_order,
    check_transformation_law,
    pushforward_spray,
)

_LOGGER = logging.getLogger(__name__)

REPARAM_SCALARS: tuple[float, ...] = (2.0, -1.0, 0.0)
"""Scalars s of the geodesic reparametrization check"""


@dataclass
class CheckContext:
    """Per-entry inputs: tolerances and a dedicated random generator."""

    tolerances: Mapping[str, float]
    rng: np.random.Generator
    samples: int = DEFAULT_SAMPLES

    def tol(self, key: str) -> float:
        """Return the tolerance called ``key``."""
        return self.tolerances[key]


CheckFunc = Callable[[ManifoldDef, CheckContext], list[CheckRecord]]


@dataclass(frozen=True)
class CheckEntry:
    """One registered check group."""

    name: str
    suite: str
    run: CheckFunc


# =============================================================================
# Spray suite
# =============================================================================


def _second_order(m: ManifoldDef, ctx: CheckContext) -> list[CheckRecord]:
    return [check_second_order(m.spray, c, ctx.samples, ctx.rng) for c in m.charts]


def _homogeneity(m: ManifoldDef, ctx: CheckContext) -> list[CheckRecord]:
    return [
        check_homogeneity(
            m.spray,
            c,
            samples=HOMOGENEITY_SAMPLES,
            rng=ctx.rng,
            tol=ctx.tol("homogeneity"),
        )
        for c in m.charts
    ]


def _symmetry(m: ManifoldDef, ctx: CheckContext) -> list[CheckRecord]:
    return [
        check_bilinear_symmetry(m.bilinear, c, ctx.samples, ctx.rng, ctx.tol("symmetry"))
        for c in m.charts
    ]


def _extraction(m: ManifoldDef, ctx: CheckContext) -> list[CheckRecord]:
    return [
        check_extraction(m.spray, m.bilinear, c, ctx.samples, ctx.rng, ctx.tol("extraction"))
        for c in m.charts
    ]


def _bilinearity(m: ManifoldDef, ctx: CheckContext) -> list[CheckRecord]:
    return [
        check_bilinearity(m.bilinear, c, ctx.samples, ctx.rng, ctx.tol("bilinearity"))
        for c in m.charts
    ]


def _christoffel(m: ManifoldDef, ctx: CheckContext) -> list[CheckRecord]:
    if m.metric is None:
        return []
    return [
        check_christoffel(
            m.metric[c.name], m.bilinear, c, ctx.samples, ctx.rng, ctx.tol("christoffel")
        )
        for c in m.charts
        if c.name in m.metric
    ]


def _transformation(m: ManifoldDef, ctx: CheckContext) -> list[CheckRecord]:
    return [
        check_transformation_law(
            m.bilinear, t, ctx.samples, ctx.tol("transformation"), ctx.rng
        )
        for t in m.transitions
    ]


def _pushforward(m: ManifoldDef, ctx: CheckContext) -> list[CheckRecord]:
    return [
        check_pushforward_roundtrip(m.spray, t, ctx.samples, ctx.rng, ctx.tol("pushforward"))
        for t in m.transitions
        if t.inverse is not None
    ]


def _regularity(m: ManifoldDef, ctx: CheckContext) -> list[CheckRecord]:
    return [
        check_transition_regularity(t, ctx.samples, ctx.tol("regularity"), ctx.rng)
        for t in m.transitions
    ]


def _cocycle(m: ManifoldDef, ctx: CheckContext) -> list[CheckRecord]:
    return [cocycle_check(m.transitions, ctx.samples, ctx.rng, ctx.tol("cocycle"))]


def _inverse_pair(m: ManifoldDef, ctx: CheckContext) -> list[CheckRecord]:
    return [
        check_inverse_pair(t, ctx.samples, ctx.rng, ctx.tol("cocycle"))
        for t in m.transitions
        if t.inverse is not None
    ]


def _oracle_targets(
    m: ManifoldDef,
) -> list[tuple[str, ExprMap, Chart, Transition | None]]:
    """Every closed-form map of the manifold with the chart it is sampled in."""
    targets: list[tuple[str, ExprMap, Chart, Transition | None]] = []
    for chart in m.charts:
        component = m.spray.at(chart.name)
        local = m.bilinear.at(chart.name)
        if isinstance(component, ExpressionSpray):
            targets.append((f"S2:{chart.name}", component.expr, chart, None))
        if isinstance(local, ExpressionBilinear):
            targets.append((f"B:{chart.name}", local.expr, chart, None))
        if m.metric and chart.name in m.metric:
            targets.append((f"metric:{chart.name}", m.metric[chart.name], chart, None))
    targets.extend((f"map:{t.label}", t.map, t.source, t) for t in m.transitions)
    return targets


def _relative(exact: np.ndarray, approx: np.ndarray) -> float:
    return float(np.max(np.abs(exact - approx))) / (1.0 + float(np.max(np.abs(exact))))


def _jet_oracle(m: ManifoldDef, ctx: CheckContext) -> list[CheckRecord]:
    records = []
    for label, f, chart, overlap in _oracle_targets(m):
        residuals = []
        for x in sample_points(chart, ctx.samples, ctx.rng, overlap):
            point = np.concatenate([x, ctx.rng.standard_normal(f.arity_in - x.size)])
            h = ctx.rng.standard_normal(point.size)
            residuals.append(
                max(
                    _relative(dir_derivative(f, point, h), fd_oracle(f, point, h, 1)),
                    _relative(pure_second(f, point, h), fd_oracle(f, point, h, 2)),
                )
            )
        records.append(
            CheckRecord.from_residuals(
                f"jets.oracle[{label}]", residuals, ctx.tol("christoffel")
            )
        )
    return records


# =============================================================================
# Connection suite
# =============================================================================


def _identities(m: ManifoldDef, ctx: CheckContext) -> list[CheckRecord]:
    records = []
    for chart in m.charts:
        records.extend(
            check_identities(m.bilinear, chart, IDENTITY_SAMPLES, ctx.rng, ctx.tol("exact"))
        )
    return records


def _fields_on(m: ManifoldDef, chart: str) -> tuple[list, list]:
    fields = [f for f in m.vector_fields.values() if chart in f.charts]
    functions = [f for f in m.scalar_functions.values() if chart in f.charts]
    return fields, functions


def _cd_axioms(m: ManifoldDef, ctx: CheckContext) -> list[CheckRecord]:
    records = []
    for chart in m.charts:
        fields, functions = _fields_on(m, chart.name)
        if len(fields) < 2 or not functions:
            _LOGGER.debug("No field pair on chart %s, axiom checks skipped", chart.name)
            continue
        records.extend(
            check_cd_axioms(
                m.bilinear,
                chart,
                fields,
                functions,
                AXIOM_SAMPLES,
                ctx.rng,
                ctx.tol("cd-axioms"),
                ctx.tol("torsion"),
            )
        )
    return records


def _nabla_k(m: ManifoldDef, ctx: CheckContext) -> list[CheckRecord]:
    K = ConnectionMap(m.bilinear)
    records = []
    for chart in m.charts:
        fields, _ = _fields_on(m, chart.name)
        if len(fields) < 2:
            continue
        X, Y = fields[0], fields[1]
        records.append(
            check_nabla_equals_K_of_T(K, X, Y, chart, ctx.samples, ctx.rng, ctx.tol("nabla-k"))
        )
    return records


def _chart_invariance(m: ManifoldDef, ctx: CheckContext) -> list[CheckRecord]:
    K = ConnectionMap(m.bilinear)
    return [
        check_connection_chart_invariance(K, t, ctx.samples, ctx.rng, ctx.tol("transformation"))
        for t in m.transitions
    ]


def _field_compatibility(m: ManifoldDef, ctx: CheckContext) -> list[CheckRecord]:
    return [
        check_field_compatibility(X, t, ctx.samples, ctx.rng, ctx.tol("fields"))
        for t in m.transitions
        for X in m.vector_fields.values()
        if t.source.name in X.charts and t.target.name in X.charts
    ]


def _splitting_roundtrip(m: ManifoldDef, ctx: CheckContext) -> list[CheckRecord]:
    C = ConnectionSplitting(m.bilinear)
    direct = connection_from_splitting(C)
    sampled = connection_from_splitting(
        BlackBoxSplitting.wrapping(C, m.charts), ctx.samples, ctx.rng, ctx.tol("splitting")
    )
    records = []
    for chart in m.charts:
        exact, black_box = [], []
        for x in sample_points(chart, ctx.samples, ctx.rng):
            u, v = ctx.rng.standard_normal(x.size), ctx.rng.standard_normal(x.size)
            source = m.bilinear(chart.name, x, u, v)
            exact.append(float(np.max(np.abs(direct.bilinear(chart.name, x, u, v) - source))))
            black_box.append(
                float(np.max(np.abs(sampled.bilinear(chart.name, x, u, v) - source)))
            )
        records.append(
            CheckRecord.from_residuals(
                f"connection.splitting-roundtrip[{chart.name}]", exact, ctx.tol("exact")
            )
        )
        records.append(
            CheckRecord.from_residuals(
                f"connection.black-box-roundtrip[{chart.name}]", black_box, ctx.tol("roundtrip")
            )
        )
    return records


# =============================================================================
# Second-order suite
# =============================================================================


def spray_connection(
    m: ManifoldDef, spray_name: str, mu: Transition, *, target: bool
) -> ConnectionMap:
    """Return the connection map of a named spray on one side of ``mu``.

    ``base`` is the manifold spray and ``flat`` is B = 0. ``pushforward``
    transports the spray across ``mu``: along ``mu`` onto its target, along
    its inverse onto its source.
    """
    chart = mu.target if target else mu.source
    if spray_name == SPRAY_BASE:
        return ConnectionMap(m.bilinear)
    if spray_name == SPRAY_FLAT:
        return ConnectionMap(BilinearCoeffs.flat([chart.name]))
    if spray_name != SPRAY_PUSHFORWARD:
        raise ConfigurationError(
            f"unknown spray '{spray_name}', expected one of {', '.join(SPRAY_NAMES)}"
        )
    along = mu if target else mu.reversed()
    pushed = pushforward_spray(m.spray, along).at(chart.name)
    return ConnectionMap(BilinearCoeffs({chart.name: PolarizedBilinear(pushed)}))


def conjugate_pair(
    m: ManifoldDef,
    k1: str = SPRAY_BASE,
    k2: str = SPRAY_PUSHFORWARD,
    mu: Transition | None = None,
) -> tuple[ConnectionMap, ConnectionMap]:
    """Return (K1 on the source of mu, K2 on its target); mu defaults to the declared one."""
    mu = mu or m.mu
    return (
        spray_connection(m, k1, mu, target=False),
        spray_connection(m, k2, mu, target=True),
    )


def _trivialization(m: ManifoldDef, ctx: CheckContext) -> list[CheckRecord]:
    records = []
    for chart in m.charts:
        records.extend(
            check_trivialization(m.bilinear, chart, ctx.samples, ctx.rng, ctx.tol("roundtrip"))
        )
    return records


def _conjugacy(m: ManifoldDef, ctx: CheckContext) -> list[CheckRecord]:
    K1, K2 = conjugate_pair(m)
    return [
        check_conjugacy(K1, K2, m.mu, ctx.samples, ctx.rng, ctx.tol("conjugate-pair")),
        check_T2mu_linearity(K1, K2, m.mu, ctx.samples, ctx.rng, ctx.tol("linearity")),
        check_jet_pushforward(
            K1.bilinear, K2.bilinear, m.mu, ctx.samples, ctx.rng, ctx.tol("linearity")
        ),
    ]


def _equivalence(m: ManifoldDef, ctx: CheckContext) -> list[CheckRecord]:
    if m.mu.inverse is None:
        return []
    K1, K2 = conjugate_pair(m)
    return check_conjugacy_equivalence(
        K1, K2, m.mu, ctx.samples, ctx.rng, ctx.tol("conjugacy")
    )


def _witness(m: ManifoldDef, ctx: CheckContext) -> list[CheckRecord]:
    return [check_non_conjugate_witness(ctx.samples, ctx.rng, ctx.tol("witness"))]


def _induced(m: ManifoldDef, ctx: CheckContext) -> list[CheckRecord]:
    C = ConnectionSplitting(m.bilinear)
    records = []
    for chart in m.charts:
        records.extend(
            check_induced_connection(C, chart, INDUCED_SAMPLES, ctx.rng, ctx.tol("induced"))
        )
    return records


# =============================================================================
# Geodesic suite
# =============================================================================


def _integrator(m: ManifoldDef) -> GeodesicIntegrator:
    return GeodesicIntegrator(m.atlas, m.bilinear)


def _reparam(m: ManifoldDef, ctx: CheckContext) -> list[CheckRecord]:
    geo = m.geodesic
    integrator = _integrator(m)
    return [
        check_homogeneity_reparam(
            integrator,
            geo.chart,
            geo.x0,
            geo.v0,
            s,
            geo.t1 / max(abs(s), 1.0),
            geo.step,
            ctx.tol("reparam"),
        )
        for s in REPARAM_SCALARS
    ]


def _energy(m: ManifoldDef, ctx: CheckContext) -> list[CheckRecord]:
    if m.metric is None:
        return []
    geo = m.geodesic
    traj = _integrator(m).integrate(geo.chart, geo.x0, geo.v0, geo.t1, geo.step)
    return [energy_monitor(m.metric, traj, ctx.tol("energy"))]


def _reversal(m: ManifoldDef, ctx: CheckContext) -> list[CheckRecord]:
    geo = m.geodesic
    return [
        check_time_reversal(
            _integrator(m), geo.chart, geo.x0, geo.v0, geo.t1, geo.step, ctx.tol("reversal")
        )
    ]


def _exact_oracle(exact: ExprMap) -> Oracle:
    def oracle(t: float) -> np.ndarray:
        return exact([t])

    return oracle


def _rk4_order(m: ManifoldDef, ctx: CheckContext) -> list[CheckRecord]:
    geo = m.geodesic
    oracle = _exact_oracle(geo.exact) if geo.exact is not None else None
    return [check_rk4_order(_integrator(m), geo.chart, geo.x0, geo.v0, geo.t1, oracle=oracle)]


def _exact(m: ManifoldDef, ctx: CheckContext) -> list[CheckRecord]:
    geo = m.geodesic
    if geo.exact is None:
        return []
    return [
        check_exact_solution(
            _integrator(m),
            geo.chart,
            geo.x0,
            geo.v0,
            geo.t1,
            geo.step,
            _exact_oracle(geo.exact),
            ctx.tol("geodesic-exact"),
        )
    ]


def _energy_order(m: ManifoldDef, ctx: CheckContext) -> list[CheckRecord]:
    if m.metric is None:
        return []
    geo = m.geodesic
    return [
        check_energy_order(
            _integrator(m), m.metric, geo.chart, geo.x0, geo.v0, geo.t1
        )
    ]


def _chart_switch(m: ManifoldDef, ctx: CheckContext) -> list[CheckRecord]:
    geo = m.geodesic
    if geo.switch_t1 is None:
        return []
    return [
        check_chart_switch_invariance(
            _integrator(m), geo.chart, geo.x0, geo.v0, geo.switch_t1, geo.step, ctx.tol("reversal")
        )
    ]


# =============================================================================
# Registry and runner
# =============================================================================

REGISTRY: tuple[CheckEntry, ...] = (
    CheckEntry("spray.second-order", "spray", _second_order),
    CheckEntry("spray.homogeneity", "spray", _homogeneity),
    CheckEntry("spray.bilinear-symmetry", "spray", _symmetry),
    CheckEntry("spray.extraction", "spray", _extraction),
    CheckEntry("spray.bilinearity", "spray", _bilinearity),
    CheckEntry("spray.christoffel", "spray", _christoffel),
    CheckEntry("spray.transformation-law", "spray", _transformation),
    CheckEntry("spray.pushforward-roundtrip", "spray", _pushforward),
    CheckEntry("atlas.regularity", "spray", _regularity),
    CheckEntry("atlas.cocycle", "spray", _cocycle),
    CheckEntry("atlas.inverse-pair", "spray", _inverse_pair),
    CheckEntry("jets.oracle", "spray", _jet_oracle),
    CheckEntry("connection.identities", "connection", _identities),
    CheckEntry("connection.cd-axioms", "connection", _cd_axioms),
    CheckEntry("connection.nabla-k", "connection", _nabla_k),
    CheckEntry("connection.chart-invariance", "connection", _chart_invariance),
    CheckEntry("connection.field-compatibility", "connection", _field_compatibility),
    CheckEntry("connection.splitting-roundtrip", "connection", _splitting_roundtrip),
    CheckEntry("second-order.trivialization", "second-order", _trivialization),
    CheckEntry("second-order.conjugacy", "second-order", _conjugacy),
    CheckEntry("second-order.equivalence", "second-order", _equivalence),
    CheckEntry("second-order.witness", "second-order", _witness),
    CheckEntry("second-order.induced", "second-order", _induced),
    CheckEntry("geodesic.reparam", "geodesic", _reparam),
    CheckEntry("geodesic.energy", "geodesic", _energy),
    CheckEntry("geodesic.energy-order", "geodesic", _energy_order),
    CheckEntry("geodesic.time-reversal", "geodesic", _reversal),
    CheckEntry("geodesic.exact", "geodesic", _exact),
    CheckEntry("geodesic.rk4-order", "geodesic", _rk4_order),
    CheckEntry("geodesic.chart-switch", "geodesic", _chart_switch),
)
"""Every check group in report order"""


def registry_entry(name: str) -> CheckEntry:
    """Return the registered check group called ``name``."""
    for entry in REGISTRY:
        if entry.name == name:
            return entry
    raise ConfigurationError(f"unknown check group '{name}'")


def merged_tolerances(overrides: Mapping[str, float] | None = None) -> dict[str, float]:
    """Return the default tolerances with ``overrides`` applied."""
    tolerances = dict(DEFAULT_TOLERANCES)
    for key, value in (overrides or {}).items():
        if key not in tolerances:
            raise ConfigurationError(
                f"unknown tolerance '{key}', expected one of {', '.join(sorted(tolerances))}"
            )
        if not value > 0.0:
            raise ConfigurationError(f"tolerance '{key}' must be positive, got {value}")
        tolerances[key] = float(value)
    return tolerances


def entry_rng(seed: int, name: str) -> np.random.Generator:
    """Return the generator of one registry entry; independent of run order."""
    return np.random.default_rng([seed, zlib.crc32(name.encode("utf-8"))])


def select_entries(suite: str) -> list[CheckEntry]:
    """Return the registry entries of ``suite`` (or every entry for ``all``)."""
    if suite != SUITE_ALL and suite not in SUITES:
        raise ConfigurationError(
            f"unknown suite '{suite}', expected one of {', '.join([*SUITES, SUITE_ALL])}"
        )
    return [e for e in REGISTRY if suite in (SUITE_ALL, e.suite)]


def _run_entry(
    entry: CheckEntry, m: ManifoldDef, ctx: CheckContext
) -> list[CheckRecord]:
    try:
        records = entry.run(m, ctx)
    except Exception as err:  # pylint: disable=broad-exception-caught
        _LOGGER.warning("Check %s raised %s: %s", entry.name, type(err).__name__, err)
        return [CheckRecord.failure(entry.name, err)]
    for record in records:
        if not record.passed:
            _LOGGER.warning(
                "Check %s failed: residual %s > %s",
                record.check_id,
                record.max_residual,
                record.tolerance,
            )
    _LOGGER.debug("Check %s produced %d record(s)", entry.name, len(records))
    return records


def _environment(
    m: ManifoldDef, seed: int, tolerances: Mapping[str, float]
) -> dict[str, Any]:
    return {
        "seed": seed,
        "tolerances": dict(sorted(tolerances.items())),
        "level": m.space.active_level,
        "grades": list(m.space.grades),
        "spray_kind": m.spray_kind,
    }


async def async_run_suite(
    m: ManifoldDef,
    suite: str = SUITE_ALL,
    tolerances: Mapping[str, float] | None = None,
    seed: int | None = None,
) -> Report:
    """Run a suite with every registry entry dispatched to the default executor."""
    entries = select_entries(suite)
    merged = merged_tolerances(tolerances)
    seed = m.seed if seed is None else seed
    _LOGGER.info(
        "Running suite %s on %s (%d check groups, seed %d)",
        suite,
        m.name,
        len(entries),
        seed,
    )
    loop = asyncio.get_running_loop()
    results = await asyncio.gather(
        *(
            loop.run_in_executor(
                None, _run_entry, entry, m, CheckContext(merged, entry_rng(seed, entry.name))
            )
            for entry in entries
        )
    )
    order = {entry.name: index for index, entry in enumerate(entries)}
    keyed = [
        (order[entry.name], record.check_id, record)
        for entry, records in zip(entries, results, strict=True)
        for record in records
    ]
    keyed.sort(key=lambda item: (item[0], item[1]))
    report = Report(suite, m.name, [r for _, _, r in keyed], _environment(m, seed, merged))
    _LOGGER.info(
        "Suite %s on %s finished: %d/%d passed",
        suite,
        m.name,
        sum(r.passed for r in report.records),
        len(report.records),
    )
    return report


def run_suite(
    m: ManifoldDef,
    suite: str = SUITE_ALL,
    tolerances: Mapping[str, float] | None = None,
    seed: int | None = None,
) -> Report:
    """Synchronous wrapper around :func:`async_run_suite`."""
    return asyncio.run(async_run_suite(m, suite, tolerances, seed))


# =============================================================================
# Truncation stability
# =============================================================================


def _projected(values: np.ndarray, low: ManifoldDef, high: ManifoldDef) -> np.ndarray:
    vector = Vector.of(values, high.space)
    return project(vector, high.space.active_level, low.space.active_level).array


def _level_pair(
    low: ManifoldDef, high: ManifoldDef, ctx: CheckContext
) -> list[CheckRecord]:
    tag = f"{low.space.active_level}->{high.space.active_level}"
    tol = ctx.tol("truncation")
    K_low, K_high = ConnectionMap(low.bilinear), ConnectionMap(high.bilinear)
    C_low, C_high = ConnectionSplitting(low.bilinear), ConnectionSplitting(high.bilinear)
    k_res, c_res = [], []
    for chart in high.charts:
        low_chart = low.atlas.chart(chart.name)
        for x in sample_points(chart, ctx.samples, ctx.rng):
            xi = DoubleTangentVector.random(ctx.rng, x, chart.name)
            cut = DoubleTangentVector(
                *(_projected(b, low, high) for b in xi.blocks()), chart=low_chart.name
            )
            if not low_chart.contains(cut.x):
                continue
            k_high = _projected(connection_map_apply(K_high, xi)[1], low, high)
            k_res.append(float(np.max(np.abs(connection_map_apply(K_low, cut)[1] - k_high))))
            c_high = _projected(splitting_apply(C_high, xi).w, low, high)
            c_res.append(float(np.max(np.abs(splitting_apply(C_low, cut).w - c_high))))

    geo_low, geo_high = low.geodesic, high.geodesic
    traj_high = GeodesicIntegrator(high.atlas, high.bilinear).integrate(
        geo_high.chart, geo_high.x0, geo_high.v0, geo_high.t1, geo_high.step
    )
    traj_low = GeodesicIntegrator(low.atlas, low.bilinear).integrate(
        geo_low.chart,
        _projected(np.asarray(geo_high.x0), low, high),
        _projected(np.asarray(geo_high.v0), low, high),
        geo_high.t1,
        geo_high.step,
    )
    g_res = [
        float(np.max(np.abs(a.x - _projected(b.x, low, high))))
        for a, b in zip(traj_low.samples, traj_high.samples, strict=False)
    ]
    return [
        CheckRecord.from_residuals(f"truncation.connection-map[{tag}]", k_res, tol),
        CheckRecord.from_residuals(f"truncation.splitting[{tag}]", c_res, tol),
        CheckRecord.from_residuals(f"truncation.geodesic[{tag}]", g_res, tol),
    ]


def truncation_stability(
    m: ManifoldDef,
    levels: Sequence[int] | None = None,
    tolerances: Mapping[str, float] | None = None,
    seed: int | None = None,
) -> Report:
    """Check that truncations at consecutive levels agree on shared coordinates.

    The connection identities run at every requested level as well.
    """
    levels = sorted(set(levels or range(1, m.space.levels + 1)))
    if len(levels) < 2:
        raise ConfigurationError("truncation stability needs at least two levels")
    merged = merged_tolerances(tolerances)
    seed = m.seed if seed is None else seed
    try:
        defs = {level: m.at_level(level) for level in levels}
    except DomainError as err:
        raise ConfigurationError(f"manifold '{m.name}': {err}") from err
    records: list[CheckRecord] = []
    for level, definition in defs.items():
        ctx = CheckContext(merged, entry_rng(seed, f"truncation.level{level}"))
        for record in _run_entry(registry_entry("connection.identities"), definition, ctx):
            record.check_id = f"truncation.level{level}.{record.check_id}"
            records.append(record)
    for low, high in zip(levels, levels[1:], strict=False):
        ctx = CheckContext(merged, entry_rng(seed, f"truncation.{low}->{high}"))
        records.extend(_level_pair(defs[low], defs[high], ctx))
    environment = _environment(m, seed, merged)
    environment["levels"] = levels
    return Report("truncation", m.name, records, environment)

