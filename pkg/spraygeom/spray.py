"""Sprays per chart, their bilinear maps, and the spray checks."""

from __future__ import annotations

import functools
import logging
from abc import ABC, abstractmethod
from collections.abc import Callable, Iterator, Mapping, Sequence
from dataclasses import dataclass, field
from typing import ClassVar

import numpy as np
import numpy.typing as npt

from .atlas import Chart, DoubleTangentVector, Transition, overlap_points, sample_points
from .const import (
    DEFAULT_SAMPLES,
    DEFAULT_TOLERANCES,
    HOMOGENEITY_SCALARS,
)
from .exceptions import (
    DomainError,
    EvaluationError,
    SprayAxiomError,
    UnresolvedReferenceError,
)
from .expressions import ExprMap
from .jets import fd_oracle, jacobian, pure_second, second_dir_derivative
from .metric import christoffel_fd, christoffel_jet
from .report import CheckRecord

_LOGGER = logging.getLogger(__name__)

FloatArray = npt.NDArray[np.float64]

AXIOM_REJECTION: float = 1e-6
"""Polarization/jet disagreement above this rejects a spray as non-quadratic"""


def _norm(values: FloatArray) -> float:
    return float(np.max(np.abs(values))) if values.size else 0.0


def _arr(values: npt.ArrayLike) -> FloatArray:
    return np.atleast_1d(np.asarray(values, dtype=np.float64))


# =============================================================================
# Chart-local quadratic components
# =============================================================================


class ChartSpray(ABC):
    """Quadratic component S2(x, v) of a spray in one chart."""

    kind: ClassVar[str] = "abstract"

    @abstractmethod
    def __call__(self, x: npt.ArrayLike, v: npt.ArrayLike) -> FloatArray:
        """Evaluate S2(x, v)."""

    def half_hessian(
        self, x: npt.ArrayLike, u: npt.ArrayLike, v: npt.ArrayLike
    ) -> FloatArray:
        """Return 1/2 D_v^2 S2(x, 0)(u, v) by central differences in v."""
        xs = _arr(x)
        zero = np.zeros_like(xs)

        def along(h: FloatArray) -> FloatArray:
            return fd_oracle(lambda p: self(xs, p), zero, h, order=2)

        a, b = _arr(u), _arr(v)
        return 0.25 * (along(a + b) - (along(a) + along(b)))


@dataclass(frozen=True)
class ExpressionSpray(ChartSpray):
    """S2 given as an expression in x0.., v0.."""

    expr: ExprMap
    kind: ClassVar[str] = "S2"

    def __call__(self, x: npt.ArrayLike, v: npt.ArrayLike) -> FloatArray:
        return self.expr(x, v)

    def half_hessian(
        self, x: npt.ArrayLike, u: npt.ArrayLike, v: npt.ArrayLike
    ) -> FloatArray:
        """Return 1/2 D_v^2 S2(x, 0)(u, v) from jets seeded in the v block."""
        xs = _arr(x)
        zero = np.zeros_like(xs)
        point = np.concatenate([xs, zero])
        h1 = np.concatenate([zero, _arr(u)])
        h2 = np.concatenate([zero, _arr(v)])
        return 0.5 * second_dir_derivative(self.expr, point, h1, h2)


@dataclass(frozen=True)
class BilinearSpray(ChartSpray):
    """S2(x, v) = B(x; v, v) for a given bilinear map."""

    bilinear: ChartBilinear
    kind: ClassVar[str] = "B"

    def __call__(self, x: npt.ArrayLike, v: npt.ArrayLike) -> FloatArray:
        return self.bilinear.quadratic(x, v)


@dataclass(frozen=True)
class PushforwardSpray(ChartSpray):
    """Target-chart spray of ``source`` transported along ``transition``.

    S_V(phi(x), Dphi(x) v) = D^2 phi(x)(v, v) + Dphi(x) S_U(x, v)
    """

    source: ChartSpray
    transition: Transition
    kind: ClassVar[str] = "pushforward"

    def __post_init__(self) -> None:
        """Require an inverse to locate preimages."""
        if self.transition.inverse is None:
            raise DomainError(
                f"pushforward along {self.transition.label} needs an inverse map"
            )

    def __call__(self, y: npt.ArrayLike, w: npt.ArrayLike) -> FloatArray:
        t = self.transition
        try:
            x = t.apply_inverse(y)
            jac = jacobian(t.map, x)
            v = np.linalg.solve(jac, _arr(w))
        except (EvaluationError, np.linalg.LinAlgError) as err:
            raise DomainError(
                f"pushforward along {t.label} failed at {np.asarray(y)}: {err}"
            ) from err
        return pure_second(t.map, x, v) + jac @ self.source(x, v)


# =============================================================================
# Chart-local bilinear maps
# =============================================================================


class ChartBilinear(ABC):
    """Bilinear map B(x; u, v) in one chart."""

    kind: ClassVar[str] = "abstract"

    @abstractmethod
    def __call__(
        self, x: npt.ArrayLike, u: npt.ArrayLike, v: npt.ArrayLike
    ) -> FloatArray:
        """Evaluate B(x; u, v)."""

    def quadratic(self, x: npt.ArrayLike, v: npt.ArrayLike) -> FloatArray:
        """Return B(x; v, v)."""
        return self(x, v, v)


def _polarize(q: Callable[[FloatArray], FloatArray], u: FloatArray, v: FloatArray) -> FloatArray:
    # the sum of the single terms is formed first: exact symmetry in (u, v)
    return 0.5 * (q(u + v) - (q(u) + q(v)))


@dataclass(frozen=True)
class PolarizedBilinear(ChartBilinear):
    """B by polarization of a spray component."""

    spray: ChartSpray
    kind: ClassVar[str] = "polarized"

    def __call__(
        self, x: npt.ArrayLike, u: npt.ArrayLike, v: npt.ArrayLike
    ) -> FloatArray:
        xs = _arr(x)
        return _polarize(lambda h: self.spray(xs, h), _arr(u), _arr(v))

    def quadratic(self, x: npt.ArrayLike, v: npt.ArrayLike) -> FloatArray:
        return self.spray(x, v)


@dataclass(frozen=True)
class ExpressionBilinear(ChartBilinear):
    """B given as an expression in x0.., u0.., v0.., evaluated as written."""

    expr: ExprMap
    kind: ClassVar[str] = "B"

    def __call__(
        self, x: npt.ArrayLike, u: npt.ArrayLike, v: npt.ArrayLike
    ) -> FloatArray:
        return self.expr(x, u, v)


@dataclass(frozen=True)
class FlatBilinear(ChartBilinear):
    """B = 0."""

    kind: ClassVar[str] = "flat"

    def __call__(
        self, x: npt.ArrayLike, u: npt.ArrayLike, v: npt.ArrayLike
    ) -> FloatArray:
        return np.zeros_like(_arr(u))


@dataclass(frozen=True, eq=False)
class ChristoffelBilinear(ChartBilinear):
    """B = -Gamma for a metric, with Gamma from jet derivatives."""

    metric: ExprMap
    kind: ClassVar[str] = "metric"
    _cache: Callable[[bytes], FloatArray] = field(init=False, repr=False)

    def __post_init__(self) -> None:
        """Attach a per-instance cache of Christoffel symbols by base point."""
        object.__setattr__(
            self, "_cache", functools.lru_cache(maxsize=256)(self._compute)
        )

    def _compute(self, key: bytes) -> FloatArray:
        gamma = christoffel_jet(self.metric, np.frombuffer(key, dtype=np.float64))
        gamma.setflags(write=False)
        return gamma

    def gamma(self, x: npt.ArrayLike) -> FloatArray:
        """Return Gamma[k, i, j] at ``x``."""
        return self._cache(_arr(x).tobytes())

    def quadratic(self, x: npt.ArrayLike, v: npt.ArrayLike) -> FloatArray:
        """Return -Gamma(x)(v, v)."""
        vs = _arr(v)
        return -np.einsum("kij,i,j->k", self.gamma(x), vs, vs)

    def __call__(
        self, x: npt.ArrayLike, u: npt.ArrayLike, v: npt.ArrayLike
    ) -> FloatArray:
        return _polarize(lambda h: self.quadratic(x, h), _arr(u), _arr(v))


# =============================================================================
# Chart tables
# =============================================================================


@dataclass(frozen=True)
class SprayField:
    """Spray given by its quadratic component in every chart."""

    components: Mapping[str, ChartSpray]

    def at(self, chart: str) -> ChartSpray:
        """Return the component of ``chart``."""
        try:
            return self.components[chart]
        except KeyError as err:
            raise UnresolvedReferenceError(f"spray has no chart '{chart}'") from err

    def __contains__(self, chart: object) -> bool:
        return chart in self.components

    def __iter__(self) -> Iterator[str]:
        return iter(self.components)

    def with_chart(self, chart: str, component: ChartSpray) -> SprayField:
        """Return a copy with ``chart`` set to ``component``."""
        return SprayField({**self.components, chart: component})

    def evaluate(self, chart: str, x: npt.ArrayLike, v: npt.ArrayLike) -> FloatArray:
        """Return S2(x, v) in ``chart``."""
        return self.at(chart)(x, v)

    def section(self, chart: str, x: npt.ArrayLike, u: npt.ArrayLike) -> DoubleTangentVector:
        """Return the lifted vector field (x, u) -> (x, u, u, S2(x, u))."""
        return DoubleTangentVector(x, u, u, self.evaluate(chart, x, u), chart)


@dataclass(frozen=True)
class BilinearCoeffs:
    """Bilinear map B in every chart."""

    maps: Mapping[str, ChartBilinear]

    def at(self, chart: str | None) -> ChartBilinear:
        """Return the map of ``chart``; None selects the only chart."""
        if chart is None:
            if len(self.maps) != 1:
                raise UnresolvedReferenceError(
                    "chart must be named when B has several charts"
                )
            return next(iter(self.maps.values()))
        try:
            return self.maps[chart]
        except KeyError as err:
            raise UnresolvedReferenceError(f"B has no chart '{chart}'") from err

    def __contains__(self, chart: object) -> bool:
        return chart in self.maps

    def __iter__(self) -> Iterator[str]:
        return iter(self.maps)

    def __call__(
        self,
        chart: str | None,
        x: npt.ArrayLike,
        u: npt.ArrayLike,
        v: npt.ArrayLike,
    ) -> FloatArray:
        """Evaluate B(x; u, v) in ``chart``."""
        return self.at(chart)(x, u, v)

    def merged(self, other: BilinearCoeffs) -> BilinearCoeffs:
        """Return the union of both chart tables."""
        return BilinearCoeffs({**self.maps, **other.maps})

    @classmethod
    def flat(cls, charts: Sequence[str]) -> BilinearCoeffs:
        """B = 0 on every named chart."""
        return cls({name: FlatBilinear() for name in charts})


# =============================================================================
# Construction
# =============================================================================


def extraction_residual(
    spray: ChartSpray,
    bilinear: ChartBilinear,
    x: FloatArray,
    u: FloatArray,
    v: FloatArray,
) -> float:
    """Worst of |B - 1/2 D_v^2 S2| and |B(v, v) - S2(x, v)|, relative."""
    polar = bilinear(x, u, v)
    jet = spray.half_hessian(x, u, v)
    diagonal = bilinear.quadratic(x, v)
    direct = spray(x, v)
    return max(
        _norm(polar - jet) / (1.0 + _norm(jet)),
        _norm(diagonal - direct) / (1.0 + _norm(direct)),
    )


def extract_bilinear(
    spray: SprayField,
    chart: Chart,
    samples: int = DEFAULT_SAMPLES,
    rng: np.random.Generator | None = None,
) -> BilinearCoeffs:
    """Polarize the chart component of ``spray`` and validate it against jets."""
    rng = rng or np.random.default_rng()
    component = spray.at(chart.name)
    bilinear = PolarizedBilinear(component)
    worst = 0.0
    for x in sample_points(chart, samples, rng):
        u, v = rng.standard_normal(x.size), rng.standard_normal(x.size)
        worst = max(worst, extraction_residual(component, bilinear, x, u, v))
    if worst > AXIOM_REJECTION:
        raise SprayAxiomError(
            f"chart '{chart.name}': spray is not fiberwise quadratic "
            f"(polarization residual {worst:.3e})"
        )
    _LOGGER.debug("Extracted B on chart %s (residual %.3e)", chart.name, worst)
    return BilinearCoeffs({chart.name: bilinear})


def pushforward_spray(spray: SprayField, t: Transition) -> SprayField:
    """Transport the source-chart component to the target chart of ``t``."""
    component = PushforwardSpray(spray.at(t.source.name), t)
    return spray.with_chart(t.target.name, component)


# =============================================================================
# Checks
# =============================================================================


def check_second_order(
    spray: SprayField,
    chart: Chart,
    samples: int = DEFAULT_SAMPLES,
    rng: np.random.Generator | None = None,
    section: Callable[[FloatArray, FloatArray], DoubleTangentVector] | None = None,
) -> CheckRecord:
    """Check that the lifted section satisfies T(pi) o S = Id."""
    rng = rng or np.random.default_rng()
    lift = section or (lambda x, u: spray.section(chart.name, x, u))
    residuals = []
    for x in sample_points(chart, samples, rng):
        u = rng.standard_normal(x.size)
        xi = lift(x, u)
        residuals.append(max(_norm(xi.x - x), _norm(xi.u - u), _norm(xi.v - u)))
    return CheckRecord.from_residuals(
        f"spray.second-order[{chart.name}]", residuals, DEFAULT_TOLERANCES["exact"]
    )


def check_homogeneity(
    spray: SprayField,
    chart: Chart,
    scalars: Sequence[float] = HOMOGENEITY_SCALARS,
    samples: int = DEFAULT_SAMPLES,
    rng: np.random.Generator | None = None,
    tol: float | None = None,
) -> CheckRecord:
    """Check S2(x, s v) = s^2 S2(x, v) over sampled points and scalars."""
    if not scalars:
        raise DomainError("at least one scalar is required")
    rng = rng or np.random.default_rng()
    tol = DEFAULT_TOLERANCES["homogeneity"] if tol is None else tol
    component = spray.at(chart.name)
    residuals: list[float] = []
    skipped = 0
    for x in sample_points(chart, samples, rng):
        v = rng.standard_normal(x.size)
        try:
            base = component(x, v)
            for s in scalars:
                scaled = component(x, s * v)
                residuals.append(_norm(scaled - s * s * base) / (1.0 + _norm(base)))
        except (EvaluationError, DomainError) as err:
            skipped += 1
            _LOGGER.debug("Homogeneity sample skipped on %s: %s", chart.name, err)
    if skipped:
        _LOGGER.warning("Homogeneity on %s skipped %d samples", chart.name, skipped)
    return CheckRecord.from_residuals(
        f"spray.homogeneity[{chart.name}]", residuals, tol, skipped=skipped
    )


def check_extraction(
    spray: SprayField,
    bilinear: BilinearCoeffs,
    chart: Chart,
    samples: int = DEFAULT_SAMPLES,
    rng: np.random.Generator | None = None,
    tol: float | None = None,
) -> CheckRecord:
    """Cross-check B against the jet second derivative and the diagonal."""
    rng = rng or np.random.default_rng()
    tol = DEFAULT_TOLERANCES["extraction"] if tol is None else tol
    component, local = spray.at(chart.name), bilinear.at(chart.name)
    residuals = []
    for x in sample_points(chart, samples, rng):
        u, v = rng.standard_normal(x.size), rng.standard_normal(x.size)
        residuals.append(extraction_residual(component, local, x, u, v))
    return CheckRecord.from_residuals(f"spray.extraction[{chart.name}]", residuals, tol)


def check_bilinear_symmetry(
    bilinear: BilinearCoeffs,
    chart: Chart,
    samples: int = DEFAULT_SAMPLES,
    rng: np.random.Generator | None = None,
    tol: float | None = None,
) -> CheckRecord:
    """Check B(x; u, v) = B(x; v, u)."""
    rng = rng or np.random.default_rng()
    tol = DEFAULT_TOLERANCES["symmetry"] if tol is None else tol
    local = bilinear.at(chart.name)
    residuals = []
    for x in sample_points(chart, samples, rng):
        u, v = rng.standard_normal(x.size), rng.standard_normal(x.size)
        residuals.append(_norm(local(x, u, v) - local(x, v, u)))
    return CheckRecord.from_residuals(
        f"spray.bilinear-symmetry[{chart.name}]", residuals, tol
    )


def check_bilinearity(
    bilinear: BilinearCoeffs,
    chart: Chart,
    samples: int = DEFAULT_SAMPLES,
    rng: np.random.Generator | None = None,
    tol: float | None = None,
) -> CheckRecord:
    """Check B(x; a u1 + b u2, v) = a B(x; u1, v) + b B(x; u2, v)."""
    rng = rng or np.random.default_rng()
    tol = DEFAULT_TOLERANCES["bilinearity"] if tol is None else tol
    local = bilinear.at(chart.name)
    residuals = []
    for x in sample_points(chart, samples, rng):
        u1, u2, v = (rng.standard_normal(x.size) for _ in range(3))
        a, b = rng.uniform(-2.0, 2.0, size=2)
        combined = local(x, a * u1 + b * u2, v)
        parts = a * local(x, u1, v) + b * local(x, u2, v)
        residuals.append(_norm(combined - parts) / (1.0 + _norm(parts)))
    return CheckRecord.from_residuals(f"spray.bilinearity[{chart.name}]", residuals, tol)


def check_christoffel(
    metric: ExprMap,
    bilinear: BilinearCoeffs,
    chart: Chart,
    samples: int = DEFAULT_SAMPLES,
    rng: np.random.Generator | None = None,
    tol: float | None = None,
) -> CheckRecord:
    """Compare B with minus the finite-difference Christoffel symbols."""
    rng = rng or np.random.default_rng()
    tol = DEFAULT_TOLERANCES["christoffel"] if tol is None else tol
    local = bilinear.at(chart.name)
    residuals = []
    for x in sample_points(chart, samples, rng):
        gamma = christoffel_fd(metric, x)
        basis = np.eye(x.size)
        worst = max(
            _norm(local(x, basis[i], basis[j]) + gamma[:, i, j])
            for i in range(x.size)
            for j in range(x.size)
        )
        residuals.append(worst / (1.0 + _norm(gamma)))
    return CheckRecord.from_residuals(f"spray.christoffel[{chart.name}]", residuals, tol)


def check_transformation_law(
    bilinear: BilinearCoeffs,
    t: Transition,
    samples: int = DEFAULT_SAMPLES,
    tol: float | None = None,
    rng: np.random.Generator | None = None,
) -> CheckRecord:
    """Check B_V(phi x; Dphi u, Dphi v) = D^2 phi(u, v) + Dphi B_U(x; u, v)."""
    rng = rng or np.random.default_rng()
    tol = DEFAULT_TOLERANCES["transformation"] if tol is None else tol
    source, target = bilinear.at(t.source.name), bilinear.at(t.target.name)
    residuals = []
    for x in overlap_points(t, samples, rng):
        u, v = rng.standard_normal(x.size), rng.standard_normal(x.size)
        jac = jacobian(t.map, x)
        lhs = target(t.apply(x), jac @ u, jac @ v)
        rhs = second_dir_derivative(t.map, x, u, v) + jac @ source(x, u, v)
        residuals.append(_norm(lhs - rhs) / (1.0 + _norm(rhs)))
    return CheckRecord.from_residuals(
        f"spray.transformation-law[{t.label}]", residuals, tol
    )


def check_pushforward_roundtrip(
    spray: SprayField,
    t: Transition,
    samples: int = DEFAULT_SAMPLES,
    rng: np.random.Generator | None = None,
    tol: float | None = None,
) -> CheckRecord:
    """Push the spray along ``t`` and back; compare with the original."""
    rng = rng or np.random.default_rng()
    tol = DEFAULT_TOLERANCES["pushforward"] if tol is None else tol
    forward = pushforward_spray(spray, t)
    back = pushforward_spray(forward, t.reversed()).at(t.source.name)
    original = spray.at(t.source.name)
    residuals = []
    for x in overlap_points(t, samples, rng):
        v = rng.standard_normal(x.size)
        expected = original(x, v)
        residuals.append(_norm(back(x, v) - expected) / (1.0 + _norm(expected)))
    return CheckRecord.from_residuals(
        f"spray.pushforward-roundtrip[{t.label}]", residuals, tol
    )
