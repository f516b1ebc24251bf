"""Covariant derivative, connection map, linear symmetric connection and lifts.

Every object here is determined by the bilinear map B of a spray. In the
(x, u, v, w) convention:

    K(x, u, v, w)   = (x, w - B(x; u, v))
    c(x, u, v, w)   = (x, u, 0, w - B(x; u, v))
    Hor_u(w)        = (x, u, w, B(x; u, w))
    Ver_u(w)        = (x, u, 0, w)
    J(x, u, v, w)   = (x, u, 0, v)
"""

from __future__ import annotations

import logging
from collections.abc import Callable, Mapping, Sequence
from dataclasses import dataclass

import numpy as np
import numpy.typing as npt

from .atlas import Chart, DoubleTangentVector, Transition, overlap_points, sample_points
from .const import DEFAULT_SAMPLES, DEFAULT_TOLERANCES, IDENTITY_SAMPLES
from .exceptions import DomainError, SplittingRejectedError, UnresolvedReferenceError
from .expressions import ExprMap
from .jets import dir_derivative, jacobian, second_dir_derivative
from .report import CheckRecord
from .spray import BilinearCoeffs, ChartBilinear

_LOGGER = logging.getLogger(__name__)

FloatArray = npt.NDArray[np.float64]
TangentVector = tuple[FloatArray, FloatArray]


def _norm(values: FloatArray) -> float:
    return float(np.max(np.abs(values))) if values.size else 0.0


# =============================================================================
# Fields
# =============================================================================


@dataclass(frozen=True)
class VectorField:
    """Vector field given by its principal part in each chart."""

    name: str
    charts: Mapping[str, ExprMap]

    def at(self, chart: str) -> ExprMap:
        """Return the representative in ``chart``."""
        try:
            return self.charts[chart]
        except KeyError as err:
            raise UnresolvedReferenceError(
                f"field '{self.name}' has no chart '{chart}'"
            ) from err

    def __call__(self, chart: str, x: npt.ArrayLike) -> FloatArray:
        return self.at(chart)(x)

    def scaled(self, f: ScalarFunction) -> VectorField:
        """Return the field f X on the charts both are defined on."""
        common = [c for c in self.charts if c in f.charts]
        return VectorField(
            f"{f.name}*{self.name}",
            {c: self.charts[c].scaled(f.charts[c]) for c in common},
        )

    def plus(self, other: VectorField) -> VectorField:
        """Return X + Y on the charts both are defined on."""
        common = [c for c in self.charts if c in other.charts]
        return VectorField(
            f"{self.name}+{other.name}",
            {c: self.charts[c].added(other.charts[c]) for c in common},
        )


@dataclass(frozen=True)
class ScalarFunction:
    """Real function given in each chart."""

    name: str
    charts: Mapping[str, ExprMap]

    def at(self, chart: str) -> ExprMap:
        """Return the representative in ``chart``."""
        try:
            return self.charts[chart]
        except KeyError as err:
            raise UnresolvedReferenceError(
                f"function '{self.name}' has no chart '{chart}'"
            ) from err

    def __call__(self, chart: str, x: npt.ArrayLike) -> float:
        return float(self.at(chart)(x)[0])


# =============================================================================
# Covariant derivative
# =============================================================================


def covariant_derivative(
    B: BilinearCoeffs,
    X: VectorField,
    Y: VectorField,
    chart: Chart,
    x: npt.ArrayLike,
) -> FloatArray:
    """Return (nabla_X Y)(x) = DY(x)(X(x)) - B(x; X(x), Y(x))."""
    if not chart.contains(x):
        raise DomainError(f"point {np.asarray(x)} is outside chart '{chart.name}'")
    xv = X(chart.name, x)
    yv = Y(chart.name, x)
    return dir_derivative(Y.at(chart.name), x, xv) - B(chart.name, x, xv, yv)


def lie_bracket(
    X: VectorField, Y: VectorField, chart: Chart, x: npt.ArrayLike
) -> FloatArray:
    """Return [X, Y](x) = DY(x)(X(x)) - DX(x)(Y(x))."""
    xv, yv = X(chart.name, x), Y(chart.name, x)
    return dir_derivative(Y.at(chart.name), x, xv) - dir_derivative(
        X.at(chart.name), x, yv
    )


def check_cd_axioms(
    B: BilinearCoeffs,
    chart: Chart,
    fields: Sequence[VectorField],
    functions: Sequence[ScalarFunction],
    samples: int = DEFAULT_SAMPLES,
    rng: np.random.Generator | None = None,
    tol: float | None = None,
    torsion_tol: float | None = None,
) -> list[CheckRecord]:
    """Check tensoriality, Leibniz rule, additivity and torsion-freeness.

    ``tol`` bounds the first three; the torsion record uses ``torsion_tol``.
    """
    if len(fields) < 2 or not functions:
        raise UnresolvedReferenceError(
            "axiom checks need two vector fields and one scalar function"
        )
    rng = rng or np.random.default_rng()
    tol = DEFAULT_TOLERANCES["cd-axioms"] if tol is None else tol
    torsion_tol = DEFAULT_TOLERANCES["torsion"] if torsion_tol is None else torsion_tol
    X, Y = fields[0], fields[1]
    f = functions[0]
    fX, fY, XY = X.scaled(f), Y.scaled(f), X.plus(Y)
    name = chart.name
    residuals: dict[str, list[float]] = {
        "tensorial": [],
        "leibniz": [],
        "additivity": [],
        "torsion": [],
    }
    for x in sample_points(chart, samples, rng):
        fx = f(name, x)
        nabla_xy = covariant_derivative(B, X, Y, chart, x)
        nabla_yx = covariant_derivative(B, Y, X, chart, x)

        lhs = covariant_derivative(B, fX, Y, chart, x)
        residuals["tensorial"].append(
            _norm(lhs - fx * nabla_xy) / (1.0 + _norm(lhs))
        )

        df_x = float(dir_derivative(f.at(name), x, X(name, x))[0])
        lhs = covariant_derivative(B, X, fY, chart, x)
        rhs = df_x * Y(name, x) + fx * nabla_xy
        residuals["leibniz"].append(_norm(lhs - rhs) / (1.0 + _norm(rhs)))

        lhs = covariant_derivative(B, XY, Y, chart, x)
        rhs = nabla_xy + covariant_derivative(B, Y, Y, chart, x)
        first = _norm(lhs - rhs) / (1.0 + _norm(rhs))
        lhs = covariant_derivative(B, X, XY, chart, x)
        rhs = covariant_derivative(B, X, X, chart, x) + nabla_xy
        second = _norm(lhs - rhs) / (1.0 + _norm(rhs))
        residuals["additivity"].append(max(first, second))

        torsion = nabla_xy - nabla_yx - lie_bracket(X, Y, chart, x)
        residuals["torsion"].append(_norm(torsion))
    return [
        CheckRecord.from_residuals(
            f"connection.cd-{key}[{name}]",
            values,
            torsion_tol if key == "torsion" else tol,
        )
        for key, values in residuals.items()
    ]


# =============================================================================
# Connection map and splitting
# =============================================================================


@dataclass(frozen=True)
class ConnectionMap:
    """K(x, u, v, w) = (x, w - B(x; u, v))."""

    bilinear: BilinearCoeffs

    def __call__(self, xi: DoubleTangentVector) -> TangentVector:
        return connection_map_apply(self, xi)


@dataclass(frozen=True)
class ConnectionSplitting:
    """c(x, u, v, w) = (x, u, 0, w - B(x; u, v))."""

    bilinear: BilinearCoeffs

    def __call__(self, xi: DoubleTangentVector) -> DoubleTangentVector:
        return splitting_apply(self, xi)


@dataclass(frozen=True)
class BlackBoxSplitting:
    """Splitting known only through evaluation."""

    func: Callable[[DoubleTangentVector], DoubleTangentVector]
    charts: Sequence[Chart]

    def __call__(self, xi: DoubleTangentVector) -> DoubleTangentVector:
        return self.func(xi)

    @classmethod
    def wrapping(
        cls, splitting: ConnectionSplitting, charts: Sequence[Chart]
    ) -> BlackBoxSplitting:
        """Hide a known splitting behind an evaluation-only interface."""
        return cls(lambda xi: splitting_apply(splitting, xi), charts)


@dataclass(frozen=True)
class SampledBilinear(ChartBilinear):
    """B(x; u, v) = -(w block of c(x, u, v, 0)) for an evaluation-only splitting."""

    splitting: BlackBoxSplitting
    chart: str
    kind = "sampled"

    def __call__(
        self, x: npt.ArrayLike, u: npt.ArrayLike, v: npt.ArrayLike
    ) -> FloatArray:
        us = np.atleast_1d(np.asarray(u, dtype=np.float64))
        image = self.splitting(DoubleTangentVector(x, us, v, np.zeros_like(us), self.chart))
        return -image.w


def _local(B: BilinearCoeffs, xi: DoubleTangentVector) -> ChartBilinear:
    return B.at(xi.chart)


def connection_map_apply(K: ConnectionMap, xi: DoubleTangentVector) -> TangentVector:
    """Return (x, w - B(x; u, v))."""
    return xi.x, xi.w - _local(K.bilinear, xi)(xi.x, xi.u, xi.v)


def splitting_apply(C: ConnectionSplitting, xi: DoubleTangentVector) -> DoubleTangentVector:
    """Return (x, u, 0, w - B(x; u, v))."""
    b = _local(C.bilinear, xi)(xi.x, xi.u, xi.v)
    return DoubleTangentVector(xi.x, xi.u, np.zeros_like(xi.v), xi.w - b, xi.chart)


def involution(xi: DoubleTangentVector) -> DoubleTangentVector:
    """Swap the two vector bundle structures: (x, u, v, w) -> (x, v, u, w)."""
    return DoubleTangentVector(xi.x, xi.v, xi.u, xi.w, xi.chart)


def tangent_projection(xi: DoubleTangentVector) -> TangentVector:
    """Return the tangent of the bundle projection, (x, v)."""
    return xi.x, xi.v


def anchor_projection(xi: DoubleTangentVector) -> tuple[FloatArray, FloatArray, FloatArray]:
    """Return (x, u, v), the point of the pull-back bundle under xi."""
    return xi.x, xi.u, xi.v


def pullback_connection(
    K: ConnectionMap, xi: DoubleTangentVector
) -> tuple[FloatArray, FloatArray, FloatArray]:
    """Return (x, u, w - B(x; u, v)), K read as a map into the pull-back bundle."""
    _, k = connection_map_apply(K, xi)
    return xi.x, xi.u, k


def vertical_lift(
    x: npt.ArrayLike, v: npt.ArrayLike, w: npt.ArrayLike, chart: str | None = None
) -> DoubleTangentVector:
    """Return Ver_v(w) = (x, v, 0, w)."""
    vs = np.atleast_1d(np.asarray(v, dtype=np.float64))
    return DoubleTangentVector(x, vs, np.zeros_like(vs), w, chart)


def horizontal_lift(
    B: BilinearCoeffs,
    x: npt.ArrayLike,
    u: npt.ArrayLike,
    w: npt.ArrayLike,
    chart: str | None = None,
) -> DoubleTangentVector:
    """Return Hor_u(w) = (x, u, w, B(x; u, w))."""
    return DoubleTangentVector(x, u, w, B(chart, x, u, w), chart)


def tangent_structure(xi: DoubleTangentVector) -> DoubleTangentVector:
    """Return J(xi) = (x, u, 0, v)."""
    return DoubleTangentVector(xi.x, xi.u, np.zeros_like(xi.v), xi.v, xi.chart)


def projectors(
    C: ConnectionSplitting, xi: DoubleTangentVector
) -> tuple[DoubleTangentVector, DoubleTangentVector]:
    """Return the vertical and horizontal projections of ``xi``."""
    b = _local(C.bilinear, xi)(xi.x, xi.u, xi.v)
    vertical = DoubleTangentVector(xi.x, xi.u, np.zeros_like(xi.v), xi.w - b, xi.chart)
    horizontal = DoubleTangentVector(xi.x, xi.u, xi.v, b, xi.chart)
    return vertical, horizontal


def horizontal_structure(
    C: ConnectionSplitting, xi: DoubleTangentVector
) -> DoubleTangentVector:
    """Return L(xi) = Hor_u(w - B(x; u, v)), inverting J on horizontal vectors."""
    local = _local(C.bilinear, xi)
    k = xi.w - local(xi.x, xi.u, xi.v)
    return DoubleTangentVector(xi.x, xi.u, k, local(xi.x, xi.u, k), xi.chart)


def connection_from_splitting(
    C: ConnectionSplitting | BlackBoxSplitting,
    samples: int = DEFAULT_SAMPLES,
    rng: np.random.Generator | None = None,
    tol: float | None = None,
) -> ConnectionMap:
    """Return the connection map K = (vertical principal part) o c.

    Evaluation-only splittings are validated on samples first.
    """
    if isinstance(C, ConnectionSplitting):
        return ConnectionMap(C.bilinear)
    rng = rng or np.random.default_rng()
    tol = DEFAULT_TOLERANCES["splitting"] if tol is None else tol
    residuals = _validate_black_box(C, samples, rng)
    failing = {k: v for k, v in residuals.items() if not v <= tol}
    if failing:
        raise SplittingRejectedError("splitting is not a linear symmetric connection", failing)
    _LOGGER.debug("Accepted black-box splitting, residuals %s", residuals)
    return ConnectionMap(
        BilinearCoeffs({c.name: SampledBilinear(C, c.name) for c in C.charts})
    )


def _validate_black_box(
    C: BlackBoxSplitting, samples: int, rng: np.random.Generator
) -> dict[str, float]:
    worst = {"vertical": 0.0, "image": 0.0, "symmetry": 0.0, "linearity": 0.0}
    for chart in C.charts:
        for x in sample_points(chart, samples, rng):
            xi = DoubleTangentVector.random(rng, x, chart.name)
            image = C(xi)
            ver = vertical_lift(x, xi.u, xi.w, chart.name)
            worst["vertical"] = max(worst["vertical"], C(ver).distance(ver))
            worst["image"] = max(
                worst["image"],
                _norm(image.v),
                _norm(image.x - x),
                _norm(image.u - xi.u),
            )
            swapped = C(involution(xi))
            worst["symmetry"] = max(
                worst["symmetry"], _norm(swapped.w - image.w) / (1.0 + _norm(image.w))
            )
            other = DoubleTangentVector.random(rng, x, chart.name)
            a, b = rng.uniform(-2.0, 2.0, size=2)
            mixed = C(
                DoubleTangentVector(
                    x, xi.u, a * xi.v + b * other.v, a * xi.w + b * other.w, chart.name
                )
            )
            parts = a * image.w + b * C(
                DoubleTangentVector(x, xi.u, other.v, other.w, chart.name)
            ).w
            worst["linearity"] = max(
                worst["linearity"], _norm(mixed.w - parts) / (1.0 + _norm(parts))
            )
    return worst


# =============================================================================
# Checks
# =============================================================================


def _random_vectors(
    chart: Chart, samples: int, rng: np.random.Generator
) -> list[DoubleTangentVector]:
    return [
        DoubleTangentVector.random(rng, x, chart.name)
        for x in sample_points(chart, samples, rng)
    ]


def check_nabla_equals_K_of_T(  # pylint: disable=invalid-name
    K: ConnectionMap,
    X: VectorField,
    Y: VectorField,
    chart: Chart,
    samples: int = DEFAULT_SAMPLES,
    rng: np.random.Generator | None = None,
    tol: float | None = None,
) -> CheckRecord:
    """Check K(TX(Y(x))) = (nabla_Y X)(x) through independent code paths."""
    rng = rng or np.random.default_rng()
    tol = DEFAULT_TOLERANCES["nabla-k"] if tol is None else tol
    name = chart.name
    residuals = []
    for x in sample_points(chart, samples, rng):
        y = Y(name, x)
        tx = DoubleTangentVector(x, X(name, x), y, dir_derivative(X.at(name), x, y), name)
        _, lhs = connection_map_apply(K, tx)
        rhs = covariant_derivative(K.bilinear, Y, X, chart, x)
        residuals.append(_norm(lhs - rhs) / (1.0 + _norm(rhs)))
    return CheckRecord.from_residuals(
        f"connection.nabla-k[{name}:{X.name},{Y.name}]", residuals, tol
    )


def check_identities(
    B: BilinearCoeffs,
    chart: Chart,
    samples: int = IDENTITY_SAMPLES,
    rng: np.random.Generator | None = None,
    tol: float | None = None,
) -> list[CheckRecord]:
    """Check every exact coordinate identity between c, K, Inv, J, L, lifts and projectors."""
    rng = rng or np.random.default_rng()
    tol = DEFAULT_TOLERANCES["exact"] if tol is None else tol
    K, C = ConnectionMap(B), ConnectionSplitting(B)
    name = chart.name
    names = (
        "splitting-vertical",
        "splitting-involution",
        "involution-twice",
        "tangent-structure-square",
        "tangent-structure-horizontal",
        "k-tangent-structure",
        "k-vertical",
        "vp-idempotent",
        "hp-idempotent",
        "vp-hp-zero",
        "k-horizontal",
        "tpi-horizontal",
        "projector-sum",
        "l-square",
        "l-tangent-structure",
        "tangent-structure-l",
        "tpi-l",
    )
    res: dict[str, list[float]] = {key: [] for key in names}
    for xi in _random_vectors(chart, samples, rng):
        x, u, v, w = xi.blocks()
        ver = vertical_lift(x, u, w, name)
        hor = horizontal_lift(B, x, u, w, name)
        k_xi = connection_map_apply(K, xi)[1]
        vp, hp = projectors(C, xi)
        ell = horizontal_structure(C, xi)

        res["splitting-vertical"].append(splitting_apply(C, ver).distance(ver))
        res["splitting-involution"].append(
            _norm(splitting_apply(C, involution(xi)).w - splitting_apply(C, xi).w)
        )
        res["involution-twice"].append(involution(involution(xi)).distance(xi))
        jj = tangent_structure(tangent_structure(xi))
        res["tangent-structure-square"].append(max(_norm(jj.v), _norm(jj.w)))
        res["tangent-structure-horizontal"].append(tangent_structure(hor).distance(ver))
        res["k-tangent-structure"].append(
            _norm(connection_map_apply(K, tangent_structure(xi))[1] - v)
        )
        res["k-vertical"].append(_norm(connection_map_apply(K, ver)[1] - w))
        res["vp-idempotent"].append(projectors(C, vp)[0].distance(vp))
        res["hp-idempotent"].append(projectors(C, hp)[1].distance(hp))
        zero = projectors(C, hp)[0]
        res["vp-hp-zero"].append(max(_norm(zero.v), _norm(zero.w)))
        res["k-horizontal"].append(_norm(connection_map_apply(K, hor)[1]))
        res["tpi-horizontal"].append(_norm(tangent_projection(hor)[1] - w))
        b = hp.w
        res["projector-sum"].append(
            max(_norm(vp.v + hp.v - v), _norm(vp.w + hp.w - w))
            / (1.0 + _norm(w) + _norm(b))
        )
        ll = horizontal_structure(C, ell)
        res["l-square"].append(max(_norm(ll.v), _norm(ll.w)))
        res["l-tangent-structure"].append(
            horizontal_structure(C, tangent_structure(xi)).distance(hp)
        )
        res["tangent-structure-l"].append(tangent_structure(ell).distance(vp))
        res["tpi-l"].append(_norm(tangent_projection(ell)[1] - k_xi))
    return [
        CheckRecord.from_residuals(f"connection.identity.{key}[{name}]", values, tol)
        for key, values in res.items()
    ]


def check_connection_chart_invariance(
    K: ConnectionMap,
    t: Transition,
    samples: int = DEFAULT_SAMPLES,
    rng: np.random.Generator | None = None,
    tol: float | None = None,
) -> CheckRecord:
    """Check K_V(TT phi(xi)) = T phi(K_U(xi)) across a chart transition."""
    rng = rng or np.random.default_rng()
    tol = DEFAULT_TOLERANCES["transformation"] if tol is None else tol
    source, target = K.bilinear.at(t.source.name), K.bilinear.at(t.target.name)
    residuals = []
    for x in overlap_points(t, samples, rng):
        u, v, w = (rng.standard_normal(x.size) for _ in range(3))
        jac = jacobian(t.map, x)
        image_w = second_dir_derivative(t.map, x, u, v) + jac @ w
        lhs = image_w - target(t.apply(x), jac @ u, jac @ v)
        rhs = jac @ (w - source(x, u, v))
        residuals.append(_norm(lhs - rhs) / (1.0 + _norm(rhs)))
    return CheckRecord.from_residuals(
        f"connection.chart-invariance[{t.label}]", residuals, tol
    )


def check_field_compatibility(
    X: VectorField,
    t: Transition,
    samples: int = DEFAULT_SAMPLES,
    rng: np.random.Generator | None = None,
    tol: float | None = None,
) -> CheckRecord:
    """Check Dphi(x) X_U(x) = X_V(phi(x)) on the overlap."""
    rng = rng or np.random.default_rng()
    tol = DEFAULT_TOLERANCES["fields"] if tol is None else tol
    residuals = []
    for x in overlap_points(t, samples, rng):
        pushed = dir_derivative(t.map, x, X(t.source.name, x))
        expected = X(t.target.name, t.apply(x))
        residuals.append(_norm(pushed - expected) / (1.0 + _norm(expected)))
    return CheckRecord.from_residuals(
        f"connection.field-compatibility[{X.name}:{t.label}]", residuals, tol
    )
