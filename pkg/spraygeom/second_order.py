"""Second-order tangent bundle: trivialization, conjugacy and induced connections.

A 2-jet of a curve in a chart is stored as (x, a, b): position, velocity and
acceleration. A connection map turns T^2 M into a vector bundle through

    lambda(x, a, b) = (x, a, b - B(x; a, a))
"""

from __future__ import annotations

import logging
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field

import numpy as np
import numpy.typing as npt

from .atlas import (
    Chart,
    DoubleTangentVector,
    Transition,
    double_tangent_lift,
    overlap_points,
    sample_points,
)
from .connection import ConnectionMap, ConnectionSplitting
from .const import DEFAULT_SAMPLES, DEFAULT_TOLERANCES, INDUCED_SAMPLES
from .exceptions import ConfigurationError, DomainError, SplittingRejectedError
from .expressions import ExprMap
from .jets import dir_derivative, jet_eval
from .report import CheckRecord
from .space import ModelSpace
from .spray import (
    BilinearCoeffs,
    BilinearSpray,
    ChartBilinear,
    PolarizedBilinear,
    PushforwardSpray,
)

_LOGGER = logging.getLogger(__name__)

FloatArray = npt.NDArray[np.float64]
FiberTangent = tuple[FloatArray, FloatArray, FloatArray]

WITNESS_CHART = "witness"
"""Chart name of the built-in non-conjugate example"""


def _norm(values: FloatArray) -> float:
    return float(np.max(np.abs(values))) if values.size else 0.0


def _arr(values: npt.ArrayLike) -> FloatArray:
    return np.atleast_1d(np.asarray(values, dtype=np.float64))


def _blocks(*values: npt.ArrayLike) -> list[FloatArray]:
    arrays = [_arr(v) for v in values]
    sizes = {a.size for a in arrays}
    if len(sizes) != 1:
        raise DomainError(f"second-order blocks differ in size: {sorted(sizes)}")
    return arrays


# =============================================================================
# Types
# =============================================================================


@dataclass(eq=False)
class SecondOrderPoint:
    """2-jet (x, a, b) of a curve through x in a chart."""

    x: FloatArray
    a: FloatArray
    b: FloatArray
    chart: str | None = field(default=None)

    def __post_init__(self) -> None:
        self.x, self.a, self.b = _blocks(self.x, self.a, self.b)


@dataclass(eq=False)
class SecondOrderTriv:
    """Vector bundle coordinates (x, h, k) of a 2-jet."""

    x: FloatArray
    h: FloatArray
    k: FloatArray
    chart: str | None = field(default=None)

    def __post_init__(self) -> None:
        self.x, self.h, self.k = _blocks(self.x, self.h, self.k)

    def distance(self, other: SecondOrderTriv) -> float:
        """Max absolute difference over the three blocks."""
        return max(
            _norm(self.x - other.x), _norm(self.h - other.h), _norm(self.k - other.k)
        )


# =============================================================================
# Trivializations
# =============================================================================


def trivialize(B: BilinearCoeffs, p: SecondOrderPoint) -> SecondOrderTriv:
    """Return (x, a, b - B(x; a, a))."""
    return SecondOrderTriv(p.x, p.a, p.b - B(p.chart, p.x, p.a, p.a), p.chart)


def untrivialize(B: BilinearCoeffs, q: SecondOrderTriv) -> SecondOrderPoint:
    """Return (x, h, k + B(x; h, h))."""
    return SecondOrderPoint(q.x, q.h, q.k + B(q.chart, q.x, q.h, q.h), q.chart)


def upsilon(
    B: BilinearCoeffs, xi: DoubleTangentVector
) -> tuple[FloatArray, FloatArray, FloatArray, FloatArray]:
    """Return (x; u, v, w - B(x; u, v)), the identification TTM = TM + TM + TM."""
    return xi.x, xi.u, xi.v, xi.w - B(xi.chart, xi.x, xi.u, xi.v)


def upsilon_inverse(
    B: BilinearCoeffs,
    x: npt.ArrayLike,
    u: npt.ArrayLike,
    v: npt.ArrayLike,
    k: npt.ArrayLike,
    chart: str | None = None,
) -> DoubleTangentVector:
    """Return (x, u, v, k + B(x; u, v))."""
    return DoubleTangentVector(x, u, v, _arr(k) + B(chart, x, u, v), chart)


def fiber_add(
    B: BilinearCoeffs, p: SecondOrderPoint, q: SecondOrderPoint
) -> SecondOrderPoint:
    """Add two 2-jets over the same point in the trivialized coordinates."""
    if p.chart != q.chart or not np.array_equal(p.x, q.x):
        raise DomainError("fiber addition needs 2-jets over the same point")
    tp, tq = trivialize(B, p), trivialize(B, q)
    return untrivialize(B, SecondOrderTriv(p.x, tp.h + tq.h, tp.k + tq.k, p.chart))


def fiber_scale(B: BilinearCoeffs, c: float, p: SecondOrderPoint) -> SecondOrderPoint:
    """Scale a 2-jet in the trivialized coordinates."""
    tp = trivialize(B, p)
    return untrivialize(B, SecondOrderTriv(p.x, c * tp.h, c * tp.k, p.chart))


# =============================================================================
# Maps between second-order bundles
# =============================================================================


def jet_pushforward(mu: Transition, p: SecondOrderPoint) -> SecondOrderPoint:
    """Return T^2 mu on raw 2-jets: (mu(x), Dmu a, D^2 mu(a, a) + Dmu b)."""
    if not mu.source.contains(p.x):
        raise DomainError(f"point {p.x} is outside chart '{mu.source.name}'")
    y, da, qa = jet_eval(mu.map, p.x, p.a)
    return SecondOrderPoint(y, da, qa + dir_derivative(mu.map, p.x, p.b), mu.target.name)


def _fiber_map(
    src: ChartBilinear,
    dst: ChartBilinear,
    mu: Transition,
    x: FloatArray,
    h: FloatArray,
    k: FloatArray,
) -> tuple[FloatArray, FloatArray]:
    y, dh, qh = jet_eval(mu.map, x, h)
    dk = dir_derivative(mu.map, x, k)
    carried = dir_derivative(mu.map, x, src(x, h, h))
    return dh, dk + carried + qh - dst(y, dh, dh)


def second_order_map(
    B_src: BilinearCoeffs,
    B_dst: BilinearCoeffs,
    mu: Transition,
    p: SecondOrderPoint,
) -> SecondOrderTriv:
    """Return the trivialized image of ``p`` under T^2 mu.

    With (h, k) the source coordinates of ``p``:

        h' = Dmu h
        k' = Dmu k + Dmu B_src(h, h) + D^2 mu(h, h) - B_dst(mu(x); Dmu h, Dmu h)
    """
    if not mu.source.contains(p.x):
        raise DomainError(f"point {p.x} is outside chart '{mu.source.name}'")
    src, dst = B_src.at(mu.source.name), B_dst.at(mu.target.name)
    h, k = p.a, p.b - src(p.x, p.a, p.a)
    h2, k2 = _fiber_map(src, dst, mu, p.x, h, k)
    return SecondOrderTriv(mu.apply(p.x), h2, k2, mu.target.name)


# =============================================================================
# Conjugacy
# =============================================================================


def _conjugacy_residuals(
    K1: ConnectionMap,
    K2: ConnectionMap,
    mu: Transition,
    samples: int,
    rng: np.random.Generator,
) -> list[float]:
    src = K1.bilinear.at(mu.source.name)
    dst = K2.bilinear.at(mu.target.name)
    residuals = []
    for x in overlap_points(mu, samples, rng):
        xi = DoubleTangentVector.random(rng, x, mu.source.name)
        lhs = dir_derivative(mu.map, x, xi.w - src(x, xi.u, xi.v))
        eta = double_tangent_lift(mu, xi)
        rhs = eta.w - dst(eta.x, eta.u, eta.v)
        residuals.append(_norm(lhs - rhs) / (1.0 + _norm(rhs)))
    return residuals


def check_conjugacy(
    K1: ConnectionMap,
    K2: ConnectionMap,
    mu: Transition,
    samples: int = DEFAULT_SAMPLES,
    rng: np.random.Generator | None = None,
    tol: float | None = None,
    *,
    check_id: str | None = None,
) -> CheckRecord:
    """Check T mu o K1 = K2 o TT mu on random double tangent vectors."""
    rng = rng or np.random.default_rng()
    tol = DEFAULT_TOLERANCES["conjugacy"] if tol is None else tol
    return CheckRecord.from_residuals(
        check_id or f"second-order.conjugacy[{mu.label}]",
        _conjugacy_residuals(K1, K2, mu, samples, rng),
        tol,
    )


def _linearity_residuals(
    K1: ConnectionMap,
    K2: ConnectionMap,
    mu: Transition,
    samples: int,
    rng: np.random.Generator,
) -> tuple[list[float], list[float]]:
    src = K1.bilinear.at(mu.source.name)
    dst = K2.bilinear.at(mu.target.name)
    linear, direct = [], []
    for x in overlap_points(mu, samples, rng):
        n = x.size
        h1, k1, h2, k2 = (rng.standard_normal(n) for _ in range(4))
        a, b = rng.uniform(-2.0, 2.0, size=2)
        mixed = _fiber_map(src, dst, mu, x, a * h1 + b * h2, a * k1 + b * k2)
        first = _fiber_map(src, dst, mu, x, h1, k1)
        second = _fiber_map(src, dst, mu, x, h2, k2)
        expected = [a * p + b * q for p, q in zip(first, second, strict=True)]
        scale = 1.0 + max(_norm(e) for e in expected)
        linear.append(
            max(_norm(m - e) for m, e in zip(mixed, expected, strict=True)) / scale
        )
        plain = (dir_derivative(mu.map, x, h1), dir_derivative(mu.map, x, k1))
        scale = 1.0 + max(_norm(p) for p in plain)
        direct.append(
            max(_norm(f - p) for f, p in zip(first, plain, strict=True)) / scale
        )
    return linear, direct


def check_T2mu_linearity(  # pylint: disable=invalid-name
    K1: ConnectionMap,
    K2: ConnectionMap,
    mu: Transition,
    samples: int = DEFAULT_SAMPLES,
    rng: np.random.Generator | None = None,
    tol: float | None = None,
) -> CheckRecord:
    """Check that T^2 mu is fiberwise linear and equals (Dmu h, Dmu k)."""
    rng = rng or np.random.default_rng()
    tol = DEFAULT_TOLERANCES["linearity"] if tol is None else tol
    linear, direct = _linearity_residuals(K1, K2, mu, samples, rng)
    residuals = [max(p, q) for p, q in zip(linear, direct, strict=True)]
    record = CheckRecord.from_residuals(
        f"second-order.t2mu-linearity[{mu.label}]", residuals, tol
    )
    if not record.passed:
        conj = max(_conjugacy_residuals(K1, K2, mu, samples, rng), default=0.0)
        record.detail = f"connection maps are not conjugate (conjugacy residual {conj:.3e})"
        _LOGGER.warning("T2mu over %s is not linear: %s", mu.label, record.detail)
    return record


def witness_transition() -> Transition:
    """Return mu(x) = x^2 on a one-dimensional chart away from 0."""
    names = ("x0",)
    chart = Chart(
        WITNESS_CHART,
        ModelSpace((1,)),
        ExprMap.parse("x0", names),
        ((0.5, 1.5),),
    )
    return Transition(
        chart,
        chart,
        ExprMap.parse("x0^2", names),
        ExprMap.parse("sqrt(x0)", names),
    )


def check_non_conjugate_witness(
    samples: int = DEFAULT_SAMPLES,
    rng: np.random.Generator | None = None,
    threshold: float | None = None,
) -> CheckRecord:
    """Flat connections are not x^2-conjugate: T^2 mu must fail linearity visibly."""
    rng = rng or np.random.default_rng()
    threshold = DEFAULT_TOLERANCES["witness"] if threshold is None else threshold
    mu = witness_transition()
    flat = ConnectionMap(BilinearCoeffs.flat([WITNESS_CHART]))
    linear, _ = _linearity_residuals(flat, flat, mu, samples, rng)
    return CheckRecord.witness(
        "second-order.non-conjugate-witness", linear, threshold
    )


def pushforward_connection(K: ConnectionMap, nu: Transition) -> ConnectionMap:
    """Return K transported along ``nu`` onto the target chart of ``nu``."""
    component = PushforwardSpray(BilinearSpray(K.bilinear.at(nu.source.name)), nu)
    return ConnectionMap(
        BilinearCoeffs({nu.target.name: PolarizedBilinear(component)})
    )


def check_conjugacy_equivalence(
    K1: ConnectionMap,
    K2: ConnectionMap,
    mu: Transition,
    samples: int = DEFAULT_SAMPLES,
    rng: np.random.Generator | None = None,
    tol: float | None = None,
    *,
    nu: Transition | None = None,
) -> list[CheckRecord]:
    """Check reflexivity, symmetry and transitivity of conjugacy for K1 ~ K2 via mu.

    Transitivity pushes K2 along a second diffeomorphism ``nu`` to get K3 and
    checks K1 ~ K3 via nu o mu. ``nu`` defaults to mu itself when mu maps a
    chart to itself and to mu^-1 otherwise.
    """
    rng = rng or np.random.default_rng()
    tol = DEFAULT_TOLERANCES["conjugacy"] if tol is None else tol
    back = mu.reversed()
    if nu is None:
        nu = mu if mu.target.name == mu.source.name else back
    if nu.source.name != mu.target.name:
        raise ConfigurationError(
            f"cannot compose {mu.label} with {nu.label}: chart '{mu.target.name}' "
            f"is not the source of the second map"
        )
    K3 = pushforward_connection(K2, nu)
    cases = (
        ("reflexive", K1, K1, Transition.identity(mu.source)),
        ("symmetric", K2, K1, back),
        ("transitive", K1, K3, mu.then(nu)),
    )
    return [
        check_conjugacy(
            first,
            second,
            t,
            samples,
            rng,
            tol,
            check_id=f"second-order.conjugacy-{kind}[{t.label}]",
        )
        for kind, first, second, t in cases
    ]


# =============================================================================
# Induced connections
# =============================================================================


@dataclass(frozen=True)
class SecondOrderConnection:
    """Connection on T^2 M in trivialized coordinates (x, h, k).

    A tangent (dx, dh, dk) at (x, h, k) maps to the vertical vector
    (0, dh - B(x; h, dx), dk - B(x; k, dx)).
    """

    bilinear: BilinearCoeffs

    def __call__(self, point: SecondOrderTriv, tangent: FiberTangent) -> FiberTangent:
        dx, dh, dk = (_arr(t) for t in tangent)
        local = self.bilinear.at(point.chart)
        return (
            np.zeros_like(dx),
            dh - local(point.x, point.h, dx),
            dk - local(point.x, point.k, dx),
        )


@dataclass(frozen=True)
class BlackBoxSecondOrder:
    """Second-order connection known only through evaluation."""

    func: Callable[[SecondOrderTriv, FiberTangent], FiberTangent]
    charts: Sequence[Chart]

    def __call__(self, point: SecondOrderTriv, tangent: FiberTangent) -> FiberTangent:
        return self.func(point, tangent)


@dataclass(frozen=True)
class _ReducedBilinear(ChartBilinear):
    """B(x; h, dx) = -(h block of C2 at (x, h, 0) along (dx, 0, 0))."""

    connection: BlackBoxSecondOrder
    chart: str
    kind = "reduced"

    def __call__(
        self, x: npt.ArrayLike, u: npt.ArrayLike, v: npt.ArrayLike
    ) -> FloatArray:
        xs, us, vs = _arr(x), _arr(u), _arr(v)
        zero = np.zeros_like(us)
        point = SecondOrderTriv(xs, us, zero, self.chart)
        return -self.connection(point, (vs, zero, zero))[1]


def induce_second_order_connection(C: ConnectionSplitting) -> SecondOrderConnection:
    """Transport a connection on TM to T^2 M through the trivialization."""
    return SecondOrderConnection(C.bilinear)


def reduce_to_first_order_connection(
    C2: SecondOrderConnection | BlackBoxSecondOrder,
    samples: int = DEFAULT_SAMPLES,
    rng: np.random.Generator | None = None,
    tol: float | None = None,
) -> ConnectionSplitting:
    """Recover the connection on TM from a connection on T^2 M.

    Evaluation-only connections are sampled and rejected unless they fix
    vertical vectors, annihilate the base direction and are induced by the
    recovered B.
    """
    if isinstance(C2, SecondOrderConnection):
        return ConnectionSplitting(C2.bilinear)
    rng = rng or np.random.default_rng()
    tol = DEFAULT_TOLERANCES["splitting"] if tol is None else tol
    reduced = BilinearCoeffs({c.name: _ReducedBilinear(C2, c.name) for c in C2.charts})
    induced = SecondOrderConnection(reduced)
    worst = {"vertical": 0.0, "image": 0.0, "match": 0.0}
    for chart in C2.charts:
        for x in sample_points(chart, samples, rng):
            n = x.size
            h, k, dx, dh, dk = (rng.standard_normal(n) for _ in range(5))
            point = SecondOrderTriv(x, h, k, chart.name)
            fixed = C2(point, (np.zeros(n), dh, dk))
            worst["vertical"] = max(
                worst["vertical"],
                _norm(fixed[0]),
                _norm(fixed[1] - dh),
                _norm(fixed[2] - dk),
            )
            image = C2(point, (dx, dh, dk))
            worst["image"] = max(worst["image"], _norm(image[0]))
            expected = induced(point, (dx, dh, dk))
            scale = 1.0 + max(_norm(e) for e in expected)
            worst["match"] = max(
                worst["match"],
                max(_norm(a - b) for a, b in zip(image, expected, strict=True)) / scale,
            )
    failing = {key: value for key, value in worst.items() if not value <= tol}
    if failing:
        raise SplittingRejectedError(
            "second-order connection is not induced by a connection on TM", failing
        )
    return ConnectionSplitting(reduced)


# =============================================================================
# Checks
# =============================================================================


def check_trivialization(
    B: BilinearCoeffs,
    chart: Chart,
    samples: int = DEFAULT_SAMPLES,
    rng: np.random.Generator | None = None,
    tol: float | None = None,
) -> list[CheckRecord]:
    """Round trips of lambda and Upsilon, and their agreement on symmetric vectors."""
    rng = rng or np.random.default_rng()
    tol = DEFAULT_TOLERANCES["roundtrip"] if tol is None else tol
    name = chart.name
    roundtrip, ups, symmetric = [], [], []
    for x in sample_points(chart, samples, rng):
        a, b = rng.standard_normal(x.size), rng.standard_normal(x.size)
        p = SecondOrderPoint(x, a, b, name)
        back = untrivialize(B, trivialize(B, p))
        roundtrip.append(_norm(back.b - p.b) / (1.0 + _norm(p.b)))

        xi = DoubleTangentVector.random(rng, x, name)
        again = upsilon_inverse(B, *upsilon(B, xi), chart=name)
        ups.append(again.distance(xi) / (1.0 + _norm(xi.w)))

        sym = DoubleTangentVector(x, a, a, b, name)
        symmetric.append(_norm(upsilon(B, sym)[3] - trivialize(B, p).k))
    return [
        CheckRecord.from_residuals(f"second-order.trivialize-roundtrip[{name}]", roundtrip, tol),
        CheckRecord.from_residuals(f"second-order.upsilon-roundtrip[{name}]", ups, tol),
        CheckRecord.from_residuals(
            f"second-order.upsilon-symmetric[{name}]", symmetric, DEFAULT_TOLERANCES["exact"]
        ),
    ]


def check_jet_pushforward(
    B_src: BilinearCoeffs,
    B_dst: BilinearCoeffs,
    mu: Transition,
    samples: int = DEFAULT_SAMPLES,
    rng: np.random.Generator | None = None,
    tol: float | None = None,
) -> CheckRecord:
    """Compare second_order_map with trivialize o T^2 mu on raw 2-jets."""
    rng = rng or np.random.default_rng()
    tol = DEFAULT_TOLERANCES["linearity"] if tol is None else tol
    residuals = []
    for x in overlap_points(mu, samples, rng):
        p = SecondOrderPoint(
            x, rng.standard_normal(x.size), rng.standard_normal(x.size), mu.source.name
        )
        expected = trivialize(B_dst, jet_pushforward(mu, p))
        got = second_order_map(B_src, B_dst, mu, p)
        residuals.append(got.distance(expected) / (1.0 + _norm(expected.k)))
    return CheckRecord.from_residuals(
        f"second-order.jet-pushforward[{mu.label}]", residuals, tol
    )


def check_induced_connection(
    C: ConnectionSplitting,
    chart: Chart,
    samples: int = INDUCED_SAMPLES,
    rng: np.random.Generator | None = None,
    tol: float | None = None,
) -> list[CheckRecord]:
    """Splitting identity of the induced connection and both reduction round trips."""
    rng = rng or np.random.default_rng()
    tol = DEFAULT_TOLERANCES["induced"] if tol is None else tol
    name = chart.name
    induced = induce_second_order_connection(C)
    vertical, exact, sampled = [], [], []
    reduced = reduce_to_first_order_connection(induced)
    black_box = BlackBoxSecondOrder(induced, [chart])
    recovered = reduce_to_first_order_connection(black_box, samples, rng)
    for x in sample_points(chart, samples, rng):
        n = x.size
        h, k, dh, dk, u, v = (rng.standard_normal(n) for _ in range(6))
        out = induced(SecondOrderTriv(x, h, k, name), (np.zeros(n), dh, dk))
        vertical.append(max(_norm(out[0]), _norm(out[1] - dh), _norm(out[2] - dk)))
        source = C.bilinear(name, x, u, v)
        exact.append(_norm(reduced.bilinear(name, x, u, v) - source))
        sampled.append(_norm(recovered.bilinear(name, x, u, v) - source))
    return [
        CheckRecord.from_residuals(f"second-order.induced-splitting[{name}]", vertical, tol),
        CheckRecord.from_residuals(f"second-order.induce-reduce[{name}]", exact, tol),
        CheckRecord.from_residuals(
            f"second-order.induce-reduce-sampled[{name}]", sampled, tol
        ),
    ]

