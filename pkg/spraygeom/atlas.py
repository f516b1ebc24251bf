"""Charts, transitions, tangent and double-tangent lifts, atlas checks."""

from __future__ import annotations

import logging
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field

import numpy as np
import numpy.typing as npt

from .const import DEFAULT_BOX, DEFAULT_TOLERANCES, MAX_REJECTION_FACTOR
from .exceptions import (
    ConfigurationError,
    DiagnosticError,
    DomainError,
    EvaluationError,
    UnresolvedReferenceError,
)
from .expressions import ExprMap, coordinate_names
from .jets import dir_derivative, fd_oracle, jacobian, jet_eval
from .report import CheckRecord
from .space import ModelSpace

_LOGGER = logging.getLogger(__name__)

FloatArray = npt.NDArray[np.float64]


def _max_norm(values: FloatArray) -> float:
    return float(np.max(np.abs(values))) if values.size else 0.0


# =============================================================================
# Types
# =============================================================================


@dataclass(frozen=True)
class Chart:
    """Coordinate chart; a point lies in the chart iff every predicate output is > 0."""

    name: str
    space: ModelSpace
    domain: ExprMap
    box: tuple[tuple[float, float], ...] = ()

    def __post_init__(self) -> None:
        """Check arities and default the sampling box."""
        if self.domain.arity_in != self.dimension:
            raise ConfigurationError(
                f"chart '{self.name}': domain predicate takes "
                f"{self.domain.arity_in} inputs, chart dimension is {self.dimension}"
            )
        box = self.box or (DEFAULT_BOX,) * self.dimension
        if len(box) != self.dimension:
            raise ConfigurationError(
                f"chart '{self.name}': sampling box has {len(box)} intervals"
            )
        object.__setattr__(self, "box", tuple((float(a), float(b)) for a, b in box))

    @classmethod
    def whole(cls, name: str, space: ModelSpace, box: float = 1.0) -> Chart:
        """Chart covering the entire model space."""
        n = space.dimension
        return cls(
            name,
            space,
            ExprMap.parse("1", coordinate_names("x", n)),
            ((-box, box),) * n,
        )

    @property
    def dimension(self) -> int:
        """Return the chart dimension."""
        return self.space.dimension

    def margin(self, x: npt.ArrayLike) -> float:
        """Return the smallest predicate value at ``x`` (-inf if undefined)."""
        try:
            values = self.domain(x)
        except EvaluationError:
            return float("-inf")
        if not np.all(np.isfinite(values)):
            return float("-inf")
        return float(np.min(values))

    def contains(self, x: npt.ArrayLike) -> bool:
        """Return True when ``x`` lies in the chart domain."""
        return self.margin(x) > 0.0

    def restricted(self, predicate: ExprMap) -> Chart:
        """Return the same chart with an extra domain predicate."""
        return Chart(self.name, self.space, self.domain.stacked(predicate), self.box)


@dataclass(frozen=True)
class Transition:
    """Change of coordinates ``phi`` from ``source`` to ``target``."""

    source: Chart
    target: Chart
    map: ExprMap
    inverse: ExprMap | None = None

    def __post_init__(self) -> None:
        """Check the map arities against both charts."""
        n, m = self.source.dimension, self.target.dimension
        if self.map.arity_in != n or self.map.arity_out != m:
            raise ConfigurationError(
                f"transition {self.label}: map is {self.map.arity_in}->"
                f"{self.map.arity_out}, charts are {n}->{m}"
            )
        if self.inverse is not None and (
            self.inverse.arity_in != m or self.inverse.arity_out != n
        ):
            raise ConfigurationError(f"transition {self.label}: inverse has wrong arity")

    @classmethod
    def identity(cls, chart: Chart) -> Transition:
        """Identity transition of a chart onto itself."""
        ident = ExprMap.identity(coordinate_names("x", chart.dimension))
        return cls(chart, chart, ident, ident)

    @property
    def label(self) -> str:
        """Return ``source->target``."""
        return f"{self.source.name}->{self.target.name}"

    def apply(self, x: npt.ArrayLike) -> FloatArray:
        """Return phi(x)."""
        return self.map(x)

    def apply_inverse(self, y: npt.ArrayLike) -> FloatArray:
        """Return phi^-1(y)."""
        if self.inverse is None:
            raise DomainError(f"transition {self.label} has no inverse")
        return self.inverse(y)

    def reversed(self) -> Transition:
        """Return the inverse transition."""
        if self.inverse is None:
            raise ConfigurationError(f"transition {self.label} has no inverse")
        return Transition(self.target, self.source, self.inverse, self.map)

    def then(self, other: Transition) -> Transition:
        """Return ``other`` after ``self`` as one transition."""
        inverse = None
        if self.inverse is not None and other.inverse is not None:
            inverse = self.inverse.compose(other.inverse)
        return Transition(self.source, other.target, other.map.compose(self.map), inverse)

    def in_overlap(self, x: npt.ArrayLike) -> bool:
        """Return True when ``x`` lies in the source domain and phi(x) in the target domain.

        Round trips through the inverse are not tested here; the atlas checks
        measure them.
        """
        if not self.source.contains(x):
            return False
        try:
            return self.target.contains(self.apply(x))
        except EvaluationError:
            return False


@dataclass(eq=False)
class DoubleTangentVector:
    """Element of T(TM) in the (x, u, v, w) convention.

    ``(x, u)`` is the foot in TM, ``(x, v)`` the image under the tangent of the
    projection and ``w`` the second fiber component.
    """

    x: FloatArray
    u: FloatArray
    v: FloatArray
    w: FloatArray
    chart: str | None = field(default=None)

    def __post_init__(self) -> None:
        """Convert blocks to arrays and check equal dimensions."""
        self.x, self.u, self.v, self.w = (
            np.atleast_1d(np.asarray(b, dtype=np.float64))
            for b in (self.x, self.u, self.v, self.w)
        )
        sizes = {b.size for b in (self.x, self.u, self.v, self.w)}
        if len(sizes) != 1:
            raise DomainError(f"double tangent blocks differ in size: {sorted(sizes)}")

    @property
    def dimension(self) -> int:
        """Return the common block dimension."""
        return int(self.x.size)

    @property
    def is_vertical(self) -> bool:
        """True iff the v-block vanishes."""
        return not np.any(self.v)

    @property
    def is_symmetric(self) -> bool:
        """True iff u equals v."""
        return bool(np.array_equal(self.u, self.v))

    def blocks(self) -> tuple[FloatArray, FloatArray, FloatArray, FloatArray]:
        """Return (x, u, v, w)."""
        return self.x, self.u, self.v, self.w

    def distance(self, other: DoubleTangentVector) -> float:
        """Max absolute difference over all four blocks."""
        return max(
            _max_norm(a - b)
            for a, b in zip(self.blocks(), other.blocks(), strict=True)
        )

    @classmethod
    def random(
        cls,
        rng: np.random.Generator,
        x: FloatArray,
        chart: str | None = None,
        scale: float = 1.0,
    ) -> DoubleTangentVector:
        """Draw normal u, v, w at ``x``."""
        n = x.size
        u, v, w = (scale * rng.standard_normal(n) for _ in range(3))
        return cls(x, u, v, w, chart)


@dataclass(frozen=True)
class Atlas:
    """Charts and the transitions declared between them."""

    charts: dict[str, Chart]
    transitions: dict[tuple[str, str], Transition] = field(default_factory=dict)

    def chart(self, name: str) -> Chart:
        """Return the chart called ``name``."""
        try:
            return self.charts[name]
        except KeyError as err:
            raise UnresolvedReferenceError(f"unknown chart '{name}'") from err

    def transition(self, source: str, target: str) -> Transition:
        """Return the transition from ``source`` to ``target``."""
        try:
            return self.transitions[(source, target)]
        except KeyError as err:
            raise UnresolvedReferenceError(
                f"no transition from '{source}' to '{target}'"
            ) from err

    def outgoing(self, source: str) -> list[Transition]:
        """Return the transitions leaving ``source``."""
        return [t for (s, _), t in self.transitions.items() if s == source]

    @property
    def first_chart(self) -> Chart:
        """Return the first declared chart."""
        return next(iter(self.charts.values()))


# =============================================================================
# Sampling
# =============================================================================


def sample_points(
    chart: Chart,
    count: int,
    rng: np.random.Generator,
    predicate: Transition | None = None,
) -> list[FloatArray]:
    """Rejection-sample points of the chart's box inside its domain.

    With a transition, points must also lie in its overlap.
    """
    low = np.array([a for a, _ in chart.box])
    high = np.array([b for _, b in chart.box])
    points: list[FloatArray] = []
    draws = 0
    while len(points) < count and draws < count * MAX_REJECTION_FACTOR:
        draws += 1
        x = rng.uniform(low, high)
        accepted = predicate.in_overlap(x) if predicate else chart.contains(x)
        if accepted:
            points.append(x)
    if len(points) < count:
        _LOGGER.debug(
            "Chart %s: accepted %d of %d requested samples after %d draws",
            chart.name,
            len(points),
            count,
            draws,
        )
    return points


def overlap_points(
    t: Transition, count: int, rng: np.random.Generator
) -> list[FloatArray]:
    """Sample the overlap of a transition; raise if it is empty."""
    points = sample_points(t.source, count, rng, t)
    if not points:
        raise DiagnosticError(f"transition {t.label}: no sample lies in the overlap")
    return points


# =============================================================================
# Lifts
# =============================================================================


def tangent_lift(
    t: Transition, x: npt.ArrayLike, v: npt.ArrayLike
) -> tuple[FloatArray, FloatArray]:
    """Return (phi(x), Dphi(x) v)."""
    if not t.source.contains(x):
        raise DomainError(f"point {np.asarray(x)} is outside chart '{t.source.name}'")
    value, first, _ = jet_eval(t.map, x, v)
    return value, first


def double_tangent_lift(t: Transition, xi: DoubleTangentVector) -> DoubleTangentVector:
    """Return TT(phi) applied to ``xi``.

    (x, u, v, w) -> (phi(x), Dphi u, Dphi v, D^2 phi(u, v) + Dphi w)
    """
    if not t.source.contains(xi.x):
        raise DomainError(f"point {xi.x} is outside chart '{t.source.name}'")
    y, du, qu = jet_eval(t.map, xi.x, xi.u)
    _, dv, qv = jet_eval(t.map, xi.x, xi.v)
    _, _, quv = jet_eval(t.map, xi.x, xi.u + xi.v)
    dw = dir_derivative(t.map, xi.x, xi.w)
    second = 0.5 * (quv - (qu + qv))
    return DoubleTangentVector(y, du, dv, second + dw, t.target.name)


# =============================================================================
# Checks
# =============================================================================


def _paired_map(t: Transition, z: FloatArray) -> FloatArray:
    """(x, v) -> (psi(x) v, psi(x)^-1 v) with psi the derivative of phi."""
    n = t.source.dimension
    x, v = z[:n], z[n:]
    forward = dir_derivative(t.map, x, v)
    if t.inverse is None:
        return forward
    backward = dir_derivative(t.inverse, t.apply(x), v)
    return np.concatenate([forward, backward])


def _paired_derivative(t: Transition, z: FloatArray, dz: FloatArray) -> FloatArray:
    """Jet derivative of the paired map along ``dz``."""
    n = t.source.dimension
    x, v = z[:n], z[n:]
    dx, dv = dz[:n], dz[n:]
    # d/ds Dphi(x + s dx)(v + s dv) = D^2 phi(x)(dx, v) + Dphi(x) dv
    _, dphi_dx, q_dx = jet_eval(t.map, x, dx)
    q_v = jet_eval(t.map, x, v)[2]
    q_sum = jet_eval(t.map, x, dx + v)[2]
    forward = 0.5 * (q_sum - (q_dx + q_v)) + dir_derivative(t.map, x, dv)
    if t.inverse is None:
        return forward
    y = t.apply(x)
    dy = dphi_dx
    q_dy = jet_eval(t.inverse, y, dy)[2]
    q_w = jet_eval(t.inverse, y, v)[2]
    q_both = jet_eval(t.inverse, y, dy + v)[2]
    backward = 0.5 * (q_both - (q_dy + q_w)) + dir_derivative(t.inverse, y, dv)
    return np.concatenate([forward, backward])


def check_transition_regularity(
    t: Transition,
    samples: int,
    tol: float | None = None,
    rng: np.random.Generator | None = None,
) -> CheckRecord:
    """Compare jet and finite-difference derivatives of the paired fiber map."""
    if samples < 1:
        raise DomainError("samples must be >= 1")
    tol = DEFAULT_TOLERANCES["regularity"] if tol is None else tol
    rng = rng or np.random.default_rng()
    residuals: list[float] = []
    for x in overlap_points(t, samples, rng):
        n = x.size
        z = np.concatenate([x, rng.standard_normal(n)])
        dz = rng.standard_normal(2 * n)
        jet = _paired_derivative(t, z, dz)
        fd = fd_oracle(lambda p: _paired_map(t, p), z, dz, order=1)
        residuals.append(_max_norm(jet - fd) / (1.0 + _max_norm(fd)))
    return CheckRecord.from_residuals(
        f"atlas.regularity[{t.label}]", residuals, tol
    )


def _find_return(
    transitions: Sequence[Transition], t: Transition
) -> Transition | None:
    for other in transitions:
        if other.source.name == t.target.name and other.target.name == t.source.name:
            return other
    return None


def cocycle_check(
    transitions: Iterable[Transition],
    samples: int,
    rng: np.random.Generator | None = None,
    tol: float | None = None,
) -> CheckRecord:
    """Check phi_VU(phi_UV(x)) = x around every closed loop U -> V -> U."""
    transitions = list(transitions)
    tol = DEFAULT_TOLERANCES["cocycle"] if tol is None else tol
    rng = rng or np.random.default_rng()
    residuals: list[float] = []
    for t in transitions:
        back = _find_return(transitions, t)
        if back is None:
            raise ConfigurationError(
                f"transition {t.label} has no return transition "
                f"{t.target.name}->{t.source.name}"
            )
        for x in overlap_points(t, samples, rng):
            try:
                loop = back.apply(t.apply(x))
            except EvaluationError as err:
                _LOGGER.debug("Cocycle loop %s at %s failed: %s", t.label, x, err)
                residuals.append(float("nan"))
                continue
            residuals.append(_max_norm(loop - x) / (1.0 + _max_norm(x)))
    return CheckRecord.from_residuals(
        "atlas.cocycle",
        residuals,
        tol,
        detail=f"{len(transitions)} transition(s)" if transitions else "single chart",
    )


def check_inverse_pair(
    t: Transition,
    samples: int,
    rng: np.random.Generator | None = None,
    tol: float | None = None,
) -> CheckRecord:
    """Check inverse(map(x)) = x and map(inverse(y)) = y on the sampled overlap."""
    if t.inverse is None:
        raise ConfigurationError(f"transition {t.label} declares no inverse")
    tol = DEFAULT_TOLERANCES["cocycle"] if tol is None else tol
    rng = rng or np.random.default_rng()
    residuals = []
    for x in overlap_points(t, samples, rng):
        y = t.apply(x)
        try:
            back = t.apply_inverse(y)
            again = t.apply(back)
        except EvaluationError as err:
            _LOGGER.debug("Inverse of %s at %s failed: %s", t.label, y, err)
            residuals.append(float("nan"))
            continue
        residuals.append(
            max(
                _max_norm(back - x) / (1.0 + _max_norm(x)),
                _max_norm(again - y) / (1.0 + _max_norm(y)),
            )
        )
    return CheckRecord.from_residuals(f"atlas.inverse-pair[{t.label}]", residuals, tol)


def transition_jacobian(t: Transition, x: npt.ArrayLike) -> FloatArray:
    """Return Dphi(x) as a matrix."""
    return jacobian(t.map, x)
