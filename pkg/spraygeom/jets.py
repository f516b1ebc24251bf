"""Second-order jets, directional derivatives and the finite-difference oracle."""

from __future__ import annotations

import math
from collections.abc import Callable
from typing import Union

import numpy as np
import numpy.typing as npt

from .const import FD_EPS_FIRST, FD_EPS_MAX, FD_EPS_MIN, FD_EPS_SECOND
from .exceptions import DomainError
from .expressions import ExprMap
from .space import Vector

FloatArray = npt.NDArray[np.float64]
Number = Union[int, float]
Evaluable = Union[ExprMap, Callable[[FloatArray], FloatArray]]


class Jet2:
    """Value with first and second derivative along one fixed direction."""

    __slots__ = ("val", "d1", "d2")

    def __init__(self, val: float, d1: float = 0.0, d2: float = 0.0) -> None:
        """Initialize the truncated Taylor coefficients."""
        self.val = float(val)
        self.d1 = float(d1)
        self.d2 = float(d2)

    @staticmethod
    def _coerce(other: Jet2 | Number) -> Jet2:
        return other if isinstance(other, Jet2) else Jet2(other)

    # ---------- arithmetic ----------

    def __add__(self, other: Jet2 | Number) -> Jet2:
        o = Jet2._coerce(other)
        return Jet2(self.val + o.val, self.d1 + o.d1, self.d2 + o.d2)

    __radd__ = __add__

    def __sub__(self, other: Jet2 | Number) -> Jet2:
        o = Jet2._coerce(other)
        return Jet2(self.val - o.val, self.d1 - o.d1, self.d2 - o.d2)

    def __rsub__(self, other: Jet2 | Number) -> Jet2:
        return Jet2._coerce(other) - self

    def __mul__(self, other: Jet2 | Number) -> Jet2:
        o = Jet2._coerce(other)
        return Jet2(
            self.val * o.val,
            self.d1 * o.val + self.val * o.d1,
            self.d2 * o.val + 2.0 * self.d1 * o.d1 + self.val * o.d2,
        )

    __rmul__ = __mul__

    def __truediv__(self, other: Jet2 | Number) -> Jet2:
        o = Jet2._coerce(other)
        if o.val == 0.0:
            raise ZeroDivisionError("jet division by zero")
        q = self.val / o.val
        q1 = (self.d1 - q * o.d1) / o.val
        q2 = (self.d2 - 2.0 * q1 * o.d1 - q * o.d2) / o.val
        return Jet2(q, q1, q2)

    def __rtruediv__(self, other: Jet2 | Number) -> Jet2:
        return Jet2._coerce(other) / self

    def __neg__(self) -> Jet2:
        return Jet2(-self.val, -self.d1, -self.d2)

    def __pos__(self) -> Jet2:
        return self

    def __pow__(self, n: int) -> Jet2:
        if not isinstance(n, int):
            raise TypeError("jets support integer exponents only")
        if n < 0:
            return 1.0 / (self**-n)
        if n == 0:
            return Jet2(1.0)
        if n == 1:
            return Jet2(self.val, self.d1, self.d2)
        p2 = self.val ** (n - 2)
        p1 = p2 * self.val
        return Jet2(
            p1 * self.val,
            n * p1 * self.d1,
            n * (n - 1) * p2 * self.d1 * self.d1 + n * p1 * self.d2,
        )

    # ---------- functions ----------

    def exp(self) -> Jet2:
        e = math.exp(self.val)
        return Jet2(e, e * self.d1, e * (self.d2 + self.d1 * self.d1))

    def sin(self) -> Jet2:
        s, c = math.sin(self.val), math.cos(self.val)
        return Jet2(s, c * self.d1, c * self.d2 - s * self.d1 * self.d1)

    def cos(self) -> Jet2:
        s, c = math.sin(self.val), math.cos(self.val)
        return Jet2(c, -s * self.d1, -s * self.d2 - c * self.d1 * self.d1)

    def sqrt(self) -> Jet2:
        if self.val <= 0.0:
            raise ValueError("sqrt is not differentiable at non-positive values")
        r = math.sqrt(self.val)
        return Jet2(
            r,
            self.d1 / (2.0 * r),
            self.d2 / (2.0 * r) - self.d1 * self.d1 / (4.0 * r * self.val),
        )

    def log(self) -> Jet2:
        """Natural logarithm; defined for positive values only."""
        if self.val <= 0.0:
            raise ValueError("log is not defined at non-positive values")
        return Jet2(
            math.log(self.val),
            self.d1 / self.val,
            self.d2 / self.val - (self.d1 / self.val) ** 2,
        )

    def __repr__(self) -> str:
        return f"Jet2(val={self.val!r}, d1={self.d1!r}, d2={self.d2!r})"


def _as_array(values: npt.ArrayLike) -> FloatArray:
    if isinstance(values, Vector):
        values = values.array
    return np.atleast_1d(np.asarray(values, dtype=np.float64))


def jet_eval(
    f: ExprMap, x: npt.ArrayLike, h: npt.ArrayLike
) -> tuple[FloatArray, FloatArray, FloatArray]:
    """Evaluate ``t -> f(x + t h)`` as jets; return value, first and second."""
    xs, hs = _as_array(x), _as_array(h)
    if xs.shape != hs.shape or xs.size != f.arity_in:
        raise DomainError(
            f"point and direction must have {f.arity_in} entries, "
            f"got {xs.size} and {hs.size}"
        )
    out = f.evaluate([Jet2(a, b) for a, b in zip(xs, hs, strict=True)])
    jets = [o if isinstance(o, Jet2) else Jet2(o) for o in out]
    return (
        np.array([j.val for j in jets]),
        np.array([j.d1 for j in jets]),
        np.array([j.d2 for j in jets]),
    )


def dir_derivative(f: ExprMap, x: npt.ArrayLike, h: npt.ArrayLike) -> FloatArray:
    """Return Df(x)(h)."""
    return jet_eval(f, x, h)[1]


def pure_second(f: ExprMap, x: npt.ArrayLike, h: npt.ArrayLike) -> FloatArray:
    """Return D^2 f(x)(h, h)."""
    return jet_eval(f, x, h)[2]


def second_dir_derivative(
    f: ExprMap, x: npt.ArrayLike, h1: npt.ArrayLike, h2: npt.ArrayLike
) -> FloatArray:
    """Return D^2 f(x)(h1, h2) by polarization of the pure second jet.

    The sum ``Q(h1) + Q(h2)`` is formed before subtracting so the result is
    bitwise symmetric in ``h1`` and ``h2``.
    """
    a, b = _as_array(h1), _as_array(h2)
    q_sum = pure_second(f, x, a + b)
    q_parts = pure_second(f, x, a) + pure_second(f, x, b)
    return 0.5 * (q_sum - q_parts)


def _call(f: Evaluable, x: FloatArray) -> FloatArray:
    if isinstance(f, ExprMap):
        return f(x)
    return np.asarray(f(x), dtype=np.float64)


def fd_oracle(
    f: Evaluable,
    x: npt.ArrayLike,
    h: npt.ArrayLike,
    order: int = 1,
    eps: float | None = None,
) -> FloatArray:
    """Central finite difference of order 1 or 2 along ``h``."""
    if order not in (1, 2):
        raise DomainError(f"finite-difference order must be 1 or 2, got {order}")
    if eps is None:
        eps = FD_EPS_FIRST if order == 1 else FD_EPS_SECOND
    if not FD_EPS_MIN <= eps <= FD_EPS_MAX:
        raise DomainError(f"eps {eps} outside [{FD_EPS_MIN}, {FD_EPS_MAX}]")
    xs, hs = _as_array(x), _as_array(h)
    plus = _call(f, xs + eps * hs)
    minus = _call(f, xs - eps * hs)
    if order == 1:
        return (plus - minus) / (2.0 * eps)
    return (plus - 2.0 * _call(f, xs) + minus) / (eps * eps)


def jacobian(f: ExprMap, x: npt.ArrayLike) -> FloatArray:
    """Return the matrix of first partial derivatives, shape (out, in)."""
    xs = _as_array(x)
    basis = np.eye(xs.size)
    return np.column_stack([dir_derivative(f, xs, e) for e in basis])


def hessian(f: ExprMap, x: npt.ArrayLike) -> FloatArray:
    """Return second partials, shape (out, in, in), symmetric in the last two."""
    xs = _as_array(x)
    n = xs.size
    basis = np.eye(n)
    diagonal = [pure_second(f, xs, e) for e in basis]
    result = np.zeros((f.arity_out, n, n))
    for i in range(n):
        result[:, i, i] = diagonal[i]
        for j in range(i + 1, n):
            mixed = 0.5 * (
                pure_second(f, xs, basis[i] + basis[j]) - (diagonal[i] + diagonal[j])
            )
            result[:, i, j] = mixed
            result[:, j, i] = mixed
    return result
