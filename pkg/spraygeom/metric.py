"""Riemannian metrics: Christoffel symbols by jets and by finite differences."""

from __future__ import annotations

import math

import numpy as np
import numpy.typing as npt

from .const import CHRISTOFFEL_EPS
from .exceptions import ConfigurationError
from .expressions import ExprMap
from .jets import dir_derivative

FloatArray = npt.NDArray[np.float64]


def metric_size(g: ExprMap) -> int:
    """Return n for a metric map with n*n outputs."""
    n = math.isqrt(g.arity_out)
    if n * n != g.arity_out or n != g.arity_in:
        raise ConfigurationError(
            f"metric needs {g.arity_in}x{g.arity_in} entries, got {g.arity_out}"
        )
    return n


def _symmetric(matrix: FloatArray) -> FloatArray:
    return 0.5 * (matrix + np.swapaxes(matrix, -1, -2))


def metric_matrix(g: ExprMap, x: npt.ArrayLike) -> FloatArray:
    """Return the symmetrized metric matrix at ``x``."""
    n = metric_size(g)
    return _symmetric(g(x).reshape(n, n))


def _christoffel(metric: FloatArray, dg: FloatArray, inverse: bool) -> FloatArray:
    """Gamma[k, i, j] from g and dg[l, i, j] = d_l g_ij."""
    # t[l, i, j] = d_i g_jl + d_j g_il - d_l g_ij
    t = np.transpose(dg, (2, 0, 1)) + np.transpose(dg, (2, 1, 0)) - dg
    n = metric.shape[0]
    if inverse:
        return 0.5 * np.einsum("kl,lij->kij", np.linalg.inv(metric), t)
    return 0.5 * np.linalg.solve(metric, t.reshape(n, n * n)).reshape(n, n, n)


def christoffel_jet(g: ExprMap, x: npt.ArrayLike) -> FloatArray:
    """Christoffel symbols of the second kind from jet derivatives of ``g``."""
    n = metric_size(g)
    xs = np.asarray(x, dtype=np.float64)
    dg = np.stack(
        [_symmetric(dir_derivative(g, xs, e).reshape(n, n)) for e in np.eye(n)]
    )
    return _christoffel(metric_matrix(g, xs), dg, inverse=False)


def christoffel_fd(
    g: ExprMap, x: npt.ArrayLike, eps: float = CHRISTOFFEL_EPS
) -> FloatArray:
    """Christoffel symbols from central differences and an explicit inverse."""
    n = metric_size(g)
    xs = np.asarray(x, dtype=np.float64)
    dg = np.stack(
        [
            (metric_matrix(g, xs + eps * e) - metric_matrix(g, xs - eps * e)) / (2 * eps)
            for e in np.eye(n)
        ]
    )
    return _christoffel(metric_matrix(g, xs), dg, inverse=True)


def energy(g: ExprMap, x: npt.ArrayLike, v: npt.ArrayLike) -> float:
    """Return g_x(v, v)."""
    vs = np.asarray(v, dtype=np.float64)
    return float(vs @ metric_matrix(g, x) @ vs)
