"""Tests for second-order jets and the finite-difference oracle."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spraygeom.exceptions import DomainError, EvaluationError
from spraygeom.expressions import ExprMap, coordinate_names
from spraygeom.jets import (
    Jet2,
    dir_derivative,
    fd_oracle,
    hessian,
    jacobian,
    jet_eval,
    pure_second,
    second_dir_derivative,
)
from spraygeom.space import ModelSpace, Vector

XS = coordinate_names("x", 2)
small = st.floats(min_value=-1.0, max_value=1.0, allow_nan=False)


@pytest.mark.unit
class TestJet2:
    """Test jet arithmetic against hand-derived Taylor coefficients."""

    def test_product_rule(self):
        """Test (t + 1)(2t + 3) has derivatives 5 and 4 at t = 0."""
        a = Jet2(1.0, 1.0)
        b = Jet2(3.0, 2.0)
        product = a * b
        assert (product.val, product.d1, product.d2) == (3.0, 5.0, 4.0)

    def test_quotient(self):
        """Test 1 / (1 + t) has derivatives -1 and 2 at t = 0."""
        q = 1.0 / Jet2(1.0, 1.0)
        assert (q.val, q.d1, q.d2) == pytest.approx((1.0, -1.0, 2.0))

    def test_division_by_zero(self):
        """Test division by a zero-valued jet."""
        with pytest.raises(ZeroDivisionError):
            _ = Jet2(1.0) / Jet2(0.0, 1.0)

    @pytest.mark.parametrize("n", [-2, 0, 1, 2, 5])
    def test_integer_power(self, n):
        """Test (2 + t)^n against the power rule."""
        p = Jet2(2.0, 1.0) ** n
        assert p.val == pytest.approx(2.0**n)
        assert p.d1 == pytest.approx(n * 2.0 ** (n - 1))
        assert p.d2 == pytest.approx(n * (n - 1) * 2.0 ** (n - 2))

    def test_non_integer_power(self):
        """Test fractional exponents are rejected."""
        with pytest.raises(TypeError):
            _ = Jet2(2.0, 1.0) ** 0.5

    @pytest.mark.parametrize(
        "name,f,f1,f2",
        [
            ("exp", math.exp, math.exp, math.exp),
            ("sin", math.sin, math.cos, lambda x: -math.sin(x)),
            ("cos", math.cos, lambda x: -math.sin(x), lambda x: -math.cos(x)),
            ("sqrt", math.sqrt, lambda x: 0.5 / math.sqrt(x), lambda x: -0.25 * x**-1.5),
            ("log", math.log, lambda x: 1 / x, lambda x: -1 / x**2),
        ],
    )
    def test_functions(self, name, f, f1, f2):
        """Test each function jet along the identity direction."""
        x = 0.7
        jet = getattr(Jet2(x, 1.0), name)()
        assert jet.val == pytest.approx(f(x))
        assert jet.d1 == pytest.approx(f1(x))
        assert jet.d2 == pytest.approx(f2(x))

    @pytest.mark.parametrize("name", ["sqrt", "log"])
    def test_non_positive_domain(self, name):
        """Test sqrt and log refuse non-positive values."""
        with pytest.raises(ValueError):
            getattr(Jet2(0.0, 1.0), name)()


@pytest.mark.unit
class TestDirectionalDerivatives:
    """Test derivative helpers on expression maps."""

    def test_dir_derivative_and_pure_second(self):
        """Test f = x0^2 x1 along h = (1, 2) at (1, 3)."""
        f = ExprMap.parse("x0^2 * x1", XS)
        x, h = np.array([1.0, 3.0]), np.array([1.0, 2.0])
        # f(x + t h) = (1 + t)^2 (3 + 2t)
        np.testing.assert_allclose(dir_derivative(f, x, h), [8.0])
        np.testing.assert_allclose(pure_second(f, x, h), [14.0])

    def test_second_dir_derivative_symmetric(self):
        """Test mixed second derivatives are bitwise symmetric."""
        f = ExprMap.parse("sin(x0) * exp(x1) + x0^3 * x1", XS)
        x = np.array([0.3, -0.2])
        a, b = np.array([0.7, -1.1]), np.array([2.3, 0.4])
        assert np.array_equal(
            second_dir_derivative(f, x, a, b), second_dir_derivative(f, x, b, a)
        )

    def test_accepts_vectors(self):
        """Test model-space vectors are accepted as points."""
        space = ModelSpace((2,))
        f = ExprMap.parse("x0 * x1", XS)
        value, first, _ = jet_eval(f, Vector.of([2.0, 3.0], space), [1.0, 0.0])
        np.testing.assert_allclose(value, [6.0])
        np.testing.assert_allclose(first, [3.0])

    def test_shape_mismatch(self):
        """Test point and direction sizes must match the map."""
        f = ExprMap.parse("x0", XS)
        with pytest.raises(DomainError):
            jet_eval(f, [1.0], [1.0])

    def test_non_differentiable_point(self):
        """Test sqrt at zero surfaces as EvaluationError."""
        f = ExprMap.parse("sqrt(x0)", XS[:1])
        with pytest.raises(EvaluationError):
            dir_derivative(f, [0.0], [1.0])

    def test_jacobian_and_hessian(self):
        """Test the full derivative matrices of a polynomial map."""
        f = ExprMap.from_strings(["x0 * x1", "x0^2"], XS)
        x = np.array([2.0, 3.0])
        np.testing.assert_allclose(jacobian(f, x), [[3.0, 2.0], [4.0, 0.0]])
        np.testing.assert_allclose(
            hessian(f, x), [[[0.0, 1.0], [1.0, 0.0]], [[2.0, 0.0], [0.0, 0.0]]]
        )


@pytest.mark.unit
class TestFiniteDifferenceOracle:
    """Test the central-difference oracle."""

    @pytest.mark.parametrize("order,eps", [(3, None), (1, 1e-9), (2, 1e-2)])
    def test_invalid_arguments(self, order, eps):
        """Test order and eps validation."""
        f = ExprMap.parse("x0", XS[:1])
        with pytest.raises(DomainError):
            fd_oracle(f, [0.0], [1.0], order, eps)

    def test_accepts_callables(self):
        """Test plain callables can be differentiated."""
        result = fd_oracle(lambda z: z**2, np.array([3.0]), np.array([1.0]))
        np.testing.assert_allclose(result, [6.0], rtol=1e-8)

    @settings(max_examples=50, deadline=None)
    @given(small, small, small, small)
    def test_jets_match_oracle(self, x0, x1, h0, h1):
        """Test jets agree with finite differences on an analytic map."""
        f = ExprMap.from_strings(
            ["sin(x0) * x1^2 + exp(x0 * x1)", "cos(x1) / (2 + x0^2)"], XS
        )
        x, h = np.array([x0, x1]), np.array([h0, h1])
        first = dir_derivative(f, x, h)
        second = pure_second(f, x, h)
        np.testing.assert_allclose(first, fd_oracle(f, x, h, 1), atol=1e-7)
        np.testing.assert_allclose(second, fd_oracle(f, x, h, 2), atol=1e-5)
