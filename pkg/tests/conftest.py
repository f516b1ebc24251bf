"""Pytest configuration for spraygeom tests.

Shared fixtures and configuration for all tests.
"""

from __future__ import annotations

import os
import textwrap
from pathlib import Path

import numpy as np
import pytest

from spraygeom.atlas import Atlas, Chart, Transition
from spraygeom.const import CATALOG_ENV
from spraygeom.expressions import ExprMap, coordinate_names
from spraygeom.manifold import ManifoldDef, load_manifold
from spraygeom.space import ModelSpace
from spraygeom.spray import BilinearCoeffs, ExpressionSpray, PolarizedBilinear, SprayField

# Test directory paths (for reference, not for sys.path manipulation)
TEST_DIR = os.path.dirname(os.path.abspath(__file__))
ROOT_DIR = os.path.dirname(TEST_DIR)

XS2 = coordinate_names("x", 2)
"""Coordinate names of the plane"""


# ===========================================================================
# Auto-use fixtures
# ===========================================================================


@pytest.fixture(autouse=True)
def default_catalog(monkeypatch):
    """Run every test against the shipped catalog."""
    monkeypatch.delenv(CATALOG_ENV, raising=False)
    yield


# ===========================================================================
# Sampling fixtures
# ===========================================================================


@pytest.fixture
def rng():
    """Seeded generator for deterministic samples."""
    return np.random.default_rng(1234)


# ===========================================================================
# Chart fixtures
# ===========================================================================


@pytest.fixture
def plane_space():
    """Two-dimensional model space with a single grade."""
    return ModelSpace((2,))


@pytest.fixture
def plane_chart(plane_space):
    """The whole plane as one chart."""
    return Chart.whole("plane", plane_space)


@pytest.fixture
def line_chart():
    """The real line as one chart sampled in [-1, 1]."""
    return Chart.whole("line", ModelSpace((1,)))


@pytest.fixture
def inversion_charts(plane_space):
    """North and south stereographic charts joined by the inversion x / |x|^2."""
    domain = ExprMap.parse("4 - (x0^2 + x1^2)", XS2)
    box = ((-1.5, 1.5), (-1.5, 1.5))
    north = Chart("north", plane_space, domain, box)
    south = Chart("south", plane_space, domain, box)
    inversion = ExprMap.from_strings(
        ["x0 / (x0^2 + x1^2)", "x1 / (x0^2 + x1^2)"], XS2
    )
    forward = Transition(north, south, inversion, inversion)
    return Atlas(
        {"north": north, "south": south},
        {("north", "south"): forward, ("south", "north"): forward.reversed()},
    )


# ===========================================================================
# Spray fixtures
# ===========================================================================


def spray_from_strings(chart: str, texts: list[str]) -> tuple[SprayField, BilinearCoeffs]:
    """Return the spray and polarized bilinear map of an S2 expression."""
    n = len(texts)
    inputs = coordinate_names("x", n) + coordinate_names("v", n)
    component = ExpressionSpray(ExprMap.from_strings(texts, inputs))
    return (
        SprayField({chart: component}),
        BilinearCoeffs({chart: PolarizedBilinear(component)}),
    )


@pytest.fixture
def curved_plane():
    """A non-metric quadratic spray on the plane with x-dependent coefficients."""
    return spray_from_strings(
        "plane", ["x1 * v0^2 - v0 * v1", "(1 + x0^2) * v1^2 + 2 * v0 * v1"]
    )


@pytest.fixture
def flat_plane():
    """S2 = 0 on the plane."""
    return spray_from_strings("plane", ["0", "0"])


# ===========================================================================
# Catalog fixtures
# ===========================================================================


@pytest.fixture(scope="session")
def flat2() -> ManifoldDef:
    """Catalog manifold flat2."""
    return load_manifold("flat2")


@pytest.fixture(scope="session")
def sphere2() -> ManifoldDef:
    """Catalog manifold sphere2."""
    return load_manifold("sphere2")


@pytest.fixture(scope="session")
def hyperbolic2() -> ManifoldDef:
    """Catalog manifold hyperbolic2."""
    return load_manifold("hyperbolic2")


@pytest.fixture(scope="session")
def poly1() -> ManifoldDef:
    """Catalog manifold poly1."""
    return load_manifold("poly1")


@pytest.fixture(scope="session")
def loop8() -> ManifoldDef:
    """Catalog manifold loop8."""
    return load_manifold("loop8")


@pytest.fixture
def write_manifold(tmp_path):
    """Write a YAML manifold definition and return its path."""

    def _write(text: str, name: str = "custom") -> Path:
        path = tmp_path / f"{name}.yaml"
        path.write_text(textwrap.dedent(text), encoding="utf-8")
        return path

    return _write
