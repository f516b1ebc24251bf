"""Sprays, connection maps and second-order tangent bundles on charted manifolds.

Manifolds are loaded from YAML definitions (see ``docs/CONFIGURATION.md``) and
checked by the verification suites in :mod:`spraygeom.suite`.
"""

from __future__ import annotations

from .exceptions import ConfigurationError, SprayGeomError
from .manifold import ManifoldDef, load_manifold
from .report import CheckRecord, Report
from .suite import async_run_suite, run_suite, truncation_stability

__version__ = "0.1.0"

__all__ = [
    "CheckRecord",
    "ConfigurationError",
    "ManifoldDef",
    "Report",
    "SprayGeomError",
    "async_run_suite",
    "load_manifold",
    "run_suite",
    "truncation_stability",
]
