"""Check records and verification reports."""

from __future__ import annotations

import json
import math
from collections.abc import Iterable
from dataclasses import dataclass, field
from datetime import datetime
from datetime import timezone as _tz
from typing import Any

UTC = _tz.utc


def _finite_max(values: list[float]) -> float:
    if not values:
        return 0.0
    if any(math.isnan(v) for v in values):
        return math.nan
    return max(values)


@dataclass
class CheckRecord:
    """Outcome of one named check."""

    check_id: str
    samples: int
    max_residual: float
    tolerance: float
    passed: bool
    skipped: int = 0
    detail: str = ""
    error: str | None = None

    @classmethod
    def from_residuals(
        cls,
        check_id: str,
        residuals: Iterable[float],
        tolerance: float,
        *,
        skipped: int = 0,
        detail: str = "",
    ) -> CheckRecord:
        """Pass iff every residual is at most ``tolerance``."""
        values = [float(r) for r in residuals]
        worst = _finite_max(values)
        return cls(
            check_id=check_id,
            samples=len(values),
            max_residual=worst,
            tolerance=tolerance,
            passed=not math.isnan(worst) and worst <= tolerance,
            skipped=skipped,
            detail=detail,
        )

    @classmethod
    def witness(
        cls,
        check_id: str,
        residuals: Iterable[float],
        threshold: float,
        *,
        detail: str = "",
    ) -> CheckRecord:
        """Pass iff some residual reaches ``threshold`` (negative controls)."""
        values = [float(r) for r in residuals]
        worst = _finite_max(values)
        return cls(
            check_id=check_id,
            samples=len(values),
            max_residual=worst,
            tolerance=threshold,
            passed=not math.isnan(worst) and worst >= threshold,
            detail=detail or "witness: residual must reach the tolerance",
        )

    @classmethod
    def failure(cls, check_id: str, error: BaseException, tolerance: float = 0.0) -> CheckRecord:
        """Record a check that raised instead of producing residuals."""
        return cls(
            check_id=check_id,
            samples=0,
            max_residual=math.nan,
            tolerance=tolerance,
            passed=False,
            error=f"{type(error).__name__}: {error}",
        )

    def to_dict(self) -> dict[str, Any]:
        """Convert to a JSON-friendly dictionary with a stable key order."""
        return {
            "check_id": self.check_id,
            "passed": self.passed,
            "samples": self.samples,
            "skipped": self.skipped,
            "max_residual": None if math.isnan(self.max_residual) else self.max_residual,
            "tolerance": self.tolerance,
            "detail": self.detail,
            "error": self.error,
        }


@dataclass
class Report:
    """Records of one suite run on one manifold."""

    suite: str
    manifold: str
    records: list[CheckRecord]
    environment: dict[str, Any] = field(default_factory=dict)
    timestamp: str = field(default_factory=lambda: datetime.now(UTC).isoformat())

    @property
    def passed(self) -> bool:
        """Overall pass iff every record passes."""
        return all(r.passed for r in self.records)

    @property
    def first_failure(self) -> CheckRecord | None:
        """Return the first failing record in report order."""
        return next((r for r in self.records if not r.passed), None)

    def to_dict(self, *, include_timestamp: bool = True) -> dict[str, Any]:
        """Convert to a dictionary; key order is fixed."""
        data: dict[str, Any] = {
            "suite": self.suite,
            "manifold": self.manifold,
            "passed": self.passed,
            "environment": self.environment,
            "records": [r.to_dict() for r in self.records],
        }
        if include_timestamp:
            data["timestamp"] = self.timestamp
        return data

    def to_json(self, *, include_timestamp: bool = True) -> str:
        """Serialize to indented JSON."""
        return json.dumps(self.to_dict(include_timestamp=include_timestamp), indent=2)

    def summary_lines(self) -> list[str]:
        """Return one human-readable line per record plus a verdict."""
        lines = []
        for r in self.records:
            status = "PASS" if r.passed else "FAIL"
            residual = "error" if r.error else f"{r.max_residual:.3e}"
            lines.append(
                f"{status}  {r.check_id:<48} {residual:>10} / {r.tolerance:.1e}"
                f"  (n={r.samples})"
            )
            if r.error:
                lines.append(f"      {r.error}")
        verdict = "PASSED" if self.passed else "FAILED"
        lines.append(
            f"{self.suite} on {self.manifold}: {verdict} "
            f"({sum(r.passed for r in self.records)}/{len(self.records)} checks)"
        )
        return lines
