"""Graded model spaces, vectors, seminorms and truncation projections."""

from __future__ import annotations

import math
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field, replace

import numpy as np
import numpy.typing as npt

from .const import SEMINORM_SUP, SEMINORM_WEIGHTED, SEMINORMS
from .exceptions import DomainError

FloatArray = npt.NDArray[np.float64]


@dataclass(frozen=True)
class ModelSpace:
    """Graded coordinate space standing in for a Frechet model space.

    ``grades`` are cumulative coordinate counts, so the space truncated at
    level ``k`` has ``grades[k - 1]`` coordinates.
    """

    grades: tuple[int, ...]
    active_level: int = 0
    seminorm_kind: str = SEMINORM_SUP
    _grade_index: tuple[int, ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        """Validate the grading and default the active level to the top."""
        grades = tuple(int(d) for d in self.grades)
        if not grades or grades[0] < 1:
            raise DomainError(f"grades must start at >= 1, got {list(grades)}")
        if any(b < a for a, b in zip(grades, grades[1:], strict=False)):
            raise DomainError(f"grades must be non-decreasing, got {list(grades)}")
        if self.seminorm_kind not in SEMINORMS:
            raise DomainError(f"unknown seminorm kind '{self.seminorm_kind}'")
        object.__setattr__(self, "grades", grades)
        level = self.active_level or len(grades)
        if not 1 <= level <= len(grades):
            raise DomainError(f"active level {level} outside [1, {len(grades)}]")
        object.__setattr__(self, "active_level", level)

        index: list[int] = []
        previous = 0
        for grade, count in enumerate(grades, start=1):
            index.extend([grade] * (count - previous))
            previous = count
        object.__setattr__(self, "_grade_index", tuple(index))

    @property
    def levels(self) -> int:
        """Return the number of grades."""
        return len(self.grades)

    @property
    def dimension(self) -> int:
        """Return the coordinate count at the active level."""
        return self.grades[self.active_level - 1]

    def dimension_at(self, level: int) -> int:
        """Return the coordinate count at ``level``."""
        self._check_level(level)
        return self.grades[level - 1]

    def grade_of(self, index: int) -> int:
        """Return the 1-based grade a coordinate belongs to."""
        return self._grade_index[index]

    def at_level(self, level: int) -> ModelSpace:
        """Return the same grading truncated at ``level``."""
        self._check_level(level)
        return replace(self, active_level=level)

    def _check_level(self, level: int) -> None:
        if not 1 <= level <= len(self.grades):
            raise DomainError(f"level {level} outside [1, {len(self.grades)}]")


@dataclass(frozen=True)
class Vector:
    """Coordinates of a point or tangent vector in a model space."""

    coords: tuple[float, ...]
    space: ModelSpace

    def __post_init__(self) -> None:
        """Check length and finiteness."""
        coords = tuple(float(c) for c in self.coords)
        if len(coords) != self.space.dimension:
            raise DomainError(
                f"expected {self.space.dimension} coordinates, got {len(coords)}"
            )
        if not all(math.isfinite(c) for c in coords):
            raise DomainError("vector coordinates must be finite")
        object.__setattr__(self, "coords", coords)

    @classmethod
    def of(cls, values: Iterable[float], space: ModelSpace) -> Vector:
        """Build a vector from any iterable of numbers."""
        return cls(tuple(float(v) for v in values), space)

    @property
    def array(self) -> FloatArray:
        """Return the coordinates as a numpy array."""
        return np.asarray(self.coords, dtype=np.float64)

    def __add__(self, other: Vector) -> Vector:
        """Add two vectors of the same space."""
        if other.space != self.space:
            raise DomainError("cannot add vectors of different spaces")
        return Vector.of(self.array + other.array, self.space)

    def __rmul__(self, scalar: float) -> Vector:
        """Scale by a real number."""
        return Vector.of(float(scalar) * self.array, self.space)

    def __len__(self) -> int:
        """Return the dimension."""
        return len(self.coords)


def seminorm(space: ModelSpace, x: Vector, level: int) -> float:
    """Return the level-``level`` seminorm of ``x``."""
    if not 1 <= level <= space.active_level:
        raise DomainError(f"level {level} outside [1, {space.active_level}]")
    count = space.grades[level - 1]
    values = np.abs(x.array[:count])
    if space.seminorm_kind == SEMINORM_WEIGHTED:
        weights = np.asarray([space.grade_of(i) for i in range(count)], dtype=float)
        values = weights * values
    return float(values.max()) if count else 0.0


def project(x: Vector, from_level: int, to_level: int) -> Vector:
    """Truncate ``x`` from ``from_level`` to the first ``d_to_level`` coordinates."""
    space = x.space
    if to_level > from_level:
        raise DomainError(f"cannot project up from level {from_level} to {to_level}")
    if from_level != space.active_level:
        raise DomainError(
            f"vector lives at level {space.active_level}, not {from_level}"
        )
    target = space.at_level(to_level)
    return Vector(x.coords[: target.dimension], target)


def truncate(values: Sequence[float] | FloatArray, count: int) -> FloatArray:
    """Return the first ``count`` entries of a raw coordinate array."""
    return np.asarray(values, dtype=np.float64)[:count]
