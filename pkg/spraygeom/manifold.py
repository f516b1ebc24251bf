"""Manifold definition files: YAML loading, schema validation and resolution."""

from __future__ import annotations

import logging
import os
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import voluptuous as vol
import yaml

from .atlas import Atlas, Chart, Transition
from .connection import ScalarFunction, VectorField
from .const import (
    CATALOG_ENV,
    CATALOG_SUFFIX,
    DEFAULT_SEED,
    DEFAULT_STEP,
    DEFAULT_T1,
    SEMINORM_SUP,
    SEMINORMS,
    SPRAY_KINDS,
)
from .exceptions import (
    ConfigurationError,
    DimensionMismatchError,
    ManifoldParseError,
    SprayGeomError,
    UnresolvedReferenceError,
)
from .expressions import ExprMap, coordinate_names
from .space import ModelSpace
from .spray import (
    BilinearCoeffs,
    BilinearSpray,
    ChartBilinear,
    ChartSpray,
    ChristoffelBilinear,
    ExpressionBilinear,
    ExpressionSpray,
    PolarizedBilinear,
    PushforwardSpray,
    SprayField,
)

_LOGGER = logging.getLogger(__name__)

CONF_NAME = "name"
CONF_DESCRIPTION = "description"
CONF_SPACE = "space"
CONF_GRADES = "grades"
CONF_SEMINORM = "seminorm"
CONF_LEVEL = "level"
CONF_CHARTS = "charts"
CONF_DOMAIN = "domain"
CONF_BOX = "box"
CONF_DIM = "dim"
CONF_TRANSITIONS = "transitions"
CONF_FROM = "from"
CONF_TO = "to"
CONF_MAP = "map"
CONF_INVERSE = "inverse"
CONF_SPRAY = "spray"
CONF_S2 = "S2"
CONF_B = "B"
CONF_METRIC = "metric"
CONF_FIELDS = "fields"
CONF_VECTOR = "vector"
CONF_SCALAR = "scalar"
CONF_MU = "mu"
CONF_GEODESIC = "geodesic"
CONF_CHART = "chart"
CONF_X0 = "x0"
CONF_V0 = "v0"
CONF_T1 = "t1"
CONF_STEP = "step"
CONF_EXACT = "exact"
CONF_SWITCH_T1 = "switch_t1"
CONF_SEED = "seed"
CONF_EACH = "each"
CONF_DIAGONAL = "diagonal"

SPRAY_GROUP = "spray kind"

# =============================================================================
# Schema
# =============================================================================

_TEXT = vol.Any(str, vol.All(vol.Any(int, float), vol.Coerce(str)))
_VECTOR = vol.Any(_TEXT, [_TEXT], {vol.Required(CONF_EACH): str})
_MATRIX = vol.Any(str, [[_TEXT]], {vol.Required(CONF_DIAGONAL): _VECTOR})
_NUMBERS = [vol.Coerce(float)]
_PAIR = vol.All([vol.Coerce(float)], vol.Length(min=2, max=2))
_BOX = vol.Any(_PAIR, [_PAIR])

CHART_SCHEMA = vol.Schema(
    {
        vol.Optional(CONF_DOMAIN, default="1"): vol.Any(_TEXT, [_TEXT]),
        vol.Optional(CONF_BOX): _BOX,
        vol.Optional(CONF_DIM): vol.All(vol.Coerce(int), vol.Range(min=1)),
    }
)

TRANSITION_SCHEMA = vol.Schema(
    {
        vol.Required(CONF_FROM): str,
        vol.Required(CONF_TO): str,
        vol.Required(CONF_MAP): _VECTOR,
        vol.Optional(CONF_INVERSE): _VECTOR,
    }
)

MANIFOLD_SCHEMA = vol.Schema(
    {
        vol.Optional(CONF_NAME): str,
        vol.Optional(CONF_DESCRIPTION, default=""): str,
        vol.Required(CONF_SPACE): {
            vol.Required(CONF_GRADES): vol.All(
                [vol.All(vol.Coerce(int), vol.Range(min=1))], vol.Length(min=1)
            ),
            vol.Optional(CONF_SEMINORM, default=SEMINORM_SUP): vol.In(SEMINORMS),
        },
        vol.Optional(CONF_LEVEL): vol.All(vol.Coerce(int), vol.Range(min=1)),
        vol.Required(CONF_CHARTS): vol.All({str: vol.Any(None, CHART_SCHEMA)}, vol.Length(min=1)),
        vol.Optional(CONF_TRANSITIONS, default=list): [TRANSITION_SCHEMA],
        vol.Required(CONF_SPRAY): {
            vol.Exclusive(CONF_S2, SPRAY_GROUP): {str: _VECTOR},
            vol.Exclusive(CONF_B, SPRAY_GROUP): {str: _VECTOR},
            vol.Exclusive(CONF_METRIC, SPRAY_GROUP): {str: _MATRIX},
        },
        vol.Optional(CONF_FIELDS, default=dict): {
            vol.Optional(CONF_VECTOR, default=dict): {str: {str: _VECTOR}},
            vol.Optional(CONF_SCALAR, default=dict): {str: {str: _TEXT}},
        },
        vol.Optional(CONF_MU): {
            vol.Required(CONF_FROM): str,
            vol.Required(CONF_TO): str,
            vol.Required(CONF_MAP): _VECTOR,
            vol.Required(CONF_INVERSE): _VECTOR,
            vol.Optional(CONF_DOMAIN): vol.Any(_TEXT, [_TEXT]),
        },
        vol.Optional(CONF_GEODESIC, default=dict): {
            vol.Optional(CONF_CHART): str,
            vol.Optional(CONF_X0): _NUMBERS,
            vol.Optional(CONF_V0): _NUMBERS,
            vol.Optional(CONF_T1, default=DEFAULT_T1): vol.All(
                vol.Coerce(float), vol.Range(min=0.0)
            ),
            vol.Optional(CONF_STEP, default=DEFAULT_STEP): vol.All(
                vol.Coerce(float), vol.Range(min=0.0, min_included=False)
            ),
            vol.Optional(CONF_EXACT): [_TEXT],
            vol.Optional(CONF_SWITCH_T1): vol.All(vol.Coerce(float), vol.Range(min=0.0)),
        },
        vol.Optional(CONF_SEED, default=DEFAULT_SEED): vol.Coerce(int),
        vol.Optional(CONF_BOX): _BOX,
    }
)


# =============================================================================
# Definition
# =============================================================================


@dataclass(frozen=True)
class GeodesicDefaults:
    """Default initial data for geodesic commands and checks."""

    chart: str
    x0: tuple[float, ...]
    v0: tuple[float, ...]
    t1: float = DEFAULT_T1
    step: float = DEFAULT_STEP
    exact: ExprMap | None = None
    switch_t1: float | None = None


@dataclass
class ManifoldDef:
    """Resolved manifold: atlas, spray, bilinear map, fields and defaults."""

    name: str
    space: ModelSpace
    atlas: Atlas
    spray: SprayField
    bilinear: BilinearCoeffs
    spray_kind: str
    metric: dict[str, ExprMap] | None
    vector_fields: dict[str, VectorField]
    scalar_functions: dict[str, ScalarFunction]
    mu: Transition
    geodesic: GeodesicDefaults
    seed: int = DEFAULT_SEED
    description: str = ""
    path: Path | None = None
    raw: dict[str, Any] = field(default_factory=dict, repr=False)

    @property
    def charts(self) -> list[Chart]:
        """Return the charts in declaration order."""
        return list(self.atlas.charts.values())

    @property
    def transitions(self) -> list[Transition]:
        """Return the declared transitions."""
        return list(self.atlas.transitions.values())

    def at_level(self, level: int) -> ManifoldDef:
        """Rebuild the definition truncated at grade ``level``."""
        return build_manifold(self.raw, self.name, self.path, level=level)


# =============================================================================
# Resolution helpers
# =============================================================================


def _expand(entry: Any, space: ModelSpace) -> list[str] | str:
    """Expand ``{each: template}`` over the coordinates of the active level."""
    if isinstance(entry, Mapping):
        template = entry[CONF_EACH]
        return [
            template.replace("{i}", str(i)).replace("{g}", str(space.grade_of(i)))
            for i in range(space.dimension)
        ]
    return entry  # type: ignore[no-any-return]


def _vector_map(
    entry: Any, inputs: Sequence[str], n: int, space: ModelSpace, where: str
) -> ExprMap:
    expanded = _expand(entry, space)
    if isinstance(expanded, list):
        result = ExprMap.from_strings(expanded, inputs, where=where)
    else:
        result = ExprMap.parse(expanded, inputs, where=where)
    if result.arity_out != n:
        raise DimensionMismatchError(
            f"{where} has {result.arity_out} component(s), expected {n}"
        )
    return result


def _metric_map(
    entry: Any, inputs: Sequence[str], n: int, space: ModelSpace, where: str
) -> ExprMap:
    if isinstance(entry, Mapping):
        diagonal = _expand(entry[CONF_DIAGONAL], space)
        items = diagonal if isinstance(diagonal, list) else [diagonal] * n
        if len(items) != n:
            raise DimensionMismatchError(f"{where} diagonal has {len(items)} entries, expected {n}")
        texts = [items[i] if i == j else "0" for i in range(n) for j in range(n)]
        return ExprMap.from_strings(texts, inputs, where=where)
    if isinstance(entry, list):
        if len(entry) != n or any(len(row) != n for row in entry):
            raise DimensionMismatchError(f"{where} must be a {n}x{n} matrix")
        return ExprMap.from_strings([t for row in entry for t in row], inputs, where=where)
    result = ExprMap.parse_matrix(entry, inputs, where=where)
    if result.arity_out != n * n:
        raise DimensionMismatchError(f"{where} must be a {n}x{n} matrix")
    return result


def _predicate(entry: Any, inputs: Sequence[str], where: str) -> ExprMap:
    if isinstance(entry, list):
        return ExprMap.from_strings(entry, inputs, where=where)
    return ExprMap.parse(entry, inputs, where=where)


def _box(entry: Any, n: int, where: str) -> tuple[tuple[float, float], ...]:
    if entry is None:
        return ()
    if entry and not isinstance(entry[0], list):
        entry = [entry] * n
    if len(entry) != n:
        raise DimensionMismatchError(f"{where} box has {len(entry)} intervals, expected {n}")
    return tuple((float(a), float(b)) for a, b in entry)


def _vector(
    values: Sequence[float] | None,
    n: int,
    default: float,
    where: str,
    full: int | None = None,
) -> tuple[float, ...]:
    """Read a coordinate vector; a full-grade vector is cut to the first ``n``."""
    if values is None:
        return tuple([default] * n)
    if full is not None and len(values) == full > n:
        values = values[:n]
    if len(values) != n:
        raise DimensionMismatchError(f"{where} has {len(values)} entries, expected {n}")
    return tuple(float(v) for v in values)


def _chart_ref(charts: Mapping[str, Chart], name: str, where: str) -> Chart:
    try:
        return charts[name]
    except KeyError as err:
        raise UnresolvedReferenceError(f"{where} references unknown chart '{name}'") from err


def _default_fields(
    chart: Chart,
) -> tuple[dict[str, VectorField], dict[str, ScalarFunction]]:
    """Polynomial fields on the first chart when a file declares none."""
    n = chart.dimension
    names = coordinate_names("x", n)
    x_texts = [f"1 + x{i}^2" for i in range(n)]
    y_texts = [f"x{(i + 1) % n} - x{i}^3" for i in range(n)]
    fields = {
        "X": VectorField("X", {chart.name: ExprMap.from_strings(x_texts, names)}),
        "Y": VectorField("Y", {chart.name: ExprMap.from_strings(y_texts, names)}),
    }
    scalar = ScalarFunction("f", {chart.name: ExprMap.parse("1 + x0^2", names)})
    return fields, {"f": scalar}


def _build_spray(
    config: Mapping[str, Any],
    charts: Mapping[str, Chart],
    transitions: Sequence[Transition],
    space: ModelSpace,
) -> tuple[SprayField, BilinearCoeffs, str, dict[str, ExprMap] | None]:
    kinds = [k for k in SPRAY_KINDS if k in config]
    if len(kinds) != 1:
        raise ConfigurationError("spray must declare exactly one of S2, B or metric")
    kind = kinds[0]
    n = space.dimension
    xs = coordinate_names("x", n)
    components: dict[str, ChartSpray] = {}
    maps: dict[str, ChartBilinear] = {}
    metric: dict[str, ExprMap] = {}
    for chart_name, entry in config[kind].items():
        _chart_ref(charts, chart_name, f"spray.{kind}")
        where = f"spray.{kind}.{chart_name}"
        if kind == CONF_S2:
            expr = _vector_map(entry, xs + coordinate_names("v", n), n, space, where)
            components[chart_name] = ExpressionSpray(expr)
            maps[chart_name] = PolarizedBilinear(components[chart_name])
            continue
        if kind == CONF_B:
            inputs = xs + coordinate_names("u", n) + coordinate_names("v", n)
            maps[chart_name] = ExpressionBilinear(_vector_map(entry, inputs, n, space, where))
        else:
            metric[chart_name] = _metric_map(entry, xs, n, space, where)
            maps[chart_name] = ChristoffelBilinear(metric[chart_name])
        components[chart_name] = BilinearSpray(maps[chart_name])

    # fill charts without a declaration by transporting along transitions
    pending = [name for name in charts if name not in components]
    while pending:
        progress = False
        for t in transitions:
            target = t.target.name
            if target in pending and t.source.name in components and t.inverse is not None:
                components[target] = PushforwardSpray(components[t.source.name], t)
                maps[target] = PolarizedBilinear(components[target])
                pending.remove(target)
                progress = True
                _LOGGER.debug("Spray on chart %s filled by pushforward along %s", target, t.label)
        if not progress:
            raise UnresolvedReferenceError(
                f"no spray for chart(s) {', '.join(pending)} and no transition to fill them"
            )
    return (
        SprayField(components),
        BilinearCoeffs(maps),
        kind,
        metric if kind == CONF_METRIC else None,
    )


def _build_fields(
    config: Mapping[str, Any],
    charts: Mapping[str, Chart],
    space: ModelSpace,
) -> tuple[dict[str, VectorField], dict[str, ScalarFunction]]:
    n = space.dimension
    xs = coordinate_names("x", n)
    vectors: dict[str, VectorField] = {}
    for field_name, table in config.get(CONF_VECTOR, {}).items():
        reps = {}
        for chart_name, entry in table.items():
            _chart_ref(charts, chart_name, f"fields.vector.{field_name}")
            reps[chart_name] = _vector_map(
                entry, xs, n, space, f"fields.vector.{field_name}.{chart_name}"
            )
        vectors[field_name] = VectorField(field_name, reps)
    scalars: dict[str, ScalarFunction] = {}
    for func_name, table in config.get(CONF_SCALAR, {}).items():
        reps = {}
        for chart_name, text in table.items():
            _chart_ref(charts, chart_name, f"fields.scalar.{func_name}")
            expr = ExprMap.parse(text, xs, where=f"fields.scalar.{func_name}.{chart_name}")
            if expr.arity_out != 1:
                raise DimensionMismatchError(f"scalar function '{func_name}' must be scalar")
            reps[chart_name] = expr
        scalars[func_name] = ScalarFunction(func_name, reps)
    return vectors, scalars


# =============================================================================
# Entry points
# =============================================================================


def build_manifold(
    raw: Mapping[str, Any],
    name: str,
    path: Path | None = None,
    *,
    level: int | None = None,
) -> ManifoldDef:
    """Validate a parsed document and resolve every cross-reference."""
    try:
        config = MANIFOLD_SCHEMA(dict(raw))
    except vol.Invalid as err:
        raise ConfigurationError(f"manifold '{name}': {err}") from err

    space = ModelSpace(
        tuple(config[CONF_SPACE][CONF_GRADES]),
        level or config.get(CONF_LEVEL, 0),
        config[CONF_SPACE][CONF_SEMINORM],
    )
    n = space.dimension
    xs = coordinate_names("x", n)

    charts: dict[str, Chart] = {}
    for chart_name, chart_conf in config[CONF_CHARTS].items():
        chart_conf = CHART_SCHEMA(chart_conf or {})
        if CONF_DIM in chart_conf and chart_conf[CONF_DIM] != n:
            raise DimensionMismatchError(
                f"chart '{chart_name}' declares dim {chart_conf[CONF_DIM]}, space has {n}"
            )
        where = f"charts.{chart_name}"
        charts[chart_name] = Chart(
            chart_name,
            space,
            _predicate(_expand(chart_conf[CONF_DOMAIN], space), xs, f"{where}.domain"),
            _box(chart_conf.get(CONF_BOX, config.get(CONF_BOX)), n, where),
        )

    transitions: dict[tuple[str, str], Transition] = {}
    for index, t_conf in enumerate(config[CONF_TRANSITIONS]):
        where = f"transitions[{index}]"
        source = _chart_ref(charts, t_conf[CONF_FROM], where)
        target = _chart_ref(charts, t_conf[CONF_TO], where)
        inverse = None
        if CONF_INVERSE in t_conf:
            inverse = _vector_map(t_conf[CONF_INVERSE], xs, n, space, f"{where}.inverse")
        transitions[(source.name, target.name)] = Transition(
            source, target, _vector_map(t_conf[CONF_MAP], xs, n, space, f"{where}.map"), inverse
        )
    atlas = Atlas(charts, transitions)

    spray, bilinear, kind, metric = _build_spray(
        config[CONF_SPRAY], charts, list(transitions.values()), space
    )
    vectors, scalars = _build_fields(config.get(CONF_FIELDS, {}), charts, space)
    if not vectors:
        vectors, defaults = _default_fields(atlas.first_chart)
        scalars = scalars or defaults
    elif not scalars:
        scalars = _default_fields(atlas.first_chart)[1]

    if CONF_MU in config:
        mu_conf = config[CONF_MU]
        source = _chart_ref(charts, mu_conf[CONF_FROM], "mu")
        if CONF_DOMAIN in mu_conf:
            source = source.restricted(_predicate(mu_conf[CONF_DOMAIN], xs, "mu.domain"))
        mu = Transition(
            source,
            _chart_ref(charts, mu_conf[CONF_TO], "mu"),
            _vector_map(mu_conf[CONF_MAP], xs, n, space, "mu.map"),
            _vector_map(mu_conf[CONF_INVERSE], xs, n, space, "mu.inverse"),
        )
    elif transitions:
        mu = next(iter(transitions.values()))
    else:
        mu = Transition.identity(atlas.first_chart)

    geo = config.get(CONF_GEODESIC, {})
    geo_chart = _chart_ref(charts, geo.get(CONF_CHART, atlas.first_chart.name), "geodesic").name
    exact = None
    if CONF_EXACT in geo:
        exact = _vector_map(geo[CONF_EXACT], ("t",), n, space, "geodesic.exact")
    v0_default = (1.0,) + (0.0,) * (n - 1)
    top = space.dimension_at(space.levels)
    geodesic = GeodesicDefaults(
        geo_chart,
        _vector(geo.get(CONF_X0), n, 0.0, "geodesic.x0", top),
        (
            _vector(geo.get(CONF_V0), n, 0.0, "geodesic.v0", top)
            if CONF_V0 in geo
            else v0_default
        ),
        geo.get(CONF_T1, DEFAULT_T1),
        geo.get(CONF_STEP, DEFAULT_STEP),
        exact,
        geo.get(CONF_SWITCH_T1),
    )

    _LOGGER.debug(
        "Loaded manifold %s: %d chart(s), %d transition(s), spray kind %s, level %d",
        name,
        len(charts),
        len(transitions),
        kind,
        space.active_level,
    )
    return ManifoldDef(
        name=config.get(CONF_NAME, name),
        space=space,
        atlas=atlas,
        spray=spray,
        bilinear=bilinear,
        spray_kind=kind,
        metric=metric,
        vector_fields=vectors,
        scalar_functions=scalars,
        mu=mu,
        geodesic=geodesic,
        seed=config[CONF_SEED],
        description=config[CONF_DESCRIPTION],
        path=path,
        raw=dict(raw),
    )


def catalog_dir() -> Path:
    """Return the catalog directory, honoring the environment override."""
    override = os.environ.get(CATALOG_ENV)
    if override:
        return Path(override)
    return Path(__file__).parent / "catalog"


def catalog_names() -> list[str]:
    """Return the manifold names available in the catalog."""
    return sorted(p.stem for p in catalog_dir().glob(f"*{CATALOG_SUFFIX}"))


def resolve_path(name_or_path: str | Path) -> Path:
    """Map a catalog name or a file path to a file path."""
    candidate = Path(name_or_path)
    if candidate.suffix == CATALOG_SUFFIX or candidate.exists():
        return candidate
    return catalog_dir() / f"{name_or_path}{CATALOG_SUFFIX}"


def load_manifold(name_or_path: str | Path, *, level: int | None = None) -> ManifoldDef:
    """Load a manifold from the catalog or from a file."""
    path = resolve_path(name_or_path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as err:
        raise ConfigurationError(f"cannot read manifold '{name_or_path}': {err}") from err
    try:
        raw = yaml.safe_load(text)
    except yaml.MarkedYAMLError as err:
        mark = err.problem_mark
        raise ManifoldParseError(
            f"{path.name}: {err.problem}",
            mark.line + 1 if mark else None,
            mark.column + 1 if mark else None,
        ) from err
    except yaml.YAMLError as err:
        raise ManifoldParseError(f"{path.name}: {err}") from err
    if not isinstance(raw, dict):
        raise ConfigurationError(f"{path.name}: top level must be a mapping")
    try:
        return build_manifold(raw, path.stem, path, level=level)
    except ConfigurationError:
        raise
    except SprayGeomError as err:
        raise ConfigurationError(f"{path.name}: {err}") from err
