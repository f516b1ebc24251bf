"""Command-line entry point: verify, derive, geodesic, conjugate, truncation."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from collections.abc import Sequence
from pathlib import Path

import numpy as np

from .atlas import DoubleTangentVector, Transition
from .connection import ConnectionMap, ConnectionSplitting, connection_map_apply, projectors
from .const import (
    DEFAULT_SAMPLES,
    DOMAIN,
    EXIT_CHECK_FAILED,
    EXIT_CONFIG_ERROR,
    EXIT_OK,
    METHOD_RK4,
    METHODS,
    SPRAY_BASE,
    SPRAY_NAMES,
    SPRAY_PUSHFORWARD,
    SUITE_ALL,
    SUITES,
)
from .exceptions import (
    ConfigurationError,
    DomainError,
    EvaluationError,
    IntegrationError,
    SprayGeomError,
)
from .expressions import ExprMap, coordinate_names
from .geodesic import GeodesicIntegrator
from .manifold import ManifoldDef, catalog_names, load_manifold
from .report import Report
from .second_order import check_conjugacy, check_jet_pushforward, check_T2mu_linearity
from .suite import conjugate_pair, entry_rng, merged_tolerances, run_suite, truncation_stability

_LOGGER = logging.getLogger(__name__)

LOG_FORMAT = "%(asctime)s - %(levelname)s - %(message)s"


# =============================================================================
# Argument types
# =============================================================================


def _coords(text: str) -> list[float]:
    """Parse ``"0.1,0.2"`` (commas or whitespace) into floats."""
    try:
        return [float(part) for part in text.replace(",", " ").split()]
    except ValueError as err:
        raise argparse.ArgumentTypeError(f"invalid coordinates '{text}'") from err


def _tolerance(text: str) -> tuple[str, float]:
    key, sep, value = text.partition("=")
    if not sep:
        raise argparse.ArgumentTypeError(f"expected key=value, got '{text}'")
    try:
        return key.strip(), float(value)
    except ValueError as err:
        raise argparse.ArgumentTypeError(f"tolerance '{key}' is not a number") from err


def _levels(text: str) -> list[int]:
    try:
        return [int(part) for part in text.replace(",", " ").split()]
    except ValueError as err:
        raise argparse.ArgumentTypeError(f"invalid levels '{text}'") from err


def build_parser() -> argparse.ArgumentParser:
    """Return the argument parser of the ``spraygeom`` command."""
    parser = argparse.ArgumentParser(
        prog=DOMAIN,
        description="Verify sprays, connections and second-order bundles on charted manifolds.",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    commands = parser.add_subparsers(dest="command", required=True)

    def with_manifold(name: str, help_text: str) -> argparse.ArgumentParser:
        sub = commands.add_parser(name, help=help_text)
        sub.add_argument(
            "--manifold",
            required=True,
            help=f"catalog name ({', '.join(catalog_names()) or 'none found'}) or YAML path",
        )
        sub.add_argument("--level", type=int, help="truncation level of a graded space")
        return sub

    verify = with_manifold("verify", "run a verification suite")
    verify.add_argument("--suite", choices=[*SUITES, SUITE_ALL], default=SUITE_ALL)
    verify.add_argument("--seed", type=int, help="sampling seed (default: manifold seed)")
    verify.add_argument(
        "--tol", type=_tolerance, action="append", default=[], metavar="KEY=VALUE"
    )
    verify.add_argument("--report", type=Path, help="write the JSON report here")

    derive = with_manifold("derive", "print B, K and the projectors at a point")
    derive.add_argument("--chart", help="chart name (default: first chart)")
    derive.add_argument("--at", type=_coords, required=True, help="base point x")
    derive.add_argument("--u", type=_coords, help="first tangent block (default e0)")
    derive.add_argument("--v", type=_coords, help="second tangent block (default e0)")
    derive.add_argument("--w", type=_coords, help="vertical block (default 0)")

    geodesic = with_manifold("geodesic", "integrate a geodesic")
    geodesic.add_argument("--chart", help="starting chart")
    geodesic.add_argument("--x0", type=_coords)
    geodesic.add_argument("--v0", type=_coords)
    geodesic.add_argument("--t1", type=float)
    geodesic.add_argument("--step", type=float)
    geodesic.add_argument("--method", choices=METHODS, default=METHOD_RK4)
    geodesic.add_argument("--output", type=Path, help="write the trajectory CSV here")

    conjugate = with_manifold("conjugate", "test whether two sprays are mu-conjugate")
    conjugate.add_argument("--mu", help="map expression in x0.. (default: declared mu)")
    conjugate.add_argument("--inverse", help="inverse of --mu, needed by pushforward")
    conjugate.add_argument("--domain", help="extra domain predicate for --mu")
    conjugate.add_argument("--chart", help="chart of --mu (default: first chart)")
    conjugate.add_argument("--k1", choices=SPRAY_NAMES, default=SPRAY_BASE)
    conjugate.add_argument("--k2", choices=SPRAY_NAMES, default=SPRAY_PUSHFORWARD)
    conjugate.add_argument("--seed", type=int)
    conjugate.add_argument("--samples", type=int, default=DEFAULT_SAMPLES)
    conjugate.add_argument(
        "--tol", type=_tolerance, action="append", default=[], metavar="KEY=VALUE"
    )
    conjugate.add_argument("--report", type=Path)

    truncation = with_manifold("truncation", "compare truncation levels")
    truncation.add_argument("--levels", type=_levels, help="grade levels, e.g. 2,4")
    truncation.add_argument("--seed", type=int)
    truncation.add_argument(
        "--tol", type=_tolerance, action="append", default=[], metavar="KEY=VALUE"
    )
    truncation.add_argument("--report", type=Path)
    return parser


# =============================================================================
# Commands
# =============================================================================


def _emit(report: Report, path: Path | None) -> int:
    for line in report.summary_lines():
        print(line)
    if path is not None:
        path.write_text(report.to_json() + "\n", encoding="utf-8")
        _LOGGER.info("Wrote report to %s", path)
    return EXIT_OK if report.passed else EXIT_CHECK_FAILED


def _cmd_verify(m: ManifoldDef, args: argparse.Namespace) -> int:
    report = run_suite(m, args.suite, dict(args.tol), args.seed)
    return _emit(report, args.report)


def _basis(n: int, index: int = 0) -> np.ndarray:
    e = np.zeros(n)
    e[index] = 1.0
    return e


def _block(values: list[float] | None, default: np.ndarray, name: str) -> np.ndarray:
    if values is None:
        return default
    if len(values) != default.size:
        raise ConfigurationError(f"--{name} needs {default.size} coordinates, got {len(values)}")
    return np.asarray(values, dtype=np.float64)


def _cmd_derive(m: ManifoldDef, args: argparse.Namespace) -> int:
    chart = m.atlas.chart(args.chart) if args.chart else m.atlas.first_chart
    n = chart.dimension
    x = _block(args.at, np.zeros(n), "at")
    if not chart.contains(x):
        raise DomainError(f"point {x.tolist()} is outside chart '{chart.name}'")
    xi = DoubleTangentVector(
        x,
        _block(args.u, _basis(n), "u"),
        _block(args.v, _basis(n), "v"),
        _block(args.w, np.zeros(n), "w"),
        chart.name,
    )
    table = [
        [m.bilinear(chart.name, x, _basis(n, i), _basis(n, j)).tolist() for j in range(n)]
        for i in range(n)
    ]
    _, k = connection_map_apply(ConnectionMap(m.bilinear), xi)
    vertical, horizontal = projectors(ConnectionSplitting(m.bilinear), xi)
    payload = {
        "chart": chart.name,
        "x": x.tolist(),
        "xi": [b.tolist() for b in xi.blocks()],
        "B": table,
        "K": k.tolist(),
        "Vp": [b.tolist() for b in vertical.blocks()],
        "Hp": [b.tolist() for b in horizontal.blocks()],
    }
    print(json.dumps(payload, indent=2))
    return EXIT_OK


def _cmd_geodesic(m: ManifoldDef, args: argparse.Namespace) -> int:
    geo = m.geodesic
    integrator = GeodesicIntegrator(m.atlas, m.bilinear, args.method)
    try:
        traj = integrator.integrate(
            args.chart or geo.chart,
            args.x0 if args.x0 is not None else geo.x0,
            args.v0 if args.v0 is not None else geo.v0,
            args.t1 if args.t1 is not None else geo.t1,
            args.step if args.step is not None else geo.step,
        )
    except IntegrationError as err:
        _LOGGER.error("Geodesic integration failed: %s", err)
        return EXIT_CHECK_FAILED
    if args.output is not None:
        traj.write_csv(args.output, m.metric)
    summary = {
        "method": traj.method,
        "step": traj.step_size,
        "samples": len(traj.samples),
        "chart_switches": traj.switches,
        "final": traj.final.to_dict(),
    }
    print(json.dumps(summary, indent=2))
    return EXIT_OK


def _custom_mu(m: ManifoldDef, args: argparse.Namespace) -> Transition:
    chart = m.atlas.chart(args.chart) if args.chart else m.atlas.first_chart
    names = coordinate_names("x", chart.dimension)
    if args.domain:
        chart = chart.restricted(ExprMap.parse(args.domain, names))
    inverse = ExprMap.parse(args.inverse, names) if args.inverse else None
    return Transition(chart, chart, ExprMap.parse(args.mu, names), inverse)


def _cmd_conjugate(m: ManifoldDef, args: argparse.Namespace) -> int:
    mu = _custom_mu(m, args) if args.mu else m.mu
    tolerances = merged_tolerances(dict(args.tol))
    seed = m.seed if args.seed is None else args.seed
    K1, K2 = conjugate_pair(m, args.k1, args.k2, mu)
    tag = f"{args.k1}->{args.k2}"
    records = [
        check_conjugacy(
            K1,
            K2,
            mu,
            args.samples,
            entry_rng(seed, "conjugate.conjugacy"),
            tolerances["conjugate-pair"],
            check_id=f"conjugate.conjugacy[{tag}:{mu.label}]",
        ),
        check_T2mu_linearity(
            K1, K2, mu, args.samples, entry_rng(seed, "conjugate.linearity"), tolerances["linearity"]
        ),
        check_jet_pushforward(
            K1.bilinear,
            K2.bilinear,
            mu,
            args.samples,
            entry_rng(seed, "conjugate.jet-pushforward"),
            tolerances["linearity"],
        ),
    ]
    environment = {"seed": seed, "k1": args.k1, "k2": args.k2, "mu": str(mu.map)}
    return _emit(Report("conjugate", m.name, records, environment), args.report)


def _cmd_truncation(m: ManifoldDef, args: argparse.Namespace) -> int:
    report = truncation_stability(m, args.levels, dict(args.tol), args.seed)
    return _emit(report, args.report)


COMMANDS = {
    "verify": _cmd_verify,
    "derive": _cmd_derive,
    "geodesic": _cmd_geodesic,
    "conjugate": _cmd_conjugate,
    "truncation": _cmd_truncation,
}


def main(argv: Sequence[str] | None = None) -> int:
    """Run the command line and return the exit status."""
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO, format=LOG_FORMAT
    )
    try:
        m = load_manifold(args.manifold, level=args.level)
        return COMMANDS[args.command](m, args)
    except (ConfigurationError, DomainError, EvaluationError) as err:
        _LOGGER.error("%s", err)
        return EXIT_CONFIG_ERROR
    except SprayGeomError as err:
        _LOGGER.error("%s failed: %s", args.command, err)
        return EXIT_CHECK_FAILED


if __name__ == "__main__":
    sys.exit(main())
