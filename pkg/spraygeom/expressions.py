"""Expression trees for chart maps, sprays, metrics and test fields.

Expressions are parsed once into immutable trees and evaluated either over
plain floats or over second-order jets, using the same tree.
"""

from __future__ import annotations

import logging
import math
import operator
from collections.abc import Callable, Iterable, Mapping, Sequence
from dataclasses import dataclass
from typing import TYPE_CHECKING, Any, TypeAlias

import numpy as np
import numpy.typing as npt
import pyparsing as pp

from .exceptions import EvaluationError, ManifoldParseError, UnresolvedReferenceError

if TYPE_CHECKING:
    from .jets import Jet2

_LOGGER = logging.getLogger(__name__)

pp.ParserElement.enable_packrat()

Scalar: TypeAlias = "float | Jet2"

FUNCTIONS: dict[str, Callable[[float], float]] = {
    "exp": math.exp,
    "sin": math.sin,
    "cos": math.cos,
    "sqrt": math.sqrt,
    "log": math.log,
}
"""Closed function set; every entry has a jet counterpart of the same name"""

CONSTANTS: dict[str, float] = {"pi": math.pi}

_BINARY: dict[str, Callable[[Any, Any], Any]] = {
    "+": operator.add,
    "-": operator.sub,
    "*": operator.mul,
    "/": operator.truediv,
}

_ARITHMETIC_ERRORS = (ZeroDivisionError, OverflowError, ValueError)


# =============================================================================
# Tree nodes
# =============================================================================


class Node:
    """Base class of expression tree nodes."""

    __slots__ = ()

    def evaluate(self, env: Mapping[str, Scalar]) -> Scalar:
        """Evaluate the node with variables bound in ``env``."""
        raise NotImplementedError

    def substitute(self, mapping: Mapping[str, Node]) -> Node:
        """Replace variables by subtrees."""
        raise NotImplementedError

    def variables(self) -> frozenset[str]:
        """Return the variable names referenced below this node."""
        raise NotImplementedError


@dataclass(frozen=True, slots=True)
class Const(Node):
    value: float

    def evaluate(self, env: Mapping[str, Scalar]) -> Scalar:
        return self.value

    def substitute(self, mapping: Mapping[str, Node]) -> Node:
        return self

    def variables(self) -> frozenset[str]:
        return frozenset()

    def __str__(self) -> str:
        if self.value.is_integer() and abs(self.value) < 1e15:
            return str(int(self.value))
        return repr(self.value)


@dataclass(frozen=True, slots=True)
class Var(Node):
    name: str

    def evaluate(self, env: Mapping[str, Scalar]) -> Scalar:
        return env[self.name]

    def substitute(self, mapping: Mapping[str, Node]) -> Node:
        return mapping.get(self.name, self)

    def variables(self) -> frozenset[str]:
        return frozenset((self.name,))

    def __str__(self) -> str:
        return self.name


@dataclass(frozen=True, slots=True)
class Neg(Node):
    operand: Node

    def evaluate(self, env: Mapping[str, Scalar]) -> Scalar:
        return -self.operand.evaluate(env)

    def substitute(self, mapping: Mapping[str, Node]) -> Node:
        return Neg(self.operand.substitute(mapping))

    def variables(self) -> frozenset[str]:
        return self.operand.variables()

    def __str__(self) -> str:
        return f"-{self.operand}"


@dataclass(frozen=True, slots=True)
class BinOp(Node):
    op: str
    left: Node
    right: Node

    def evaluate(self, env: Mapping[str, Scalar]) -> Scalar:
        left = self.left.evaluate(env)
        right = self.right.evaluate(env)
        try:
            return _BINARY[self.op](left, right)  # type: ignore[no-any-return]
        except _ARITHMETIC_ERRORS as err:
            raise EvaluationError(f"'{self.op}' failed: {err}", str(self)) from err

    def substitute(self, mapping: Mapping[str, Node]) -> Node:
        return BinOp(
            self.op, self.left.substitute(mapping), self.right.substitute(mapping)
        )

    def variables(self) -> frozenset[str]:
        return self.left.variables() | self.right.variables()

    def __str__(self) -> str:
        return f"({self.left} {self.op} {self.right})"


@dataclass(frozen=True, slots=True)
class Pow(Node):
    base: Node
    exponent: int

    def evaluate(self, env: Mapping[str, Scalar]) -> Scalar:
        base = self.base.evaluate(env)
        try:
            return base**self.exponent
        except _ARITHMETIC_ERRORS as err:
            raise EvaluationError(f"power failed: {err}", str(self)) from err

    def substitute(self, mapping: Mapping[str, Node]) -> Node:
        return Pow(self.base.substitute(mapping), self.exponent)

    def variables(self) -> frozenset[str]:
        return self.base.variables()

    def __str__(self) -> str:
        return f"{self.base}^{self.exponent}"


@dataclass(frozen=True, slots=True)
class Call(Node):
    func: str
    arg: Node

    def evaluate(self, env: Mapping[str, Scalar]) -> Scalar:
        value = self.arg.evaluate(env)
        try:
            if isinstance(value, (int, float)):
                return FUNCTIONS[self.func](float(value))
            return getattr(value, self.func)()  # type: ignore[no-any-return]
        except _ARITHMETIC_ERRORS as err:
            raise EvaluationError(f"{self.func} failed: {err}", str(self)) from err

    def substitute(self, mapping: Mapping[str, Node]) -> Node:
        return Call(self.func, self.arg.substitute(mapping))

    def variables(self) -> frozenset[str]:
        return self.arg.variables()

    def __str__(self) -> str:
        return f"{self.func}({self.arg})"


# =============================================================================
# Grammar
# =============================================================================


def _location(text: str, loc: int) -> tuple[int, int]:
    return pp.lineno(loc, text), pp.col(loc, text)


def _integer_exponent(node: Node, text: str, loc: int) -> int:
    value: float | None = None
    if isinstance(node, Const):
        value = node.value
    elif isinstance(node, Neg) and isinstance(node.operand, Const):
        value = -node.operand.value
    if value is None or not value.is_integer():
        line, column = _location(text, loc)
        raise ManifoldParseError(
            f"exponent must be an integer literal, got '{node}'", line, column
        )
    return int(value)


def _make_number(tokens: pp.ParseResults) -> Node:
    return Const(float(tokens[0]))


def _make_name(tokens: pp.ParseResults) -> Node:
    name = str(tokens[0])
    if name in CONSTANTS:
        return Const(CONSTANTS[name])
    return Var(name)


def _make_call(tokens: pp.ParseResults) -> Node:
    return Call(str(tokens[0]), tokens[1])


def _fold_power(text: str, loc: int, tokens: pp.ParseResults) -> Node:
    items = list(tokens[0])
    result: Node = items[-1]
    for index in range(len(items) - 3, -1, -2):
        result = Pow(items[index], _integer_exponent(result, text, loc))
    return result


def _negate(tokens: pp.ParseResults) -> Node:
    return Neg(tokens[0][1])


def _fold_binary(tokens: pp.ParseResults) -> Node:
    items = list(tokens[0])
    result: Node = items[0]
    for index in range(1, len(items), 2):
        result = BinOp(str(items[index]), result, items[index + 1])
    return result


def _build_grammar() -> pp.ParserElement:
    number = pp.Regex(r"(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?").set_parse_action(
        _make_number
    )
    name = pp.Word(pp.alphas + "_", pp.alphanums + "_").set_parse_action(_make_name)
    function = pp.one_of(list(FUNCTIONS), as_keyword=True)

    expr = pp.Forward()
    call = (function + pp.Suppress("(") + expr + pp.Suppress(")")).set_parse_action(
        _make_call
    )
    expr <<= pp.infix_notation(
        number | call | name,
        [
            (pp.one_of("^ **"), 2, pp.OpAssoc.RIGHT, _fold_power),
            (pp.Literal("-"), 1, pp.OpAssoc.RIGHT, _negate),
            (pp.one_of("* /"), 2, pp.OpAssoc.LEFT, _fold_binary),
            (pp.one_of("+ -"), 2, pp.OpAssoc.LEFT, _fold_binary),
        ],
    )
    vector = pp.Group(pp.Suppress("[") + pp.DelimitedList(expr) + pp.Suppress("]"))
    matrix = pp.Group(pp.Suppress("[") + pp.DelimitedList(vector) + pp.Suppress("]"))
    return matrix | vector | expr


_GRAMMAR = _build_grammar()


def _unwrap(result: Any) -> Any:
    if isinstance(result, pp.ParseResults):
        return [_unwrap(item) for item in result]
    return result


def parse_text(text: str, *, where: str = "") -> Node | list[Any]:
    """Parse a scalar, vector ``[a, b]`` or matrix ``[[a, b], [c, d]]``."""
    try:
        result = _GRAMMAR.parse_string(text, parse_all=True)
    except pp.ParseBaseException as err:
        context = f" in {where}" if where else ""
        raise ManifoldParseError(
            f"invalid expression{context}: {err.msg}", err.lineno, err.col
        ) from err
    return _unwrap(result[0])  # type: ignore[no-any-return]


def coordinate_names(prefix: str, count: int) -> tuple[str, ...]:
    """Return ``(prefix0, prefix1, ...)``."""
    return tuple(f"{prefix}{i}" for i in range(count))


# =============================================================================
# Maps
# =============================================================================


@dataclass(frozen=True)
class ExprMap:
    """Vector-valued map given by one expression tree per output."""

    inputs: tuple[str, ...]
    outputs: tuple[Node, ...]
    source: str = ""

    def __post_init__(self) -> None:
        """Reject references to names that are not inputs."""
        known = set(self.inputs)
        unknown = sorted(
            set().union(*(node.variables() for node in self.outputs)) - known
        )
        if unknown:
            where = f" in '{self.source}'" if self.source else ""
            raise UnresolvedReferenceError(
                f"unknown variable(s) {', '.join(unknown)}{where}; "
                f"inputs are {', '.join(self.inputs)}"
            )

    @classmethod
    def parse(
        cls, text: str, inputs: Sequence[str], *, where: str = ""
    ) -> ExprMap:
        """Parse a scalar or vector expression."""
        tree = parse_text(text, where=where)
        if isinstance(tree, Node):
            outputs: tuple[Node, ...] = (tree,)
        elif all(isinstance(item, Node) for item in tree):
            outputs = tuple(tree)
        else:
            raise ManifoldParseError(f"expected a scalar or vector in {where or text}")
        return cls(tuple(inputs), outputs, text)

    @classmethod
    def parse_matrix(
        cls, text: str, inputs: Sequence[str], *, where: str = ""
    ) -> ExprMap:
        """Parse a square matrix into a row-major map with n*n outputs."""
        tree = parse_text(text, where=where)
        if not isinstance(tree, list) or not all(isinstance(r, list) for r in tree):
            raise ManifoldParseError(f"expected a matrix in {where or text}")
        size = len(tree)
        if any(len(row) != size for row in tree):
            raise ManifoldParseError(f"matrix in {where or text} is not square")
        return cls(tuple(inputs), tuple(n for row in tree for n in row), text)

    @classmethod
    def from_strings(
        cls, texts: Iterable[str], inputs: Sequence[str], *, where: str = ""
    ) -> ExprMap:
        """Parse one scalar expression per output."""
        outputs: list[Node] = []
        texts = list(texts)
        for index, text in enumerate(texts):
            tree = parse_text(text, where=f"{where}[{index}]")
            if not isinstance(tree, Node):
                raise ManifoldParseError(f"entry {where}[{index}] must be a scalar")
            outputs.append(tree)
        return cls(tuple(inputs), tuple(outputs), "[" + ", ".join(texts) + "]")

    @classmethod
    def constant(cls, values: Sequence[float], inputs: Sequence[str]) -> ExprMap:
        """Return the constant map."""
        nodes = tuple(Const(float(v)) for v in values)
        return cls(tuple(inputs), nodes, "[" + ", ".join(map(str, nodes)) + "]")

    @classmethod
    def identity(cls, inputs: Sequence[str]) -> ExprMap:
        """Return the identity map on ``inputs``."""
        return cls(tuple(inputs), tuple(Var(n) for n in inputs), "[" + ", ".join(inputs) + "]")

    @property
    def arity_in(self) -> int:
        """Return the number of inputs."""
        return len(self.inputs)

    @property
    def arity_out(self) -> int:
        """Return the number of outputs."""
        return len(self.outputs)

    def evaluate(self, values: Sequence[Scalar]) -> list[Scalar]:
        """Evaluate over floats or jets."""
        if len(values) != len(self.inputs):
            raise EvaluationError(
                f"expected {len(self.inputs)} inputs, got {len(values)}", self.source
            )
        env = dict(zip(self.inputs, values, strict=True))
        return [node.evaluate(env) for node in self.outputs]

    def __call__(self, *blocks: npt.ArrayLike) -> npt.NDArray[np.float64]:
        """Evaluate at concatenated float blocks and return an array."""
        flat = np.concatenate([np.atleast_1d(np.asarray(b, dtype=np.float64)) for b in blocks])
        return np.asarray(self.evaluate([float(v) for v in flat]), dtype=np.float64)

    def compose(self, inner: ExprMap) -> ExprMap:
        """Return ``self`` after ``inner`` by tree substitution."""
        if inner.arity_out != self.arity_in:
            raise UnresolvedReferenceError(
                f"cannot compose: {inner.arity_out} outputs feed {self.arity_in} inputs"
            )
        mapping = dict(zip(self.inputs, inner.outputs, strict=True))
        outputs = tuple(node.substitute(mapping) for node in self.outputs)
        return ExprMap(inner.inputs, outputs, f"({self.source}) o ({inner.source})")

    def with_inputs(self, inputs: Sequence[str]) -> ExprMap:
        """Rebind the same trees to a wider input list."""
        return ExprMap(tuple(inputs), self.outputs, self.source)

    def scaled(self, factor: ExprMap) -> ExprMap:
        """Multiply every output by the single output of ``factor``."""
        if factor.arity_out != 1:
            raise UnresolvedReferenceError("scale factor must be scalar-valued")
        scale = factor.outputs[0]
        outputs = tuple(BinOp("*", scale, node) for node in self.outputs)
        return ExprMap(self.inputs, outputs, f"({factor.source}) * ({self.source})")

    def added(self, other: ExprMap) -> ExprMap:
        """Return the output-wise sum with a map of equal shape."""
        if other.arity_out != self.arity_out:
            raise UnresolvedReferenceError("cannot add maps of different output size")
        outputs = tuple(
            BinOp("+", a, b) for a, b in zip(self.outputs, other.outputs, strict=True)
        )
        return ExprMap(self.inputs, outputs, f"({self.source}) + ({other.source})")

    def stacked(self, other: ExprMap) -> ExprMap:
        """Concatenate the outputs of two maps over the same inputs."""
        return ExprMap(
            self.inputs, self.outputs + other.outputs, f"{self.source}; {other.source}"
        )

    def __str__(self) -> str:
        return self.source or "[" + ", ".join(str(n) for n in self.outputs) + "]"
