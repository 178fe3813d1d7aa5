"""
Small arithmetic language for user-defined mean functions.

Grammar (standard precedence, ``^`` right-associative, unary minus)::

    expr    := term (("+" | "-") term)*
    term    := unary (("*" | "/") unary)*
    unary   := ("-" | "+") unary | power
    power   := primary ("^" unary)?
    primary := NUMBER | "x" | "t<k>" | FUNC "(" expr ("," expr)* ")" | "(" expr ")"
    FUNC    := "exp" | "log" | "xlogy"

``x`` is the design variable, ``t1, t2, ...`` are parameters, collected in order
of first appearance. ``xlogy(a, b)`` is ``a*log(b)`` with value 0 when a = 0.
"""
import math
import re
from dataclasses import dataclass
from functools import singledispatch
from typing import Callable, Dict, List, Optional, Tuple, Union

import numpy as np
from scipy.special import xlogy as _xlogy

from .errors import ExprSyntaxError, InvalidArgumentError, UnknownIdentifierError
from .model import ParamSpace
from .ports import RegressionModel

GRAMMAR = __doc__

VARIABLE = "x"
FUNCTIONS = {"exp": 1, "log": 1, "xlogy": 2}
_PARAM_RE = re.compile(r"t[1-9][0-9]*\Z")


# ---------------------------------------------------------------------------
# AST
# ---------------------------------------------------------------------------

class Node:
    precedence = 5


@dataclass(frozen=True)
class Const(Node):
    value: float


@dataclass(frozen=True)
class Sym(Node):
    name: str


@dataclass(frozen=True)
class Neg(Node):
    operand: Node
    precedence = 3


@dataclass(frozen=True)
class BinOp(Node):
    left: Node
    right: Node
    symbol = "?"


@dataclass(frozen=True)
class Add(BinOp):
    precedence = 1
    symbol = "+"


@dataclass(frozen=True)
class Sub(BinOp):
    precedence = 1
    symbol = "-"


@dataclass(frozen=True)
class Mul(BinOp):
    precedence = 2
    symbol = "*"


@dataclass(frozen=True)
class Div(BinOp):
    precedence = 2
    symbol = "/"


@dataclass(frozen=True)
class Pow(BinOp):
    precedence = 4
    symbol = "^"


@dataclass(frozen=True)
class Call(Node):
    func: str
    args: Tuple[Node, ...]


@dataclass(frozen=True)
class ModelExpr:
    """
    Expresión de un modelo con su lista ordenada de parámetros.

    Para expresiones obtenidas con `parse`, `params` contiene exactamente los
    parámetros que aparecen en el árbol. Las derivadas conservan el marco de
    parámetros de la expresión original para poder evaluarse con el mismo θ.
    """
    ast: Node
    params: Tuple[str, ...]

    def __str__(self) -> str:
        return to_source(self.ast)

    def evaluate(self, x: np.ndarray, theta: np.ndarray) -> np.ndarray:
        env: Dict[str, Union[float, np.ndarray]] = dict(zip(self.params, (float(t) for t in theta)))
        env[VARIABLE] = x
        with np.errstate(all="ignore"):
            value = _evaluate(self.ast, env)
        return np.broadcast_to(np.asarray(value, dtype=float), np.shape(x))


# ---------------------------------------------------------------------------
# Parsing
# ---------------------------------------------------------------------------

_TOKEN_RE = re.compile(
    r"\s*(?:(?P<number>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)|(?P<ident>[A-Za-z_][A-Za-z0-9_]*)|(?P<op>[-+*/^(),]))"
)

_PRIMARY_START = frozenset({"number", "identifier", "'('", "'-'", "'+'"})


@dataclass(frozen=True)
class _Token:
    kind: str
    text: str
    pos: int


def _tokenize(source: str) -> List[_Token]:
    tokens: List[_Token] = []
    pos = 0
    while pos < len(source):
        if source[pos:].strip() == "":
            break
        match = _TOKEN_RE.match(source, pos)
        if match is None or match.end() == pos:
            start = pos + (len(source[pos:]) - len(source[pos:].lstrip()))
            raise ExprSyntaxError(f"unexpected character {source[start]!r}", start, _PRIMARY_START)
        kind = match.lastgroup
        text = match.group(kind)
        tokens.append(_Token(kind, text, match.start(kind)))
        pos = match.end()
    tokens.append(_Token("end", "", len(source)))
    return tokens


class _Parser:
    """Recursive-descent parser over the token list."""

    def __init__(self, source: str):
        self.source = source
        self.tokens = _tokenize(source)
        self.index = 0
        self.params: List[str] = []

    @property
    def current(self) -> _Token:
        return self.tokens[self.index]

    def _advance(self) -> _Token:
        token = self.current
        self.index += 1
        return token

    def _is_op(self, *symbols: str) -> bool:
        return self.current.kind == "op" and self.current.text in symbols

    def _expect_op(self, symbol: str) -> None:
        if not self._is_op(symbol):
            raise ExprSyntaxError(self._describe_current(), self.current.pos, {f"'{symbol}'"})
        self._advance()

    def _describe_current(self) -> str:
        token = self.current
        return "unexpected end of input" if token.kind == "end" else f"unexpected {token.text!r}"

    def parse(self) -> ModelExpr:
        if not self.source.strip():
            raise ExprSyntaxError("empty expression", 0, _PRIMARY_START)
        node = self._expr()
        if self.current.kind != "end":
            raise ExprSyntaxError(self._describe_current(), self.current.pos, {"operator", "end of input"})
        return ModelExpr(node, tuple(self.params))

    def _expr(self) -> Node:
        node = self._term()
        while self._is_op("+", "-"):
            op = self._advance().text
            right = self._term()
            node = Add(node, right) if op == "+" else Sub(node, right)
        return node

    def _term(self) -> Node:
        node = self._unary()
        while self._is_op("*", "/"):
            op = self._advance().text
            right = self._unary()
            node = Mul(node, right) if op == "*" else Div(node, right)
        return node

    def _unary(self) -> Node:
        if self._is_op("-"):
            self._advance()
            return Neg(self._unary())
        if self._is_op("+"):
            self._advance()
            return self._unary()
        return self._power()

    def _power(self) -> Node:
        base = self._primary()
        if self._is_op("^"):
            self._advance()
            return Pow(base, self._unary())
        return base

    def _primary(self) -> Node:
        token = self.current
        if token.kind == "number":
            self._advance()
            return Const(float(token.text))
        if token.kind == "ident":
            self._advance()
            return self._identifier(token)
        if self._is_op("("):
            self._advance()
            node = self._expr()
            self._expect_op(")")
            return node
        raise ExprSyntaxError(self._describe_current(), token.pos, _PRIMARY_START)

    def _identifier(self, token: _Token) -> Node:
        name = token.text
        if name in FUNCTIONS:
            self._expect_op("(")
            args = [self._expr()]
            while self._is_op(","):
                self._advance()
                args.append(self._expr())
            self._expect_op(")")
            if len(args) != FUNCTIONS[name]:
                raise ExprSyntaxError(
                    f"{name} takes {FUNCTIONS[name]} argument(s), got {len(args)}", token.pos, {"')'"}
                )
            return Call(name, tuple(args))
        if name == VARIABLE:
            return Sym(name)
        if _PARAM_RE.match(name):
            if name not in self.params:
                self.params.append(name)
            return Sym(name)
        raise UnknownIdentifierError(f"unknown identifier {name!r}", token.pos, {"x", "t<k>", *FUNCTIONS})


def parse(source: str) -> ModelExpr:
    """
    Parsea una expresión de modelo.

    Raises:
        ExprSyntaxError: con posición y conjunto de tokens esperados.
        UnknownIdentifierError: identificador fuera de {x, t1.., exp, log, xlogy}.
    """
    return _Parser(source).parse()


# ---------------------------------------------------------------------------
# Pretty printing
# ---------------------------------------------------------------------------

def _format_number(value: float) -> str:
    if value.is_integer() and abs(value) < 1e15:
        text = str(int(value))
    else:
        text = repr(value)
    return f"({text})" if value < 0 else text


def _wrap(node: Node, needs_parens: bool) -> str:
    text = to_source(node)
    return f"({text})" if needs_parens else text


def to_source(node: Node) -> str:
    """Renders an AST back to source that reparses to the same tree."""
    if isinstance(node, Const):
        return _format_number(node.value)
    if isinstance(node, Sym):
        return node.name
    if isinstance(node, Neg):
        return "-" + _wrap(node.operand, node.operand.precedence < Neg.precedence)
    if isinstance(node, Call):
        return f"{node.func}({', '.join(to_source(a) for a in node.args)})"
    if isinstance(node, Pow):
        left = _wrap(node.left, node.left.precedence <= Pow.precedence)
        right = _wrap(node.right, node.right.precedence < Neg.precedence)
        return f"{left}^{right}"
    if isinstance(node, BinOp):
        left = _wrap(node.left, node.left.precedence < node.precedence)
        right = _wrap(node.right, node.right.precedence <= node.precedence)
        return f"{left} {node.symbol} {right}"
    raise TypeError(f"not an expression node: {node!r}")


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------

Env = Dict[str, Union[float, np.ndarray]]

_BINARY: Dict[type, Callable] = {
    Add: np.add,
    Sub: np.subtract,
    Mul: np.multiply,
    Div: np.divide,
    Pow: np.power,
}

_CALLS: Dict[str, Callable] = {"exp": np.exp, "log": np.log, "xlogy": _xlogy}


@singledispatch
def _evaluate(node: Node, env: Env):
    raise TypeError(f"cannot evaluate {type(node).__name__}")


@_evaluate.register(Const)
def _(node: Const, env: Env):
    return node.value


@_evaluate.register(Sym)
def _(node: Sym, env: Env):
    return env[node.name]


@_evaluate.register(Neg)
def _(node: Neg, env: Env):
    return np.negative(_evaluate(node.operand, env))


@_evaluate.register(BinOp)
def _(node: BinOp, env: Env):
    return _BINARY[type(node)](_evaluate(node.left, env), _evaluate(node.right, env))


@_evaluate.register(Call)
def _(node: Call, env: Env):
    return _CALLS[node.func](*(_evaluate(a, env) for a in node.args))


# ---------------------------------------------------------------------------
# Simplifying constructors (0/1 folding and constant folding only)
# ---------------------------------------------------------------------------

ZERO = Const(0.0)
ONE = Const(1.0)


def _is(node: Node, value: float) -> bool:
    return isinstance(node, Const) and node.value == value


def _fold(value) -> Optional[Const]:
    value = float(value)
    return Const(value) if math.isfinite(value) else None


def _fold_binary(cls: type, a: Node, b: Node) -> Optional[Const]:
    if isinstance(a, Const) and isinstance(b, Const):
        with np.errstate(all="ignore"):
            return _fold(_BINARY[cls](a.value, b.value))
    return None


def neg(a: Node) -> Node:
    if isinstance(a, Const):
        return Const(-a.value)
    if isinstance(a, Neg):
        return a.operand
    return Neg(a)


def add(a: Node, b: Node) -> Node:
    if _is(a, 0.0):
        return b
    if _is(b, 0.0):
        return a
    return _fold_binary(Add, a, b) or Add(a, b)


def sub(a: Node, b: Node) -> Node:
    if _is(b, 0.0):
        return a
    if _is(a, 0.0):
        return neg(b)
    return _fold_binary(Sub, a, b) or Sub(a, b)


def mul(a: Node, b: Node) -> Node:
    if _is(a, 0.0) or _is(b, 0.0):
        return ZERO
    if _is(a, 1.0):
        return b
    if _is(b, 1.0):
        return a
    return _fold_binary(Mul, a, b) or Mul(a, b)


def div(a: Node, b: Node) -> Node:
    if _is(a, 0.0) and not _is(b, 0.0):
        return ZERO
    if _is(b, 1.0):
        return a
    return _fold_binary(Div, a, b) or Div(a, b)


def power(a: Node, b: Node) -> Node:
    if _is(b, 0.0):
        return ONE
    if _is(b, 1.0):
        return a
    return _fold_binary(Pow, a, b) or Pow(a, b)


def call(func: str, *args: Node) -> Node:
    if all(isinstance(a, Const) for a in args):
        with np.errstate(all="ignore"):
            folded = _fold(_CALLS[func](*(a.value for a in args)))
        if folded is not None:
            return folded
    return Call(func, tuple(args))


def simplify(node: Node) -> Node:
    """Rebuilds a tree bottom-up through the folding constructors."""
    if isinstance(node, (Const, Sym)):
        return node
    if isinstance(node, Neg):
        return neg(simplify(node.operand))
    if isinstance(node, Call):
        return call(node.func, *(simplify(a) for a in node.args))
    builders = {Add: add, Sub: sub, Mul: mul, Div: div, Pow: power}
    return builders[type(node)](simplify(node.left), simplify(node.right))


# ---------------------------------------------------------------------------
# Differentiation
# ---------------------------------------------------------------------------

def depends_on(node: Node, var: str) -> bool:
    if isinstance(node, Sym):
        return node.name == var
    if isinstance(node, Const):
        return False
    if isinstance(node, Neg):
        return depends_on(node.operand, var)
    if isinstance(node, Call):
        return any(depends_on(a, var) for a in node.args)
    return depends_on(node.left, var) or depends_on(node.right, var)


@singledispatch
def _diff(node: Node, var: str) -> Node:
    raise NotImplementedError(f"cannot differentiate a {type(node).__name__}")


@_diff.register(Const)
def _(node: Const, var: str) -> Node:
    return ZERO


@_diff.register(Sym)
def _(node: Sym, var: str) -> Node:
    return ONE if node.name == var else ZERO


@_diff.register(Neg)
def _(node: Neg, var: str) -> Node:
    return neg(_diff(node.operand, var))


@_diff.register(Add)
def _(node: Add, var: str) -> Node:
    return add(_diff(node.left, var), _diff(node.right, var))


@_diff.register(Sub)
def _(node: Sub, var: str) -> Node:
    return sub(_diff(node.left, var), _diff(node.right, var))


@_diff.register(Mul)
def _(node: Mul, var: str) -> Node:
    u, v = node.left, node.right
    return add(mul(_diff(u, var), v), mul(u, _diff(v, var)))


@_diff.register(Div)
def _(node: Div, var: str) -> Node:
    u, v = node.left, node.right
    du, dv = _diff(u, var), _diff(v, var)
    return sub(div(du, v), div(mul(u, dv), power(v, Const(2.0))))


@_diff.register(Pow)
def _(node: Pow, var: str) -> Node:
    u, v = node.left, node.right
    result: Node = ZERO
    if depends_on(u, var):
        result = mul(mul(v, power(u, sub(v, ONE))), _diff(u, var))
    if depends_on(v, var):
        result = add(result, mul(call("xlogy", power(u, v), u), _diff(v, var)))
    return result


@_diff.register(Call)
def _(node: Call, var: str) -> Node:
    if node.func == "exp":
        (u,) = node.args
        return mul(call("exp", u), _diff(u, var))
    if node.func == "log":
        (u,) = node.args
        return div(_diff(u, var), u)
    a, b = node.args
    return add(mul(_diff(a, var), call("log", b)), div(mul(a, _diff(b, var)), b))


def differentiate(expr: ModelExpr, param: str) -> ModelExpr:
    """
    Derivada simbólica respecto de un parámetro, simplificada.

    Raises:
        InvalidArgumentError: si `param` no es un parámetro de la expresión.
    """
    if param not in expr.params:
        raise InvalidArgumentError(f"{param!r} is not a parameter of '{expr}' (params: {expr.params})")
    return ModelExpr(_diff(simplify(expr.ast), param), expr.params)


def is_linear_in_params(expr: ModelExpr) -> bool:
    """Structural check: every second parameter derivative folds to 0."""
    for p in expr.params:
        first = differentiate(expr, p)
        if any(not _is(differentiate(first, q).ast, 0.0) for q in expr.params):
            return False
    return True


# ---------------------------------------------------------------------------
# Models
# ---------------------------------------------------------------------------

class ExprModel(RegressionModel):
    """
    Modelo definido por una expresión; el gradiente evalúa las derivadas simbólicas.
    """

    def __init__(self, expr: ModelExpr, param_space: ParamSpace, name: Optional[str] = None):
        super().__init__(name or str(expr), param_space, linear=is_linear_in_params(expr))
        self.expr = expr
        self.derivatives = tuple(differentiate(expr, p) for p in expr.params)

    def with_space(self, param_space: ParamSpace) -> "ExprModel":
        return ExprModel(self.expr, param_space, self.name)

    def _mean(self, x: np.ndarray, theta: np.ndarray) -> np.ndarray:
        return self.expr.evaluate(x, theta)

    def _jacobian(self, x: np.ndarray, theta: np.ndarray) -> np.ndarray:
        if not self.derivatives:
            return np.zeros((x.size, 0))
        return np.column_stack([d.evaluate(x, theta) for d in self.derivatives])


def to_model(expr: ModelExpr, param_space: ParamSpace, name: Optional[str] = None) -> ExprModel:
    """
    Raises:
        InvalidArgumentError: si la dimensión de la caja no coincide con los parámetros.
    """
    if param_space.dim != len(expr.params):
        raise InvalidArgumentError(
            f"expression '{expr}' has {len(expr.params)} parameters {expr.params} "
            f"but the parameter box has dimension {param_space.dim}"
        )
    return ExprModel(expr, param_space, name)
