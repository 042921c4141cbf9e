"""Arithmetic expressions over named state variables.

Coefficient functions (drift components, diffusion entries and their
derivatives) are stored as small immutable syntax trees.  Trees are built by
`parse`, evaluated at single points or point batches, and differentiated
symbolically.  Parameters are substituted with their numeric values while
parsing, so a finished tree only refers to state variables and literals.

Supported operators: ``+ - * /``, unary minus and ``^`` with a nonnegative
integer literal exponent.  Precedence (tightest first): ``^``, unary minus,
``* /``, ``+ -``.
"""

from __future__ import annotations

import re

import numpy as np

__all__ = [
    "Expression",
    "Const",
    "Var",
    "Add",
    "Sub",
    "Mul",
    "Div",
    "Neg",
    "Pow",
    "ExpressionError",
    "ParseError",
    "UnknownIdentifierError",
    "EvaluationError",
    "parse",
    "evaluate",
    "evaluate_many",
    "differentiate",
    "ProgramSet",
    "compile_programs",
    "OP_CONST",
    "OP_VAR",
    "OP_ADD",
    "OP_SUB",
    "OP_MUL",
    "OP_DIV",
    "OP_NEG",
    "OP_POW",
]


class ExpressionError(Exception):
    """Base class for expression failures."""


class ParseError(ExpressionError):
    def __init__(self, message, position):
        super().__init__(f"{message} (at position {position})")
        self.position = position


class UnknownIdentifierError(ParseError):
    def __init__(self, name, position):
        ParseError.__init__(self, f"unknown identifier {name!r}", position)
        self.name = name


class EvaluationError(ExpressionError):
    """Arithmetic failure (division by zero) at a specific point."""

    def __init__(self, message, point):
        super().__init__(f"{message} at point {tuple(np.atleast_1d(point))}")
        self.point = np.array(point, dtype=float)


# Printing precedence levels; the grammar's power base must be atomic, so
# anything below _PREC_ATOM gets parenthesized there.
_PREC_ADD = 1
_PREC_MUL = 2
_PREC_NEG = 3
_PREC_POW = 4
_PREC_ATOM = 5


class Expression:
    """Immutable arithmetic expression tree node."""

    __slots__ = ()
    precedence = _PREC_ATOM

    def evaluate(self, point):
        """Evaluate at a single point (sequence of variable values)."""
        return evaluate(self, point)

    def diff(self, var_index):
        return differentiate(self, var_index)

    def __repr__(self):
        return f"{type(self).__name__}({self!s})"


class Const(Expression):
    __slots__ = ("value",)

    def __init__(self, value):
        object.__setattr__(self, "value", float(value))

    def __setattr__(self, *a):  # keep nodes immutable
        raise AttributeError("expressions are immutable")

    @property
    def precedence(self):
        return _PREC_NEG if self.value < 0 else _PREC_ATOM

    def __str__(self):
        return repr(self.value) if self.value != int(self.value) else str(int(self.value))


class Var(Expression):
    __slots__ = ("index", "name")

    def __init__(self, index, name):
        object.__setattr__(self, "index", int(index))
        object.__setattr__(self, "name", str(name))

    def __setattr__(self, *a):
        raise AttributeError("expressions are immutable")

    def __str__(self):
        return self.name


class _Binary(Expression):
    __slots__ = ("left", "right")
    symbol = "?"

    def __init__(self, left, right):
        object.__setattr__(self, "left", left)
        object.__setattr__(self, "right", right)

    def __setattr__(self, *a):
        raise AttributeError("expressions are immutable")

    def __str__(self):
        lhs = _wrap(self.left, self.precedence, strict=False)
        rhs = _wrap(self.right, self.precedence, strict=True)
        return f"{lhs} {self.symbol} {rhs}"


class Add(_Binary):
    __slots__ = ()
    symbol = "+"
    precedence = _PREC_ADD

    def __str__(self):
        # a + -b prints badly through the generic path; keep it readable
        lhs = _wrap(self.left, _PREC_ADD, strict=False)
        rhs = _wrap(self.right, _PREC_ADD, strict=True)
        return f"{lhs} + {rhs}"


class Sub(_Binary):
    __slots__ = ()
    symbol = "-"
    precedence = _PREC_ADD


class Mul(_Binary):
    __slots__ = ()
    symbol = "*"
    precedence = _PREC_MUL


class Div(_Binary):
    __slots__ = ()
    symbol = "/"
    precedence = _PREC_MUL


class Neg(Expression):
    __slots__ = ("operand",)
    precedence = _PREC_NEG

    def __init__(self, operand):
        object.__setattr__(self, "operand", operand)

    def __setattr__(self, *a):
        raise AttributeError("expressions are immutable")

    def __str__(self):
        return f"-{_wrap(self.operand, _PREC_NEG, strict=False)}"


class Pow(Expression):
    __slots__ = ("base", "exponent")
    precedence = _PREC_POW

    def __init__(self, base, exponent):
        object.__setattr__(self, "base", base)
        object.__setattr__(self, "exponent", int(exponent))

    def __setattr__(self, *a):
        raise AttributeError("expressions are immutable")

    def __str__(self):
        base = str(self.base)
        if self.base.precedence < _PREC_ATOM:
            base = f"({base})"
        return f"{base}^{self.exponent}"


def _wrap(node, parent_prec, strict):
    text = str(node)
    prec = node.precedence
    if prec < parent_prec or (strict and prec == parent_prec):
        return f"({text})"
    return text


# ---------------------------------------------------------------------------
# Folding constructors.  Used by the parser and the differentiator so that
# derivative trees come out already cleaned of 0*e, 1*e, e^0 and literal
# arithmetic.

def _is_const(e, value=None):
    return isinstance(e, Const) and (value is None or e.value == value)


def add(a, b):
    if _is_const(a) and _is_const(b):
        return Const(a.value + b.value)
    if _is_const(a, 0.0):
        return b
    if _is_const(b, 0.0):
        return a
    return Add(a, b)


def sub(a, b):
    if _is_const(a) and _is_const(b):
        return Const(a.value - b.value)
    if _is_const(b, 0.0):
        return a
    if _is_const(a, 0.0):
        return neg(b)
    return Sub(a, b)


def mul(a, b):
    if _is_const(a) and _is_const(b):
        return Const(a.value * b.value)
    if _is_const(a, 0.0) or _is_const(b, 0.0):
        return Const(0.0)
    if _is_const(a, 1.0):
        return b
    if _is_const(b, 1.0):
        return a
    if _is_const(a, -1.0):
        return neg(b)
    if _is_const(b, -1.0):
        return neg(a)
    return Mul(a, b)


def div(a, b):
    if _is_const(a) and _is_const(b) and b.value != 0.0:
        return Const(a.value / b.value)
    if _is_const(b, 1.0):
        return a
    return Div(a, b)


def neg(a):
    if _is_const(a):
        return Const(-a.value)
    if isinstance(a, Neg):
        return a.operand
    return Neg(a)


def power(a, n):
    n = int(n)
    if n == 0:
        return Const(1.0)
    if n == 1:
        return a
    if _is_const(a):
        return Const(a.value**n)
    return Pow(a, n)


# ---------------------------------------------------------------------------
# Parsing

_TOKEN_RE = re.compile(
    r"\s*(?:(?P<number>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<ident>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>[-+*/^()]))"
)


def _tokenize(source):
    tokens = []
    pos = 0
    while pos < len(source):
        m = _TOKEN_RE.match(source, pos)
        if m is None:
            stripped = source[pos:].lstrip()
            if not stripped:
                break
            raise ParseError(f"unexpected character {stripped[0]!r}", pos)
        if m.group("number") is not None:
            tokens.append(("number", m.group("number"), m.start("number")))
        elif m.group("ident") is not None:
            tokens.append(("ident", m.group("ident"), m.start("ident")))
        else:
            tokens.append(("op", m.group("op"), m.start("op")))
        pos = m.end()
    tokens.append(("end", "", len(source)))
    return tokens


class _Parser:
    def __init__(self, tokens, variables, parameters):
        self.tokens = tokens
        self.at = 0
        self.variables = {name: i for i, name in enumerate(variables)}
        self.parameters = dict(parameters)

    def peek(self):
        return self.tokens[self.at]

    def next(self):
        tok = self.tokens[self.at]
        self.at += 1
        return tok

    def expect_op(self, symbol):
        kind, text, pos = self.next()
        if kind != "op" or text != symbol:
            raise ParseError(f"expected {symbol!r}, found {text or 'end of input'!r}", pos)

    def parse_expression(self):
        node = self.parse_term()
        while True:
            kind, text, _ = self.peek()
            if kind == "op" and text in "+-":
                self.next()
                rhs = self.parse_term()
                node = add(node, rhs) if text == "+" else sub(node, rhs)
            else:
                return node

    def parse_term(self):
        node = self.parse_factor()
        while True:
            kind, text, _ = self.peek()
            if kind == "op" and text in "*/":
                self.next()
                rhs = self.parse_factor()
                node = mul(node, rhs) if text == "*" else div(node, rhs)
            else:
                return node

    def parse_factor(self):
        kind, text, _ = self.peek()
        if kind == "op" and text == "-":
            self.next()
            return neg(self.parse_factor())
        return self.parse_power()

    def parse_power(self):
        base = self.parse_atom()
        kind, text, _ = self.peek()
        if kind == "op" and text == "^":
            self.next()
            ekind, etext, epos = self.next()
            if ekind != "number" or not etext.isdigit():
                raise ParseError(
                    f"exponent must be a nonnegative integer literal, found {etext or 'end of input'!r}",
                    epos,
                )
            return power(base, int(etext))
        return base

    def parse_atom(self):
        kind, text, pos = self.next()
        if kind == "number":
            return Const(float(text))
        if kind == "ident":
            if text in self.variables:
                return Var(self.variables[text], text)
            if text in self.parameters:
                return Const(self.parameters[text])
            raise UnknownIdentifierError(text, pos)
        if kind == "op" and text == "(":
            node = self.parse_expression()
            self.expect_op(")")
            return node
        raise ParseError(f"expected a value, found {text or 'end of input'!r}", pos)


def parse(source, variables, parameters=None):
    """Parse an expression string into an `Expression`.

    Parameters
    ----------
    source : str
        Expression text, e.g. ``"s + ro*x*z/(alfa+z)"``.
    variables : sequence of str
        Ordered state-variable names; occurrences become `Var` references.
    parameters : mapping, optional
        Name -> value; occurrences are replaced by numeric literals.

    Raises
    ------
    UnknownIdentifierError
        For identifiers that are neither variables nor parameters.
    ParseError
        For malformed input (reported with the offending position).
    """
    parser = _Parser(_tokenize(source), variables, parameters or {})
    node = parser.parse_expression()
    kind, text, pos = parser.peek()
    if kind != "end":
        raise ParseError(f"unexpected trailing input {text!r}", pos)
    return node


# ---------------------------------------------------------------------------
# Evaluation

def _eval(node, values, point_for_error):
    if isinstance(node, Const):
        return node.value
    if isinstance(node, Var):
        return values[node.index]
    if isinstance(node, Add):
        return _eval(node.left, values, point_for_error) + _eval(node.right, values, point_for_error)
    if isinstance(node, Sub):
        return _eval(node.left, values, point_for_error) - _eval(node.right, values, point_for_error)
    if isinstance(node, Mul):
        return _eval(node.left, values, point_for_error) * _eval(node.right, values, point_for_error)
    if isinstance(node, Div):
        num = _eval(node.left, values, point_for_error)
        den = _eval(node.right, values, point_for_error)
        bad = den == 0.0
        if np.any(bad):
            raise EvaluationError("division by zero", point_for_error(bad))
        return num / den
    if isinstance(node, Neg):
        return -_eval(node.operand, values, point_for_error)
    if isinstance(node, Pow):
        base = _eval(node.base, values, point_for_error)
        out = base * 0.0 + 1.0 if not np.isscalar(base) else 1.0
        for _ in range(node.exponent):
            out = out * base
        return out
    raise TypeError(f"not an expression node: {node!r}")


def evaluate(expr, point):
    """Evaluate ``expr`` at a single point (1-D sequence of variable values)."""
    values = np.asarray(point, dtype=float)
    if values.ndim != 1:
        raise ValueError("point must be one-dimensional; use evaluate_many for batches")

    def point_for_error(_bad):
        return values

    result = _eval(expr, values, point_for_error)
    return float(result)


def evaluate_many(expr, points):
    """Evaluate ``expr`` at an ``(n, d)`` array of points, returning ``(n,)`` values."""
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2:
        raise ValueError("points must be a 2-D array (n, d)")
    columns = [pts[:, j] for j in range(pts.shape[1])]

    def point_for_error(bad):
        index = int(np.argmax(np.broadcast_to(bad, (pts.shape[0],))))
        return pts[index]

    result = _eval(expr, columns, point_for_error)
    return np.broadcast_to(np.asarray(result, dtype=float), (pts.shape[0],)).copy()


# ---------------------------------------------------------------------------
# Differentiation

def differentiate(expr, var_index):
    """Exact symbolic partial derivative with respect to variable ``var_index``.

    The result is constant-folded but not otherwise simplified; correctness is
    semantic (it evaluates to the derivative wherever the input is defined).
    """
    if isinstance(expr, Const):
        return Const(0.0)
    if isinstance(expr, Var):
        return Const(1.0 if expr.index == var_index else 0.0)
    if isinstance(expr, Add):
        return add(differentiate(expr.left, var_index), differentiate(expr.right, var_index))
    if isinstance(expr, Sub):
        return sub(differentiate(expr.left, var_index), differentiate(expr.right, var_index))
    if isinstance(expr, Mul):
        da = differentiate(expr.left, var_index)
        db = differentiate(expr.right, var_index)
        return add(mul(da, expr.right), mul(expr.left, db))
    if isinstance(expr, Div):
        da = differentiate(expr.left, var_index)
        db = differentiate(expr.right, var_index)
        return div(sub(mul(da, expr.right), mul(expr.left, db)), power(expr.right, 2))
    if isinstance(expr, Neg):
        return neg(differentiate(expr.operand, var_index))
    if isinstance(expr, Pow):
        da = differentiate(expr.base, var_index)
        return mul(mul(Const(expr.exponent), power(expr.base, expr.exponent - 1)), da)
    raise TypeError(f"not an expression node: {expr!r}")


# ---------------------------------------------------------------------------
# Postfix compilation for the simulation kernels

OP_CONST = 0
OP_VAR = 1
OP_ADD = 2
OP_SUB = 3
OP_MUL = 4
OP_DIV = 5
OP_NEG = 6
OP_POW = 7


class ProgramSet:
    """Several expressions flattened to one postfix instruction array.

    ``code`` is ``(n, 2)`` int32 (opcode, argument), ``offsets`` delimits the
    instruction range of each expression, ``consts`` is the literal table.
    Executing expression ``i`` leaves its value on top of an operand stack of
    depth at most ``max_stack``.
    """

    def __init__(self, code, offsets, consts, n_vars, max_stack):
        self.code = code
        self.offsets = offsets
        self.consts = consts
        self.n_vars = n_vars
        self.max_stack = max_stack

    def __len__(self):
        return len(self.offsets) - 1


def _emit(node, code, consts):
    if isinstance(node, Const):
        code.append((OP_CONST, len(consts)))
        consts.append(node.value)
        return 1
    if isinstance(node, Var):
        code.append((OP_VAR, node.index))
        return 1
    if isinstance(node, (Add, Sub, Mul, Div)):
        dl = _emit(node.left, code, consts)
        dr = _emit(node.right, code, consts)
        op = {Add: OP_ADD, Sub: OP_SUB, Mul: OP_MUL, Div: OP_DIV}[type(node)]
        code.append((op, 0))
        return max(dl, 1 + dr)
    if isinstance(node, Neg):
        depth = _emit(node.operand, code, consts)
        code.append((OP_NEG, 0))
        return depth
    if isinstance(node, Pow):
        depth = _emit(node.base, code, consts)
        code.append((OP_POW, node.exponent))
        return depth
    raise TypeError(f"not an expression node: {node!r}")


def compile_programs(exprs, n_vars):
    """Compile a sequence of expressions into a single `ProgramSet`."""
    code = []
    consts = []
    offsets = [0]
    max_stack = 1
    for expr in exprs:
        max_stack = max(max_stack, _emit(expr, code, consts))
        offsets.append(len(code))
    return ProgramSet(
        code=np.array(code, dtype=np.int32).reshape(-1, 2),
        offsets=np.array(offsets, dtype=np.int32),
        consts=np.array(consts, dtype=np.float64),
        n_vars=n_vars,
        max_stack=max_stack,
    )
