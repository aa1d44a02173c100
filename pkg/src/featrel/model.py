"""Black-box target functions.

A model maps a real feature vector of fixed length (its arity) to a real
number. Two concrete bodies are supported: expressions written in a small
arithmetic language over the variables ``x1 .. xn``, and linear models
``a0 + sum_i a_i x_i``. Everything here is immutable and evaluation is pure.

Feature indices are 0-based in the Python API; the expression language
uses 1-based variable names (``x1`` is column 0).
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
import scipy.linalg

from .errors import (
    DimensionError,
    ExpressionSyntaxError,
    NonFiniteError,
    SingularMatrixError,
    UsageError,
)

__all__ = [
    "Const",
    "Var",
    "Neg",
    "BinOp",
    "Call",
    "ModelFunction",
    "Expression",
    "LinearModel",
    "FunctionModel",
    "parse_expression",
    "to_source",
    "evaluate",
    "combine",
    "fit_linear_ols",
    "analytic_linear_attribution",
    "gradient_fd",
]

_MOD = "model-core"
OLS_CONDITION_LIMIT = 1e12
DEFAULT_FD_STEP = 1e-5


# ---------------------------------------------------------------------------
# Expression tree
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Const:
    value: float


@dataclass(frozen=True)
class Var:
    index: int  # 1-based, as written in source


@dataclass(frozen=True)
class Neg:
    operand: object


@dataclass(frozen=True)
class BinOp:
    op: str  # one of + - * / ^
    left: object
    right: object


@dataclass(frozen=True)
class Call:
    func: str  # exp, log, min, max
    args: tuple


FUNCTION_ARITY = {"exp": 1, "log": 1, "min": 2, "max": 2}

_BINARY = {
    "+": np.add,
    "-": np.subtract,
    "*": np.multiply,
    "/": np.divide,
    "^": np.power,
}
_CALLS = {"exp": np.exp, "log": np.log, "min": np.minimum, "max": np.maximum}


def _eval_node(node, X):
    # X has shape (rows, n); returns an array of shape (rows,). No finiteness checks.
    if isinstance(node, Const):
        return np.full(X.shape[0], node.value, dtype=float)
    if isinstance(node, Var):
        return X[:, node.index - 1]
    if isinstance(node, Neg):
        return -_eval_node(node.operand, X)
    if isinstance(node, BinOp):
        return _BINARY[node.op](_eval_node(node.left, X), _eval_node(node.right, X))
    if isinstance(node, Call):
        return _CALLS[node.func](*(_eval_node(a, X) for a in node.args))
    raise TypeError(f"not an expression node: {node!r}")


def _variables(node, acc):
    if isinstance(node, Var):
        acc.add(node.index)
    elif isinstance(node, Neg):
        _variables(node.operand, acc)
    elif isinstance(node, BinOp):
        _variables(node.left, acc)
        _variables(node.right, acc)
    elif isinstance(node, Call):
        for a in node.args:
            _variables(a, acc)
    return acc


def to_source(node) -> str:
    """Print an expression tree as fully parenthesised source text.

    The output parses back to a tree that evaluates bitwise-identically.
    """
    if isinstance(node, Const):
        v = float(node.value)
        text = repr(abs(v))
        return f"(-{text})" if math.copysign(1.0, v) < 0 else text
    if isinstance(node, Var):
        return f"x{node.index}"
    if isinstance(node, Neg):
        return f"(-{to_source(node.operand)})"
    if isinstance(node, BinOp):
        return f"({to_source(node.left)} {node.op} {to_source(node.right)})"
    if isinstance(node, Call):
        return f"{node.func}({', '.join(to_source(a) for a in node.args)})"
    raise TypeError(f"not an expression node: {node!r}")


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<number>(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?)
  | (?P<ident>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op>[-+*/^(),])
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class _Token:
    kind: str  # number, var, func, op, end
    text: str
    pos: int


def _tokenize(source):
    tokens = []
    pos = 0
    while pos < len(source):
        m = _TOKEN_RE.match(source, pos)
        if m is None:
            raise ExpressionSyntaxError(
                f"unexpected character {source[pos]!r}", pos, ("number", "variable", "function", "operator", "parenthesis")
            )
        kind = m.lastgroup
        text = m.group()
        if kind == "ident":
            if re.fullmatch(r"x\d+", text):
                kind = "var"
            elif text in FUNCTION_ARITY:
                kind = "func"
            else:
                raise ExpressionSyntaxError(
                    f"unknown identifier {text!r}", pos, ("x<digits>", *FUNCTION_ARITY)
                )
        if kind != "ws":
            tokens.append(_Token(kind, text, pos))
        pos = m.end()
    tokens.append(_Token("end", "", len(source)))
    return tokens


_BASE_START = ("<number>", "x<digits>", "(", "-", "exp", "log", "min", "max")


class _Parser:
    def __init__(self, source, arity):
        self.tokens = _tokenize(source)
        self.i = 0
        self.arity = arity

    @property
    def tok(self):
        return self.tokens[self.i]

    def _advance(self):
        t = self.tokens[self.i]
        self.i += 1
        return t

    def _expect(self, text):
        if self.tok.text != text or self.tok.kind != "op":
            self._fail((text,))
        return self._advance()

    def _fail(self, expected):
        found = self.tok.text or "end of input"
        raise ExpressionSyntaxError(f"unexpected {found!r}", self.tok.pos, expected)

    def parse(self):
        if self.tok.kind == "end":
            raise ExpressionSyntaxError("empty expression", 0, _BASE_START)
        node = self.expr()
        if self.tok.kind != "end":
            self._fail(("+", "-", "*", "/", "^", "end of input"))
        return node

    def expr(self):
        node = self.term()
        while self.tok.kind == "op" and self.tok.text in "+-":
            op = self._advance().text
            node = BinOp(op, node, self.term())
        return node

    def term(self):
        node = self.factor()
        while self.tok.kind == "op" and self.tok.text in "*/":
            op = self._advance().text
            node = BinOp(op, node, self.factor())
        return node

    def factor(self):
        node = self.base()
        if self.tok.kind == "op" and self.tok.text == "^":
            self._advance()
            node = BinOp("^", node, self.factor())
        return node

    def base(self):
        tok = self.tok
        if tok.kind == "number":
            self._advance()
            return Const(float(tok.text))
        if tok.kind == "var":
            self._advance()
            index = int(tok.text[1:])
            if index < 1 or index > self.arity:
                raise UsageError(f"variable {tok.text} at position {tok.pos} out of range for arity {self.arity}", module=_MOD)
            return Var(index)
        if tok.kind == "op" and tok.text == "(":
            self._advance()
            node = self.expr()
            self._expect(")")
            return node
        if tok.kind == "op" and tok.text == "-":
            self._advance()
            # unary minus binds looser than ^ so that -x1^2 == -(x1^2)
            return Neg(self.factor())
        if tok.kind == "func":
            self._advance()
            self._expect("(")
            args = [self.expr()]
            if FUNCTION_ARITY[tok.text] == 2:
                self._expect(",")
                args.append(self.expr())
            self._expect(")")
            return Call(tok.text, tuple(args))
        self._fail(_BASE_START)


# ---------------------------------------------------------------------------
# Models
# ---------------------------------------------------------------------------


class ModelFunction:
    """A pure map from R^arity to R.

    Subclasses implement ``_raw_batch`` (vectorised, no checks) and
    ``depends_on``.
    """

    arity: int

    def _raw_batch(self, X: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def depends_on(self) -> frozenset:
        """0-based indices of the features the model syntactically uses."""
        return frozenset(range(self.arity))

    def evaluate_batch(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != self.arity:
            raise DimensionError(f"expected rows of length {self.arity}, got shape {X.shape}", module=_MOD)
        with np.errstate(all="ignore"):
            out = np.asarray(self._raw_batch(X), dtype=float)
        bad = ~np.isfinite(out)
        if bad.any():
            row = int(np.argmax(bad))
            raise NonFiniteError(f"non-finite model output at input {X[row].tolist()}", row)
        return out

    def evaluate(self, x) -> float:
        x = np.asarray(x, dtype=float)
        if x.ndim != 1:
            raise DimensionError(f"expected a vector, got shape {x.shape}", module=_MOD)
        return float(self.evaluate_batch(x[None, :])[0])

    def __call__(self, x):
        return self.evaluate(x)


class Expression(ModelFunction):
    def __init__(self, root, arity: int, source: str | None = None):
        if arity < 1:
            raise UsageError("arity must be >= 1", module=_MOD)
        used = _variables(root, set())
        if used and max(used) > arity:
            raise UsageError(f"variable x{max(used)} out of range for arity {arity}", module=_MOD)
        self.root = root
        self.arity = int(arity)
        self.source = source if source is not None else to_source(root)

    def _raw_batch(self, X):
        return _eval_node(self.root, X)

    def depends_on(self):
        return frozenset(i - 1 for i in _variables(self.root, set()))

    def to_source(self):
        return to_source(self.root)

    def __repr__(self):
        return f"Expression({self.source!r}, arity={self.arity})"


@dataclass(frozen=True, eq=False)
class LinearModel(ModelFunction):
    """``intercept + coefficients @ x``."""

    intercept: float
    coefficients: np.ndarray

    def __post_init__(self):
        coef = np.array(self.coefficients, dtype=float).reshape(-1)
        if coef.size < 1:
            raise UsageError("a linear model needs at least one coefficient", module=_MOD)
        coef.flags.writeable = False
        object.__setattr__(self, "coefficients", coef)
        object.__setattr__(self, "intercept", float(self.intercept))

    @property
    def arity(self):
        return self.coefficients.size

    def _raw_batch(self, X):
        return self.intercept + X @ self.coefficients

    def depends_on(self):
        return frozenset(int(i) for i in np.flatnonzero(self.coefficients))

    def to_expression(self) -> Expression:
        node = Const(self.intercept)
        for i, a in enumerate(self.coefficients, start=1):
            node = BinOp("+", node, BinOp("*", Const(float(a)), Var(i)))
        return Expression(node, self.arity)

    def to_dict(self):
        return {"intercept": self.intercept, "coefficients": self.coefficients.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(d["intercept"], d["coefficients"])


class FunctionModel(ModelFunction):
    """Wrap a vectorised callable ``fn(X) -> y`` for X of shape (rows, arity)."""

    def __init__(self, fn: Callable[[np.ndarray], np.ndarray], arity: int):
        self.fn = fn
        self.arity = int(arity)

    def _raw_batch(self, X):
        return self.fn(X)


def parse_expression(source: str, arity: int) -> Expression:
    """Parse ``source`` into an :class:`Expression` over ``x1 .. x{arity}``.

    Precedence from tightest: ``^`` (right associative), unary ``-``,
    ``* /``, ``+ -``; binary operators of equal precedence associate left.

    >>> parse_expression("2*x1 + 3*x2", 2).evaluate([1, 1])
    5.0
    """
    if arity < 1:
        raise UsageError("arity must be >= 1", module=_MOD)
    root = _Parser(source, arity).parse()
    return Expression(root, arity, source)


def evaluate(model: ModelFunction, x) -> float:
    return model.evaluate(x)


def _as_expression(model):
    if isinstance(model, Expression):
        return model
    if isinstance(model, LinearModel):
        return model.to_expression()
    raise UsageError(f"cannot combine {type(model).__name__}", module=_MOD)


def combine(a: float, f1: ModelFunction, b: float, f2: ModelFunction) -> ModelFunction:
    """The model ``a*f1 + b*f2``."""
    if f1.arity != f2.arity:
        raise DimensionError("cannot combine models of different arity", module=_MOD)
    if isinstance(f1, LinearModel) and isinstance(f2, LinearModel):
        return LinearModel(
            a * f1.intercept + b * f2.intercept, a * f1.coefficients + b * f2.coefficients
        )
    e1, e2 = _as_expression(f1), _as_expression(f2)
    root = BinOp("+", BinOp("*", Const(float(a)), e1.root), BinOp("*", Const(float(b)), e2.root))
    return Expression(root, f1.arity)


# ---------------------------------------------------------------------------
# Fitting and ground truth
# ---------------------------------------------------------------------------


def fit_linear_ols(data, target_column: int, predictors: Sequence[int] | None = None) -> LinearModel:
    """Ordinary least squares fit of one column on the others.

    ``data`` is a :class:`featrel.data.SampleMatrix` or a 2-D array. By
    default every column except ``target_column`` is a predictor, in column
    order. Columns are centred and scaled before forming the normal
    equations, which are then solved by Cholesky factorisation.
    """
    values = np.asarray(getattr(data, "values", data), dtype=float)
    if values.ndim != 2:
        raise DimensionError("data must be a matrix", module=_MOD)
    k, n = values.shape
    if not 0 <= target_column < n:
        raise DimensionError(f"target column {target_column} out of range", module=_MOD)
    if predictors is None:
        predictors = [j for j in range(n) if j != target_column]
    predictors = list(predictors)
    p = len(predictors)
    if k < p + 1:
        raise UsageError(f"OLS needs at least {p + 1} rows, got {k}", module=_MOD)

    X = values[:, predictors]
    y = values[:, target_column]
    x_mean = X.mean(axis=0)
    y_mean = y.mean()
    Xc = X - x_mean
    scale = np.sqrt((Xc**2).sum(axis=0))
    if np.any(scale == 0.0):
        col = predictors[int(np.argmin(scale))]
        raise SingularMatrixError(
            f"predictor column {col} is constant (collinear with the intercept)",
            condition=math.inf,
            module=_MOD,
        )
    Xs = Xc / scale
    gram = Xs.T @ Xs
    eig = np.linalg.eigvalsh(gram)
    cond = math.inf if eig[0] <= 0 else eig[-1] / eig[0]
    if cond > OLS_CONDITION_LIMIT:
        raise SingularMatrixError(
            f"normal equations are singular (condition number ~ {cond:.3g})",
            condition=cond,
            module=_MOD,
        )
    factor = scipy.linalg.cho_factor(gram)
    beta = scipy.linalg.cho_solve(factor, Xs.T @ (y - y_mean)) / scale
    intercept = y_mean - x_mean @ beta
    return LinearModel(intercept, beta)


def analytic_linear_attribution(model: LinearModel, x, means) -> np.ndarray:
    """Ground-truth attribution ``a_j * (x_j - E[X_j])`` of a linear model."""
    x = np.asarray(x, dtype=float)
    means = np.asarray(means, dtype=float)
    if x.shape != (model.arity,) or means.shape != (model.arity,):
        raise DimensionError(f"expected vectors of length {model.arity}, got {x.shape} and {means.shape}", module=_MOD)
    return model.coefficients * (x - means)


def _fd_steps(x, step):
    return step * np.maximum(1.0, np.abs(x))


def gradients_fd(model: ModelFunction, points, step: float = DEFAULT_FD_STEP) -> np.ndarray:
    """Central-difference gradients at each row of ``points``.

    Returns an array with the same shape as ``points``. Raises
    :class:`NonFiniteError` naming the first offending point.
    """
    if step <= 0:
        raise UsageError("finite-difference step must be positive", module=_MOD)
    P = np.asarray(points, dtype=float)
    if P.ndim != 2 or P.shape[1] != model.arity:
        raise DimensionError(f"expected rows of length {model.arity}", module=_MOD)
    m, n = P.shape
    h = _fd_steps(P, step)  # (m, n)
    eye = np.eye(n)
    plus = (P[:, None, :] + h[:, :, None] * eye[None]).reshape(-1, n)
    minus = (P[:, None, :] - h[:, :, None] * eye[None]).reshape(-1, n)
    with np.errstate(all="ignore"):
        fp = np.asarray(model._raw_batch(plus), dtype=float).reshape(m, n)
        fm = np.asarray(model._raw_batch(minus), dtype=float).reshape(m, n)
    grad = (fp - fm) / (2.0 * h)
    bad = ~np.isfinite(grad)
    if bad.any():
        row = int(np.argmax(bad.any(axis=1)))
        raise NonFiniteError(f"non-finite model output near {P[row].tolist()}", row)
    return grad


def gradient_fd(model: ModelFunction, x, step: float = DEFAULT_FD_STEP) -> np.ndarray:
    """Central-difference gradient with per-coordinate step ``step * max(1, |x_i|)``."""
    x = np.asarray(x, dtype=float)
    if x.shape != (model.arity,):
        raise DimensionError(f"expected a vector of length {model.arity}", module=_MOD)
    return gradients_fd(model, x[None, :], step)[0]
