"""Problem representation: complementarity programs as expression trees.

A problem instance holds an objective, ``n_pairs`` complementarity pairs
``(F1_j, F2_j)`` (feasibility means ``F1_j >= 0``, ``F2_j >= 0`` and
``F1_j * F2_j = 0``), optional side constraints ``g(x) >= 0`` / ``h(x) = 0``,
and a start vector. All functions are expression trees from
:mod:`mpccreg.expr`, so exact gradients and Hessians are available
everywhere.

The text format is line oriented with ``#`` comments::

    problem NAME          # optional
    vars x1 x2 ... xn     # canonical names, in order
    objective EXPR
    pair (EXPR, EXPR)     # one or more
    ineq EXPR             # zero or more, meaning EXPR >= 0
    eq EXPR               # zero or more, meaning EXPR = 0
    start NUMBER ... NUMBER
"""

from __future__ import annotations

import functools
from dataclasses import dataclass, field

import numpy as np

from .expr import (
    Expression,
    ExprSyntaxError,
    evaluate as eval_expr,
    gradient_exprs,
    hessian_exprs,
    parse_expression,
    to_string,
)

__all__ = [
    "MpccProblem",
    "EvalRecord",
    "ActiveSets",
    "ProblemFormatError",
    "ClassificationRefusedError",
    "parse_problem",
    "print_problem",
    "make_problem",
    "evaluate",
    "constraint_values",
    "maxvio",
    "active_sets",
    "DEFAULT_ACTIVITY_TOL",
]

#: Default tolerance for deciding that a constraint function is active.
DEFAULT_ACTIVITY_TOL = 1e-8


class ProblemFormatError(ValueError):
    """Malformed problem text; carries the offending line (and column)."""

    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        self.line = line
        self.column = column
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ClassificationRefusedError(ValueError):
    """The query point is too infeasible for active-set classification."""

    def __init__(self, violation: float, tol: float):
        self.maxvio = violation
        super().__init__(
            f"point is infeasible (maxvio {violation:.3e} exceeds tolerance {tol:.3e})"
        )


def _max_var_index(e: Expression) -> int:
    stack = [e]
    top = -1
    while stack:
        node = stack.pop()
        for attr in ("left", "right", "base", "operand"):
            child = getattr(node, attr, None)
            if child is not None:
                stack.append(child)
        index = getattr(node, "index", None)
        if index is not None:
            top = max(top, index)
    return top


@dataclass(frozen=True)
class MpccProblem:
    """An immutable complementarity-constrained program."""

    n: int
    objective: Expression
    pairs: tuple[tuple[Expression, Expression], ...]
    side_ineq: tuple[Expression, ...] = ()
    side_eq: tuple[Expression, ...] = ()
    start: tuple[float, ...] = field(default=None)
    name: str = "unnamed"

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be at least 1")
        object.__setattr__(self, "pairs", tuple(tuple(p) for p in self.pairs))
        object.__setattr__(self, "side_ineq", tuple(self.side_ineq))
        object.__setattr__(self, "side_eq", tuple(self.side_eq))
        if len(self.pairs) < 1:
            raise ValueError("at least one complementarity pair is required")
        start = self.start
        if start is None:
            start = (0.0,) * self.n
        start = tuple(float(v) for v in start)
        if len(start) != self.n:
            raise ValueError(
                f"start vector has dimension {len(start)}, expected {self.n}"
            )
        if not all(np.isfinite(start)):
            raise ValueError("start vector must be finite")
        object.__setattr__(self, "start", start)
        for e in self._all_exprs():
            if _max_var_index(e) >= self.n:
                raise ValueError(
                    f"expression '{to_string(e)}' references a variable beyond x{self.n}"
                )

    def _all_exprs(self):
        yield self.objective
        for f1, f2 in self.pairs:
            yield f1
            yield f2
        yield from self.side_ineq
        yield from self.side_eq

    @property
    def n_pairs(self) -> int:
        return len(self.pairs)

    @property
    def start_array(self) -> np.ndarray:
        return np.array(self.start, dtype=float)


@dataclass(frozen=True, eq=False)
class EvalRecord:
    """Values, gradients, and Hessians of every defining function at a point."""

    objective: float
    objective_grad: np.ndarray  # (n,)
    objective_hess: np.ndarray  # (n, n)
    f1: np.ndarray  # (n_pairs,)
    f2: np.ndarray
    f1_grad: np.ndarray  # (n_pairs, n)
    f2_grad: np.ndarray
    f1_hess: np.ndarray  # (n_pairs, n, n)
    f2_hess: np.ndarray
    g: np.ndarray  # (len(side_ineq),)
    g_grad: np.ndarray
    g_hess: np.ndarray
    h: np.ndarray  # (len(side_eq),)
    h_grad: np.ndarray
    h_hess: np.ndarray


@dataclass(frozen=True)
class ActiveSets:
    """Partition of pair indices by which factor vanishes at the point.

    ``zero1`` holds pairs with ``F1 = 0 < F2``, ``zero2`` the mirror image, and
    ``both_zero`` the biactive pairs where both factors vanish. Indices are
    zero-based.
    """

    zero1: tuple[int, ...]
    zero2: tuple[int, ...]
    both_zero: tuple[int, ...]
    tol: float


class _Compiled:
    """Derivative tables for one scalar function."""

    __slots__ = ("value", "grad", "hess")

    def __init__(self, e: Expression, n: int):
        self.value = e
        self.grad = gradient_exprs(e, n)
        self.hess = hessian_exprs(e, n)

    def eval_all(self, x: np.ndarray):
        n = len(self.grad)
        v = eval_expr(self.value, x)
        g = np.array([eval_expr(d, x) for d in self.grad])
        H = np.empty((n, n))
        for i in range(n):
            for j in range(i, n):
                H[i, j] = H[j, i] = eval_expr(self.hess[i][j], x)
        return v, g, H


class _CompiledProblem:
    __slots__ = ("objective", "f1", "f2", "g", "h")

    def __init__(self, p: MpccProblem):
        self.objective = _Compiled(p.objective, p.n)
        self.f1 = [_Compiled(f1, p.n) for f1, _ in p.pairs]
        self.f2 = [_Compiled(f2, p.n) for _, f2 in p.pairs]
        self.g = [_Compiled(e, p.n) for e in p.side_ineq]
        self.h = [_Compiled(e, p.n) for e in p.side_eq]


@functools.lru_cache(maxsize=256)
def _compiled(p: MpccProblem) -> _CompiledProblem:
    return _CompiledProblem(p)


def _check_dim(p: MpccProblem, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape[0] != p.n:
        raise ValueError(f"point has dimension {x.shape[0]}, expected {p.n}")
    return x


def evaluate(p: MpccProblem, x: np.ndarray) -> EvalRecord:
    """Evaluate every defining function with exact derivatives at ``x``."""
    x = _check_dim(p, x)
    if x.ndim != 1:
        raise ValueError("evaluate takes a single point; see constraint_values")
    c = _compiled(p)
    n, n_pairs = p.n, p.n_pairs

    def stack(codes):
        m = len(codes)
        vals = np.empty(m)
        grads = np.empty((m, n))
        hesses = np.empty((m, n, n))
        for i, code in enumerate(codes):
            vals[i], grads[i], hesses[i] = code.eval_all(x)
        return vals, grads, hesses

    fv, fg, fH = c.objective.eval_all(x)
    f1, f1g, f1H = stack(c.f1)
    f2, f2g, f2H = stack(c.f2)
    g, gg, gH = stack(c.g)
    h, hg, hH = stack(c.h)
    return EvalRecord(
        objective=fv,
        objective_grad=fg,
        objective_hess=fH,
        f1=f1,
        f2=f2,
        f1_grad=f1g,
        f2_grad=f2g,
        f1_hess=f1H,
        f2_hess=f2H,
        g=g,
        g_grad=gg,
        g_hess=gH,
        h=h,
        h_grad=hg,
        h_hess=hH,
    )


def constraint_values(p: MpccProblem, X: np.ndarray):
    """Batched constraint values at points ``X`` of shape (n, m).

    Returns ``(F1, F2, G, H)`` with shapes (n_pairs, m), (n_pairs, m),
    (len(side_ineq), m), (len(side_eq), m).
    """
    X = _check_dim(p, X)
    if X.ndim == 1:
        X = X[:, None]
    m = X.shape[1]

    def rows(exprs):
        out = np.empty((len(exprs), m))
        for i, e in enumerate(exprs):
            out[i] = eval_expr(e, X)
        return out

    F1 = rows([f1 for f1, _ in p.pairs])
    F2 = rows([f2 for _, f2 in p.pairs])
    G = rows(list(p.side_ineq))
    H = rows(list(p.side_eq))
    return F1, F2, G, H


def maxvio(p: MpccProblem, x: np.ndarray) -> float:
    """Maximum constraint violation of ``x`` for the complementarity program.

    The measure is ``max{ -min(0, g), |h|, |min(F1, F2)| }`` over all
    components; it is zero exactly on feasible points.
    """
    x = _check_dim(p, np.asarray(x, dtype=float))
    F1, F2, G, H = constraint_values(p, x)
    worst = float(np.max(np.abs(np.minimum(F1, F2))))
    if G.size:
        worst = max(worst, float(np.max(-np.minimum(0.0, G))))
    if H.size:
        worst = max(worst, float(np.max(np.abs(H))))
    return worst


def active_sets(
    p: MpccProblem, x: np.ndarray, tol: float = DEFAULT_ACTIVITY_TOL
) -> ActiveSets:
    """Partition pair indices into zero1/zero2/both_zero at a feasible point.

    Raises :class:`ClassificationRefusedError` when the point violates
    feasibility by more than ``tol``.
    """
    if tol < 0:
        raise ValueError("tol must be nonnegative")
    x = _check_dim(p, np.asarray(x, dtype=float))
    violation = maxvio(p, x)
    if violation > tol:
        raise ClassificationRefusedError(violation, tol)
    F1, F2, _, _ = constraint_values(p, x)
    f1 = F1[:, 0]
    f2 = F2[:, 0]
    zero1, zero2, both_zero = [], [], []
    for j in range(p.n_pairs):
        one = abs(f1[j]) <= tol
        two = abs(f2[j]) <= tol
        if one and two:
            both_zero.append(j)
        elif one and f2[j] > tol:
            zero1.append(j)
        elif two and f1[j] > tol:
            zero2.append(j)
    return ActiveSets(zero1=tuple(zero1), zero2=tuple(zero2), both_zero=tuple(both_zero), tol=tol)


# ---------------------------------------------------------------------------
# Text format
# ---------------------------------------------------------------------------


def _split_pair(body: str, line_no: int) -> tuple[str, str]:
    body = body.strip()
    if not (body.startswith("(") and body.endswith(")")):
        raise ProblemFormatError("pair must be written as (EXPR, EXPR)", line=line_no)
    inner = body[1:-1]
    depth = 0
    split_at = None
    for i, ch in enumerate(inner):
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
        elif ch == "," and depth == 0:
            if split_at is not None:
                raise ProblemFormatError(
                    "pair must contain exactly one top-level comma", line=line_no
                )
            split_at = i
    if split_at is None:
        raise ProblemFormatError(
            "pair must contain exactly one top-level comma", line=line_no
        )
    return inner[:split_at], inner[split_at + 1 :]


_SECTIONS = ("problem", "vars", "objective", "pair", "ineq", "eq", "start")


def parse_problem(text: str) -> MpccProblem:
    """Parse the line-oriented problem format into an :class:`MpccProblem`."""
    name = "unnamed"
    n = None
    objective = None
    pairs: list[tuple[Expression, Expression]] = []
    ineqs: list[Expression] = []
    eqs: list[Expression] = []
    start = None
    stage = -1  # index into _SECTIONS of the last keyword seen

    def parse_expr(src: str, line_no: int, offset: int) -> Expression:
        if n is None:
            raise ProblemFormatError("'vars' must come before expressions", line=line_no)
        try:
            return parse_expression(src, n_vars=n)
        except ExprSyntaxError as exc:
            column = exc.column + offset if exc.column is not None else None
            raise ProblemFormatError(str(exc), line=line_no, column=column) from exc

    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        keyword, _, body = line.partition(" ")
        body = body.strip()
        if keyword not in _SECTIONS:
            raise ProblemFormatError(f"unknown keyword {keyword!r}", line=line_no)
        order = _SECTIONS.index(keyword)
        if order <= stage and keyword != "pair" and keyword != "ineq" and keyword != "eq":
            raise ProblemFormatError(f"duplicate or out-of-order {keyword!r}", line=line_no)
        if order < stage:
            raise ProblemFormatError(
                f"{keyword!r} must appear before "
                f"{_SECTIONS[stage]!r}", line=line_no
            )
        stage = order

        if keyword == "problem":
            if not body or len(body.split()) != 1:
                raise ProblemFormatError("problem line takes a single name", line=line_no)
            name = body
        elif keyword == "vars":
            names = body.split()
            if not names:
                raise ProblemFormatError("vars line is empty", line=line_no)
            expected = [f"x{i + 1}" for i in range(len(names))]
            if names != expected:
                raise ProblemFormatError(
                    f"variables must be named {' '.join(expected)}", line=line_no
                )
            n = len(names)
        elif keyword == "objective":
            objective = parse_expr(body, line_no, offset=len(raw) - len(body))
        elif keyword == "pair":
            left, right = _split_pair(body, line_no)
            offset = len(raw) - len(body)
            pairs.append(
                (parse_expr(left, line_no, offset), parse_expr(right, line_no, offset))
            )
        elif keyword == "ineq":
            ineqs.append(parse_expr(body, line_no, offset=len(raw) - len(body)))
        elif keyword == "eq":
            eqs.append(parse_expr(body, line_no, offset=len(raw) - len(body)))
        elif keyword == "start":
            try:
                start = tuple(float(tok) for tok in body.split())
            except ValueError as exc:
                raise ProblemFormatError(f"bad number in start: {exc}", line=line_no)
            if n is not None and len(start) != n:
                raise ProblemFormatError(
                    f"start has {len(start)} entries, expected {n}", line=line_no
                )

    if n is None:
        raise ProblemFormatError("missing 'vars' line")
    if objective is None:
        raise ProblemFormatError("missing 'objective' line")
    if not pairs:
        raise ProblemFormatError("missing 'pair' line")
    if start is None:
        raise ProblemFormatError("missing 'start' line")
    return MpccProblem(
        n=n,
        objective=objective,
        pairs=tuple(pairs),
        side_ineq=tuple(ineqs),
        side_eq=tuple(eqs),
        start=start,
        name=name,
    )


def print_problem(p: MpccProblem) -> str:
    """Render a problem in the text format; parses back structurally equal."""
    lines = []
    if p.name != "unnamed":
        lines.append(f"problem {p.name}")
    lines.append("vars " + " ".join(f"x{i + 1}" for i in range(p.n)))
    lines.append(f"objective {to_string(p.objective)}")
    for f1, f2 in p.pairs:
        lines.append(f"pair ({to_string(f1)}, {to_string(f2)})")
    for e in p.side_ineq:
        lines.append(f"ineq {to_string(e)}")
    for e in p.side_eq:
        lines.append(f"eq {to_string(e)}")
    lines.append("start " + " ".join(repr(v) for v in p.start))
    return "\n".join(lines) + "\n"


def make_problem(
    n: int,
    objective: str,
    pairs,
    ineq=(),
    eq=(),
    start=None,
    name: str = "unnamed",
) -> MpccProblem:
    """Build a problem from expression strings (convenience constructor)."""
    if n < 1:
        raise ValueError("n must be at least 1")
    return MpccProblem(
        n=n,
        objective=parse_expression(objective, n_vars=n),
        pairs=tuple(
            (parse_expression(a, n_vars=n), parse_expression(b, n_vars=n))
            for a, b in pairs
        ),
        side_ineq=tuple(parse_expression(e, n_vars=n) for e in ineq),
        side_eq=tuple(parse_expression(e, n_vars=n) for e in eq),
        start=start,
        name=name,
    )
