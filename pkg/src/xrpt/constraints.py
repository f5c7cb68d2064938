"""Quantifier-free linear integer constraints: AST, parsing, rewriting.

The formula language is boolean combinations (``&&``, ``||``, ``!``) of
comparisons (``= != < <= > >=``) between linear arithmetic expressions over
named integer variables with bounded domains.  All values are immutable;
every function here is pure.

Core operations:

- :func:`evaluate` -- first-order truth under a total assignment
- :func:`push_negations` -- negation normal form (NNF)
- :func:`substitute` -- simultaneous substitution with constant folding
  (boolean structure is preserved so violation degrees stay meaningful)
- :func:`violations_degree` -- distance-to-satisfaction of an NNF formula
- :func:`simplify` -- canonical form with tautology/contradiction pruning,
  optionally aware of variable bounds
- :func:`parse_constraint` / :func:`parse_update` -- the textual syntax used
  in model files (grammar in README)
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping


class ConstraintError(Exception):
    """Base class for constraint-language errors."""


class UnboundVariableError(ConstraintError):
    """An assignment does not cover a free variable."""


class NonlinearError(ConstraintError):
    """An operation would produce a variable-by-variable product."""


class NotInNNFError(ConstraintError):
    """A NOT node was found where negation normal form is required."""


class ParseError(ConstraintError):
    """Malformed constraint or update text."""


# ---------------------------------------------------------------------------
# Arithmetic expressions
# ---------------------------------------------------------------------------

class ArithExpr:
    """Linear integer expression tree."""

    __slots__ = ()

    def free_vars(self) -> set[str]:
        out: set[str] = set()
        _collect_arith_vars(self, out)
        return out


@dataclass(frozen=True, slots=True)
class Const(ArithExpr):
    value: int


@dataclass(frozen=True, slots=True)
class Var(ArithExpr):
    name: str


@dataclass(frozen=True, slots=True)
class Add(ArithExpr):
    left: ArithExpr
    right: ArithExpr


@dataclass(frozen=True, slots=True)
class Sub(ArithExpr):
    left: ArithExpr
    right: ArithExpr


@dataclass(frozen=True, slots=True)
class Mul(ArithExpr):
    """Constant multiple; the coefficient side is always an integer."""

    coeff: int
    expr: ArithExpr


def _collect_arith_vars(e: ArithExpr, out: set[str]) -> None:
    if isinstance(e, Var):
        out.add(e.name)
    elif isinstance(e, (Add, Sub)):
        _collect_arith_vars(e.left, out)
        _collect_arith_vars(e.right, out)
    elif isinstance(e, Mul):
        _collect_arith_vars(e.expr, out)


def eval_arith(e: ArithExpr, a: Mapping[str, int]) -> int:
    """Evaluate in unbounded signed integer arithmetic (never wraps)."""
    if isinstance(e, Const):
        return e.value
    if isinstance(e, Var):
        try:
            return a[e.name]
        except KeyError:
            raise UnboundVariableError(e.name) from None
    if isinstance(e, Add):
        return eval_arith(e.left, a) + eval_arith(e.right, a)
    if isinstance(e, Sub):
        return eval_arith(e.left, a) - eval_arith(e.right, a)
    if isinstance(e, Mul):
        return e.coeff * eval_arith(e.expr, a)
    raise TypeError(f"not an arithmetic expression: {e!r}")


def subst_arith(e: ArithExpr, s: Mapping[str, "ArithExpr | int"]) -> ArithExpr:
    """Simultaneous substitution, followed by constant folding."""
    return fold_arith(_subst_arith(e, s))


def _subst_arith(e: ArithExpr, s: Mapping[str, "ArithExpr | int"]) -> ArithExpr:
    if isinstance(e, Var) and e.name in s:
        rep = s[e.name]
        return Const(rep) if isinstance(rep, int) else rep
    if isinstance(e, Add):
        return Add(_subst_arith(e.left, s), _subst_arith(e.right, s))
    if isinstance(e, Sub):
        return Sub(_subst_arith(e.left, s), _subst_arith(e.right, s))
    if isinstance(e, Mul):
        return Mul(e.coeff, _subst_arith(e.expr, s))
    return e


def fold_arith(e: ArithExpr) -> ArithExpr:
    """Fold constant subtrees; rebuilds a compact tree from linear form."""
    coeffs, const = linear_form(e)
    return _from_linear(coeffs, const)


def linear_form(e: ArithExpr) -> tuple[dict[str, int], int]:
    """Return ``({var: coeff}, constant)`` for a linear expression."""
    coeffs: dict[str, int] = {}
    const = _linear_into(e, 1, coeffs)
    return {v: c for v, c in coeffs.items() if c != 0}, const


def _linear_into(e: ArithExpr, k: int, coeffs: dict[str, int]) -> int:
    if isinstance(e, Const):
        return k * e.value
    if isinstance(e, Var):
        coeffs[e.name] = coeffs.get(e.name, 0) + k
        return 0
    if isinstance(e, Add):
        return _linear_into(e.left, k, coeffs) + _linear_into(e.right, k, coeffs)
    if isinstance(e, Sub):
        return _linear_into(e.left, k, coeffs) + _linear_into(e.right, -k, coeffs)
    if isinstance(e, Mul):
        return _linear_into(e.expr, k * e.coeff, coeffs)
    raise TypeError(f"not an arithmetic expression: {e!r}")


def from_linear(coeffs: Mapping[str, int], const: int) -> ArithExpr:
    """Rebuild a compact expression tree from ``({var: coeff}, constant)``."""
    return _from_linear(coeffs, const)


def _from_linear(coeffs: Mapping[str, int], const: int) -> ArithExpr:
    expr: ArithExpr | None = None
    for name in sorted(coeffs):
        c = coeffs[name]
        term: ArithExpr = Var(name) if c in (1, -1) else Mul(abs(c), Var(name))
        if expr is None:
            expr = Sub(Const(0), term) if c < 0 else term
        elif c < 0:
            expr = Sub(expr, term)
        else:
            expr = Add(expr, term)
    if expr is None:
        return Const(const)
    if const > 0:
        expr = Add(expr, Const(const))
    elif const < 0:
        expr = Sub(expr, Const(-const))
    return expr


# ---------------------------------------------------------------------------
# Constraints
# ---------------------------------------------------------------------------

#: comparison operators in model-file syntax
CMP_OPS = ("=", "!=", "<", "<=", ">", ">=")

_NEGATED_OP = {"=": "!=", "!=": "=", "<": ">=", "<=": ">", ">": "<=", ">=": "<"}


class ConstraintExpr:
    """Boolean formula tree over comparisons."""

    __slots__ = ()

    def free_vars(self) -> set[str]:
        out: set[str] = set()
        _collect_vars(self, out)
        return out

    def __str__(self) -> str:  # pragma: no cover - convenience
        return render(self)


@dataclass(frozen=True, slots=True)
class BoolConst(ConstraintExpr):
    value: bool


TRUE = BoolConst(True)
FALSE = BoolConst(False)


@dataclass(frozen=True, slots=True)
class Cmp(ConstraintExpr):
    left: ArithExpr
    op: str
    right: ArithExpr

    def __post_init__(self) -> None:
        if self.op not in CMP_OPS:
            raise ConstraintError(f"unknown comparison operator {self.op!r}")


@dataclass(frozen=True, slots=True)
class And(ConstraintExpr):
    items: tuple[ConstraintExpr, ...]


@dataclass(frozen=True, slots=True)
class Or(ConstraintExpr):
    items: tuple[ConstraintExpr, ...]


@dataclass(frozen=True, slots=True)
class Not(ConstraintExpr):
    item: ConstraintExpr


def conj(items: Iterable[ConstraintExpr]) -> ConstraintExpr:
    """Conjunction without simplification (flattens nested ANDs)."""
    flat: list[ConstraintExpr] = []
    for it in items:
        if isinstance(it, And):
            flat.extend(it.items)
        elif it is not TRUE:
            flat.append(it)
    if not flat:
        return TRUE
    if len(flat) == 1:
        return flat[0]
    return And(tuple(flat))


def disj(items: Iterable[ConstraintExpr]) -> ConstraintExpr:
    """Disjunction without simplification (flattens nested ORs)."""
    flat: list[ConstraintExpr] = []
    for it in items:
        if isinstance(it, Or):
            flat.extend(it.items)
        elif it is not FALSE:
            flat.append(it)
    if not flat:
        return FALSE
    if len(flat) == 1:
        return flat[0]
    return Or(tuple(flat))


def _collect_vars(c: ConstraintExpr, out: set[str]) -> None:
    if isinstance(c, Cmp):
        _collect_arith_vars(c.left, out)
        _collect_arith_vars(c.right, out)
    elif isinstance(c, (And, Or)):
        for it in c.items:
            _collect_vars(it, out)
    elif isinstance(c, Not):
        _collect_vars(c.item, out)


def evaluate(c: ConstraintExpr, a: Mapping[str, int]) -> bool:
    """Truth of ``c`` under a total assignment of its free variables."""
    if isinstance(c, BoolConst):
        return c.value
    if isinstance(c, Cmp):
        lv, rv = eval_arith(c.left, a), eval_arith(c.right, a)
        return _CMP_FUNCS[c.op](lv, rv)
    if isinstance(c, And):
        return all(evaluate(it, a) for it in c.items)
    if isinstance(c, Or):
        return any(evaluate(it, a) for it in c.items)
    if isinstance(c, Not):
        return not evaluate(c.item, a)
    raise TypeError(f"not a constraint: {c!r}")


_CMP_FUNCS = {
    "=": lambda a, b: a == b,
    "!=": lambda a, b: a != b,
    "<": lambda a, b: a < b,
    "<=": lambda a, b: a <= b,
    ">": lambda a, b: a > b,
    ">=": lambda a, b: a >= b,
}


def push_negations(c: ConstraintExpr) -> ConstraintExpr:
    """Negation normal form.  NOT over a comparison becomes the arithmetic
    complement (``!(a > b)`` -> ``a <= b``); De Morgan handles the rest."""
    return _nnf(c, False)


def _nnf(c: ConstraintExpr, neg: bool) -> ConstraintExpr:
    if isinstance(c, BoolConst):
        return TRUE if c.value != neg else FALSE
    if isinstance(c, Cmp):
        return Cmp(c.left, _NEGATED_OP[c.op], c.right) if neg else c
    if isinstance(c, Not):
        return _nnf(c.item, not neg)
    if isinstance(c, And):
        items = tuple(_nnf(it, neg) for it in c.items)
        return Or(items) if neg else And(items)
    if isinstance(c, Or):
        items = tuple(_nnf(it, neg) for it in c.items)
        return And(items) if neg else Or(items)
    raise TypeError(f"not a constraint: {c!r}")


def substitute(c: ConstraintExpr, s: Mapping[str, "ArithExpr | int"]) -> ConstraintExpr:
    """Simultaneous substitution with arithmetic constant folding.

    Boolean structure and comparisons are left intact (``0 = 6`` stays a
    comparison) so that :func:`violations_degree` can still grade the result.
    Use :func:`simplify` afterwards when tautology pruning is wanted.
    """
    if isinstance(c, BoolConst):
        return c
    if isinstance(c, Cmp):
        return Cmp(subst_arith(c.left, s), c.op, subst_arith(c.right, s))
    if isinstance(c, And):
        return And(tuple(substitute(it, s) for it in c.items))
    if isinstance(c, Or):
        return Or(tuple(substitute(it, s) for it in c.items))
    if isinstance(c, Not):
        return Not(substitute(c.item, s))
    raise TypeError(f"not a constraint: {c!r}")


def violations_degree(c: ConstraintExpr, a: Mapping[str, int]) -> int:
    """Distance of assignment ``a`` from satisfying NNF formula ``c``.

    Zero exactly when ``c`` evaluates to true.  Comparison rules::

        v(a = b)  = |A - B|          v(a >= b) = |min(0, A - B)|
        v(a != b) = v(a<b || a>b)    v(a > b)  = |min(0, A - B - 1)|
        v(A && B) = v(A) + v(B)      v(a < b)  = |max(0, A - B + 1)|
        v(A || B) = min(v(A), v(B))  v(a <= b) = |max(0, A - B)|

    A literal FALSE contributes 1 (the degree of an unsatisfiable unit
    comparison).  Arithmetic is unbounded, so overflow cannot occur.
    """
    if isinstance(c, BoolConst):
        return 0 if c.value else 1
    if isinstance(c, Cmp):
        d = eval_arith(c.left, a) - eval_arith(c.right, a)
        op = c.op
        if op == "=":
            return abs(d)
        if op == ">=":
            return max(0, -d)
        if op == ">":
            return max(0, 1 - d)
        if op == "<":
            return max(0, d + 1)
        if op == "<=":
            return max(0, d)
        # a != b  ==  a < b || a > b
        return min(max(0, d + 1), max(0, 1 - d))
    if isinstance(c, And):
        return sum(violations_degree(it, a) for it in c.items)
    if isinstance(c, Or):
        return min(violations_degree(it, a) for it in c.items)
    if isinstance(c, Not):
        raise NotInNNFError("violations degree requires negation normal form")
    raise TypeError(f"not a constraint: {c!r}")


# ---------------------------------------------------------------------------
# Simplification / canonical form
# ---------------------------------------------------------------------------

Bounds = Mapping[str, tuple[int, int]]


def simplify(c: ConstraintExpr, bounds: Bounds | None = None) -> ConstraintExpr:
    """Canonical form: negations pushed in, constants folded, comparisons
    normalised to ``terms op const``, tautologies and contradictions pruned.

    When ``bounds`` is given, comparisons that are decided by the variable
    domains alone ("0 <= i" for i in [0,25]) collapse to TRUE/FALSE, which is
    what makes printed reachability constraints compact.
    """
    return _simplify(push_negations(c), bounds)


def _simplify(c: ConstraintExpr, bounds: Bounds | None) -> ConstraintExpr:
    if isinstance(c, BoolConst):
        return TRUE if c.value else FALSE
    if isinstance(c, Cmp):
        return _canon_cmp(c, bounds)
    if isinstance(c, And):
        items: list[ConstraintExpr] = []
        seen: set[str] = set()
        for it in c.items:
            s = _simplify(it, bounds)
            if s is FALSE:
                return FALSE
            if s is TRUE:
                continue
            for part in (s.items if isinstance(s, And) else (s,)):
                key = render(part)
                if key not in seen:
                    seen.add(key)
                    items.append(part)
        items = _propagate_equalities(items, bounds)
        if items is None:
            return FALSE
        items.sort(key=render)
        return conj(items) if items else TRUE
    if isinstance(c, Or):
        items = []
        seen = set()
        for it in c.items:
            s = _simplify(it, bounds)
            if s is TRUE:
                return TRUE
            if s is FALSE:
                continue
            for part in (s.items if isinstance(s, Or) else (s,)):
                key = render(part)
                if key not in seen:
                    seen.add(key)
                    items.append(part)
        items.sort(key=render)
        return disj(items) if items else FALSE
    raise TypeError(f"unexpected node after NNF: {c!r}")


def _propagate_equalities(
    items: list[ConstraintExpr], bounds: Bounds | None
) -> list[ConstraintExpr] | None:
    """Use ``var = const`` conjuncts to reduce their siblings.

    Returns None when the conjunction collapses to FALSE.  Keeps the
    defining equalities themselves; everything else is re-simplified under
    the bindings, which prunes conjuncts made trivial by them.
    """
    bindings: dict[str, int] = {}
    defining: dict[int, str] = {}
    for idx, it in enumerate(items):
        if isinstance(it, Cmp) and it.op == "=":
            coeffs, const = linear_form(Sub(it.left, it.right))
            if len(coeffs) == 1:
                (var, k), = coeffs.items()
                if abs(k) == 1 and var not in bindings:
                    bindings[var] = -const // k
                    defining[idx] = var
    if not bindings:
        return items
    out: list[ConstraintExpr] = []
    seen: set[str] = set()
    changed = False
    for idx, it in enumerate(items):
        if idx in defining:
            reduced = it
        else:
            replaced = substitute(it, bindings)
            reduced = _simplify(replaced, bounds)
            changed = changed or render(reduced) != render(it)
        if reduced is FALSE:
            return None
        if reduced is TRUE:
            changed = True
            continue
        for part in (reduced.items if isinstance(reduced, And) else (reduced,)):
            key = render(part)
            if key not in seen:
                seen.add(key)
                out.append(part)
    if changed:
        return _propagate_equalities(out, bounds)
    return out


def _canon_cmp(c: Cmp, bounds: Bounds | None) -> ConstraintExpr:
    coeffs, const = linear_form(Sub(c.left, c.right))
    op = c.op
    if not coeffs:
        return TRUE if _CMP_FUNCS[op](const, 0) else FALSE
    # normalise sign: first variable's coefficient positive
    first = sorted(coeffs)[0]
    if coeffs[first] < 0:
        coeffs = {v: -k for v, k in coeffs.items()}
        const = -const
        op = {"<": ">", ">": "<", "<=": ">=", ">=": "<=", "=": "=", "!=": "!="}[op]
    if bounds is not None:
        lo, hi = _linear_interval(coeffs, const, bounds)
        if lo is not None and hi is not None:
            always = _CMP_FUNCS[op]
            if op in ("=", "!="):
                if lo == hi == 0:
                    return TRUE if op == "=" else FALSE
                if lo > 0 or hi < 0:
                    return FALSE if op == "=" else TRUE
            elif always(lo, 0) and always(hi, 0):
                return TRUE
            elif not always(lo, 0) and not always(hi, 0):
                return FALSE
    return Cmp(_from_linear(coeffs, 0), op, Const(-const))


def _linear_interval(
    coeffs: Mapping[str, int], const: int, bounds: Bounds
) -> tuple[int | None, int | None]:
    lo = hi = const
    for v, k in coeffs.items():
        if v not in bounds:
            return None, None
        blo, bhi = bounds[v]
        lo += k * (blo if k > 0 else bhi)
        hi += k * (bhi if k > 0 else blo)
    return lo, hi


# ---------------------------------------------------------------------------
# Rendering
# ---------------------------------------------------------------------------

def render(c: ConstraintExpr) -> str:
    """Infix text form; parses back with :func:`parse_constraint`."""
    return _render(c, 0)


def _render(c: ConstraintExpr, prec: int) -> str:
    if isinstance(c, BoolConst):
        return "true" if c.value else "false"
    if isinstance(c, Cmp):
        return f"{render_arith(c.left)} {c.op} {render_arith(c.right)}"
    if isinstance(c, Not):
        return f"!{_render(c.item, 3)}"
    if isinstance(c, And):
        body = " && ".join(_render(it, 2) for it in c.items)
        return f"({body})" if prec > 1 else body
    if isinstance(c, Or):
        body = " || ".join(_render(it, 1) for it in c.items)
        return f"({body})" if prec > 0 else body
    raise TypeError(f"not a constraint: {c!r}")


def render_arith(e: ArithExpr, prec: int = 0) -> str:
    if isinstance(e, Const):
        return str(e.value)
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Add):
        s = f"{render_arith(e.left, 1)} + {render_arith(e.right, 2)}"
    elif isinstance(e, Sub):
        s = f"{render_arith(e.left, 1)} - {render_arith(e.right, 2)}"
    elif isinstance(e, Mul):
        return f"{e.coeff} * {render_arith(e.expr, 3)}"
    else:
        raise TypeError(f"not an arithmetic expression: {e!r}")
    return f"({s})" if prec >= 2 else s


# ---------------------------------------------------------------------------
# Parsing
# ---------------------------------------------------------------------------

_PUNCT = ("&&", "||", "<=", ">=", "!=", ":=", "(", ")", "<", ">", "=", "!",
          "+", "-", "*", ";")


def _tokenize(text: str) -> list[str]:
    tokens: list[str] = []
    i, n = 0, len(text)
    while i < n:
        ch = text[i]
        if ch.isspace():
            i += 1
            continue
        for p in _PUNCT:
            if text.startswith(p, i):
                tokens.append(p)
                i += len(p)
                break
        else:
            j = i
            if ch.isdigit():
                while j < n and text[j].isdigit():
                    j += 1
            elif ch.isalpha() or ch == "_":
                while j < n and (text[j].isalnum() or text[j] == "_"):
                    j += 1
            else:
                raise ParseError(f"unexpected character {ch!r} at offset {i}")
            tokens.append(text[i:j])
            i = j
    return tokens


class _Parser:
    def __init__(self, tokens: list[str]):
        self.toks = tokens
        self.pos = 0

    def peek(self) -> str | None:
        return self.toks[self.pos] if self.pos < len(self.toks) else None

    def take(self, expected: str | None = None) -> str:
        tok = self.peek()
        if tok is None:
            raise ParseError("unexpected end of input")
        if expected is not None and tok != expected:
            raise ParseError(f"expected {expected!r}, found {tok!r}")
        self.pos += 1
        return tok

    # constraint := or_expr
    def constraint(self) -> ConstraintExpr:
        items = [self.and_expr()]
        while self.peek() == "||":
            self.take()
            items.append(self.and_expr())
        return disj(items) if len(items) > 1 else items[0]

    def and_expr(self) -> ConstraintExpr:
        items = [self.unary()]
        while self.peek() == "&&":
            self.take()
            items.append(self.unary())
        return conj(items) if len(items) > 1 else items[0]

    def unary(self) -> ConstraintExpr:
        if self.peek() == "!":
            self.take()
            return Not(self.unary())
        return self.atom()

    def atom(self) -> ConstraintExpr:
        tok = self.peek()
        if tok == "true":
            self.take()
            return TRUE
        if tok == "false":
            self.take()
            return FALSE
        # try a comparison first; fall back to a parenthesised constraint
        mark = self.pos
        try:
            left = self.arith()
            op = self.peek()
            if op in CMP_OPS:
                self.take()
                return Cmp(left, op, self.arith())
            raise ParseError(f"expected comparison operator, found {op!r}")
        except ParseError:
            self.pos = mark
        self.take("(")
        inner = self.constraint()
        self.take(")")
        return inner

    def arith(self) -> ArithExpr:
        expr = self.term()
        while self.peek() in ("+", "-"):
            if self.take() == "+":
                expr = Add(expr, self.term())
            else:
                expr = Sub(expr, self.term())
        return expr

    def term(self) -> ArithExpr:
        expr = self.factor()
        while self.peek() == "*":
            self.take()
            rhs = self.factor()
            expr = _make_mul(expr, rhs)
        return expr

    def factor(self) -> ArithExpr:
        tok = self.peek()
        if tok == "-":
            self.take()
            return Mul(-1, self.factor())
        if tok == "(":
            self.take()
            expr = self.arith()
            self.take(")")
            return expr
        tok = self.take()
        if tok.isdigit():
            return Const(int(tok))
        if tok[0].isalpha() or tok[0] == "_":
            if tok in ("true", "false"):
                raise ParseError(f"{tok!r} is not an arithmetic term")
            return Var(tok)
        raise ParseError(f"unexpected token {tok!r}")


def _make_mul(a: ArithExpr, b: ArithExpr) -> ArithExpr:
    fa, fb = fold_arith(a), fold_arith(b)
    if isinstance(fa, Const):
        return Mul(fa.value, fb)
    if isinstance(fb, Const):
        return Mul(fb.value, fa)
    raise NonlinearError(f"product of two non-constant terms: {render_arith(a)} * {render_arith(b)}")


def parse_constraint(text: str) -> ConstraintExpr:
    """Parse constraint syntax, e.g. ``"x = 10 && (y <= 5 || i >= 2)"``."""
    text = text.strip()
    if not text:
        return TRUE
    p = _Parser(_tokenize(text))
    c = p.constraint()
    if p.peek() is not None:
        raise ParseError(f"trailing input at token {p.peek()!r}")
    return c


def parse_arith(text: str) -> ArithExpr:
    p = _Parser(_tokenize(text))
    e = p.arith()
    if p.peek() is not None:
        raise ParseError(f"trailing input at token {p.peek()!r}")
    return e


def parse_update(text: str) -> dict[str, ArithExpr]:
    """Parse an update block: semicolon-separated ``var := expr`` clauses.

    All right-hand sides read pre-state values (simultaneous assignment).
    """
    out: dict[str, ArithExpr] = {}
    for clause in text.split(";"):
        clause = clause.strip()
        if not clause:
            continue
        if ":=" not in clause:
            raise ParseError(f"update clause without ':=': {clause!r}")
        lhs, rhs = clause.split(":=", 1)
        name = lhs.strip()
        if not name or not (name[0].isalpha() or name[0] == "_"):
            raise ParseError(f"bad update target {lhs!r}")
        if name in out:
            raise ParseError(f"duplicate update target {name!r}")
        out[name] = parse_arith(rhs)
    return out
