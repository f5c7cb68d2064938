"""Satisfiability, optimization and entailment over bounded integer domains.

A small backtracking solver specialised to the constraint language of
:mod:`xrpt.constraints`: variables have finite integer domains, formulas are
quantifier-free and linear.  Search splits variable intervals (low half
first) in a fixed variable order, with interval-arithmetic pruning and
bounds propagation on forced comparisons.  That makes the returned model the
lexicographically smallest satisfying one, so results are deterministic.

:func:`optimize_model` layers branch-and-bound on the same search, pruning
boxes whose violations-degree lower bound cannot beat the incumbent.
"""

from __future__ import annotations

import random
from functools import lru_cache
from typing import Mapping, Sequence

from .constraints import (
    And, BoolConst, Cmp, Const, ConstraintExpr, Not, NotInNNFError, Or, Sub,
    TRUE, UnboundVariableError, conj, disj, from_linear, linear_form,
    push_negations, simplify, substitute, violations_degree,
)

Box = dict[str, tuple[int, int]]

_MAX_PROPAGATION_ROUNDS = 30


def _prepare(formula: ConstraintExpr, fixed: Mapping[str, int],
             free: Mapping[str, tuple[int, int]]) -> ConstraintExpr:
    f = substitute(formula, dict(fixed)) if fixed else formula
    f = push_negations(f)
    missing = f.free_vars() - set(free)
    if missing:
        raise UnboundVariableError(
            f"variables neither fixed nor free: {sorted(missing)}")
    return f


# ---------------------------------------------------------------------------
# Interval evaluation and propagation
# ---------------------------------------------------------------------------

@lru_cache(maxsize=65536)
def _cmp_parts_cached(c: Cmp) -> tuple[tuple[tuple[str, int], ...], int]:
    coeffs, const = linear_form(Sub(c.left, c.right))
    return tuple(sorted(coeffs.items())), const


def _cmp_parts(c: Cmp) -> tuple[dict[str, int], int]:
    items, const = _cmp_parts_cached(c)
    return dict(items), const


def _status(c: ConstraintExpr, box: Box) -> bool | None:
    """Tri-valued truth of NNF formula ``c`` over interval box ``box``."""
    if isinstance(c, BoolConst):
        return c.value
    if isinstance(c, Cmp):
        coeffs, const = _cmp_parts(c)
        lo = hi = const
        for v, k in coeffs.items():
            blo, bhi = box[v]
            lo += k * (blo if k > 0 else bhi)
            hi += k * (bhi if k > 0 else blo)
        op = c.op
        if op == "=":
            if lo == hi == 0:
                return True
            if lo > 0 or hi < 0:
                return False
            return None
        if op == "!=":
            if lo == hi == 0:
                return False
            if lo > 0 or hi < 0:
                return True
            return None
        if op in ("<", "<="):
            if op == "<":
                if hi < 0:
                    return True
                if lo >= 0:
                    return False
            else:
                if hi <= 0:
                    return True
                if lo > 0:
                    return False
            return None
        # > or >=
        if op == ">":
            if lo > 0:
                return True
            if hi <= 0:
                return False
        else:
            if lo >= 0:
                return True
            if hi < 0:
                return False
        return None
    if isinstance(c, And):
        result: bool | None = True
        for it in c.items:
            st = _status(it, box)
            if st is False:
                return False
            if st is None:
                result = None
        return result
    if isinstance(c, Or):
        result = False
        for it in c.items:
            st = _status(it, box)
            if st is True:
                return True
            if st is None:
                result = None
        return result
    if isinstance(c, Not):
        raise NotInNNFError("solver requires negation normal form")
    raise TypeError(f"not a constraint: {c!r}")


def _narrow_cmp(c: Cmp, box: Box) -> bool:
    """Tighten ``box`` using one comparison; returns False on empty domain."""
    coeffs, const = _cmp_parts(c)
    op = c.op
    if op == "!=" or not coeffs:
        return True
    # rewrite as  sum coeffs + const  (op)  0,  with = handled as <= and >=
    ops = ("<=", ">=") if op == "=" else (op,)
    for o in ops:
        for v, k in coeffs.items():
            rest_lo = rest_hi = const
            for w, kw in coeffs.items():
                if w == v:
                    continue
                blo, bhi = box[w]
                rest_lo += kw * (blo if kw > 0 else bhi)
                rest_hi += kw * (bhi if kw > 0 else blo)
            lo, hi = box[v]
            # k*v + rest (o) 0
            if o in ("<", "<="):
                slack = 0 if o == "<=" else 1
                if k > 0:
                    hi = min(hi, _floor_div(-rest_lo - slack, k))
                else:
                    lo = max(lo, _ceil_div(-rest_lo - slack, k))
            else:
                slack = 0 if o == ">=" else 1
                if k > 0:
                    lo = max(lo, _ceil_div(-rest_hi + slack, k))
                else:
                    hi = min(hi, _floor_div(-rest_hi + slack, k))
            if lo > hi:
                return False
            box[v] = (lo, hi)
    return True


def _floor_div(a: int, b: int) -> int:
    return a // b


def _ceil_div(a: int, b: int) -> int:
    return -((-a) // b)


def _propagate(c: ConstraintExpr, box: Box) -> bool:
    """Fixpoint bounds propagation over forced conjuncts; False = empty."""
    for _ in range(_MAX_PROPAGATION_ROUNDS):
        before = dict(box)
        if not _propagate_once(c, box):
            return False
        if box == before:
            return True
    return True


def _propagate_once(c: ConstraintExpr, box: Box) -> bool:
    if isinstance(c, Cmp):
        return _narrow_cmp(c, box)
    if isinstance(c, And):
        for it in c.items:
            if not _propagate_once(it, box):
                return False
        return True
    if isinstance(c, Or):
        # only propagate when a single disjunct remains possibly-true
        live = None
        for it in c.items:
            st = _status(it, box)
            if st is True:
                return True
            if st is None:
                if live is not None:
                    return True
                live = it
        if live is None:
            return False
        return _propagate_once(live, box)
    return True


# ---------------------------------------------------------------------------
# Satisfiability with model extraction
# ---------------------------------------------------------------------------

def sat_model(
    free: Mapping[str, tuple[int, int]],
    fixed: Mapping[str, int],
    formula: ConstraintExpr,
    order: Sequence[str] | None = None,
) -> tuple[bool, dict[str, int]]:
    """Search for the lexicographically smallest model of ``formula``.

    ``fixed`` pins variables to concrete values; ``free`` maps the remaining
    variables to inclusive bounds.  The lexicographic order is ``order`` if
    given, else sorted variable names.  Unsatisfiable formulas return
    ``(False, {})``.
    """
    f = _prepare(formula, fixed, free)
    names = list(order) if order is not None else sorted(free)
    assert set(names) == set(free), "order must cover exactly the free vars"
    box: Box = {v: tuple(free[v]) for v in names}
    for lo, hi in box.values():
        if lo > hi:
            return False, {}
    model = _search_min(f, box, names)
    return (True, model) if model is not None else (False, {})


def _search_min(f: ConstraintExpr, box: Box, names: list[str]) -> dict[str, int] | None:
    if not _propagate(f, box):
        return None
    st = _status(f, box)
    if st is False:
        return None
    split = None
    for v in names:
        lo, hi = box[v]
        if lo != hi:
            split = v
            break
    if split is None:
        return {v: box[v][0] for v in names} if st is True else None
    if st is True:
        # whole box satisfies; lexicographic minimum is the low corner
        return {v: box[v][0] for v in names}
    lo, hi = box[split]
    mid = (lo + hi) // 2
    for sub in ((lo, mid), (mid + 1, hi)):
        child = dict(box)
        child[split] = sub
        found = _search_min(f, child, names)
        if found is not None:
            return found
    return None


def random_model(
    free: Mapping[str, tuple[int, int]],
    fixed: Mapping[str, int],
    formula: ConstraintExpr,
    rng: random.Random,
) -> tuple[bool, dict[str, int]]:
    """Like :func:`sat_model` but with randomized branching, for baselines.

    The same complete interval search is used (no rejection sampling); only
    the variable order and the half visited first are randomized, so any
    satisfiable formula yields some model.
    """
    f = _prepare(formula, fixed, free)
    names = sorted(free)
    rng.shuffle(names)
    box: Box = {v: tuple(free[v]) for v in names}
    model = _search_random(f, box, names, rng)
    return (True, model) if model is not None else (False, {})


def _search_random(f: ConstraintExpr, box: Box, names: list[str],
                   rng: random.Random) -> dict[str, int] | None:
    if not _propagate(f, box):
        return None
    st = _status(f, box)
    if st is False:
        return None
    split = None
    for v in names:
        lo, hi = box[v]
        if lo != hi:
            split = v
            break
    if split is None:
        return dict((v, box[v][0]) for v in box) if st is True else None
    lo, hi = box[split]
    if st is True:
        return {v: rng.randint(*box[v]) for v in box}
    mid = (lo + hi) // 2
    halves = [(lo, mid), (mid + 1, hi)]
    rng.shuffle(halves)
    for sub in halves:
        child = dict(box)
        child[split] = sub
        found = _search_random(f, child, names, rng)
        if found is not None:
            return found
    return None


# ---------------------------------------------------------------------------
# Optimization: minimize the violations degree of an objective
# ---------------------------------------------------------------------------

def optimize_model(
    free: Mapping[str, tuple[int, int]],
    fixed: Mapping[str, int],
    feasibility: ConstraintExpr,
    objective: ConstraintExpr,
    order: Sequence[str] | None = None,
) -> tuple[bool, dict[str, int]]:
    """Among models of ``feasibility``, minimize ``violations_degree`` of
    ``objective``; ties go to the lexicographically smallest model."""
    feas = _prepare(feasibility, fixed, free)
    obj = substitute(push_negations(objective), dict(fixed))
    extra = obj.free_vars() - set(free)
    if extra:
        raise UnboundVariableError(
            f"objective variables neither fixed nor free: {sorted(extra)}")
    names = list(order) if order is not None else sorted(free)
    box: Box = {v: tuple(free[v]) for v in names}
    best: dict[str, int] | None = None
    best_score = None

    def dfs(b: Box) -> None:
        nonlocal best, best_score
        if not _propagate(feas, b):
            return
        if _status(feas, b) is False:
            return
        if best_score is not None:
            vlo, _ = _viol_bounds(obj, b)
            if vlo >= best_score and best_score == 0:
                return
            if vlo > best_score:
                return
        split = None
        for v in names:
            lo, hi = b[v]
            if lo != hi:
                split = v
                break
        if split is None:
            point = {v: b[v][0] for v in names}
            if _status(feas, b) is not True:
                return
            score = violations_degree(obj, point)
            if best_score is None or score < best_score:
                best, best_score = point, score
            return
        lo, hi = b[split]
        mid = (lo + hi) // 2
        for sub in ((lo, mid), (mid + 1, hi)):
            child = dict(b)
            child[split] = sub
            dfs(child)

    dfs(box)
    if best is None:
        return False, {}
    return True, best


def _viol_bounds(c: ConstraintExpr, box: Box) -> tuple[int, int]:
    """Interval of possible violations degrees of ``c`` over ``box``."""
    if isinstance(c, BoolConst):
        return (0, 0) if c.value else (1, 1)
    if isinstance(c, Cmp):
        coeffs, const = _cmp_parts(c)
        dlo = dhi = const
        for v, k in coeffs.items():
            blo, bhi = box[v]
            dlo += k * (blo if k > 0 else bhi)
            dhi += k * (bhi if k > 0 else blo)
        op = c.op
        if op == "=":
            lo = 0 if dlo <= 0 <= dhi else min(abs(dlo), abs(dhi))
            return lo, max(abs(dlo), abs(dhi))
        if op == ">=":
            return max(0, -dhi), max(0, -dlo)
        if op == ">":
            return max(0, 1 - dhi), max(0, 1 - dlo)
        if op == "<":
            return max(0, dlo + 1), max(0, dhi + 1)
        if op == "<=":
            return max(0, dlo), max(0, dhi)
        # != : zero unless the difference is forced to be exactly zero
        if dlo == dhi == 0:
            return 1, 1
        if dlo <= 0 <= dhi:
            return 0, 1
        return 0, 0
    if isinstance(c, And):
        lo = hi = 0
        for it in c.items:
            l, h = _viol_bounds(it, box)
            lo += l
            hi += h
        return lo, hi
    if isinstance(c, Or):
        los, his = zip(*(_viol_bounds(it, box) for it in c.items))
        return min(los), min(his)
    raise NotInNNFError("violations bounds require negation normal form")


# ---------------------------------------------------------------------------
# Entailment
# ---------------------------------------------------------------------------

def is_weaker_or_equal(
    c: ConstraintExpr,
    d: ConstraintExpr,
    domain: ConstraintExpr,
    bounds: Mapping[str, tuple[int, int]],
) -> bool:
    """True iff ``(domain && d) => c`` over the given variable bounds,
    decided by unsatisfiability of ``domain && d && !c``."""
    query = conj([domain, d, Not(c)])
    names = {v: bounds[v] for v in query.free_vars()}
    ok, _ = sat_model(names, {}, query)
    return not ok


def equivalent(
    c: ConstraintExpr,
    d: ConstraintExpr,
    domain: ConstraintExpr,
    bounds: Mapping[str, tuple[int, int]],
) -> bool:
    """Semantic equivalence under the domain (entailment both ways)."""
    return (is_weaker_or_equal(c, d, domain, bounds)
            and is_weaker_or_equal(d, c, domain, bounds))


# ---------------------------------------------------------------------------
# Bounded existential elimination (projection onto state variables)
# ---------------------------------------------------------------------------

def eliminate_vars(
    c: ConstraintExpr,
    elim: Mapping[str, tuple[int, int]],
    bounds: Mapping[str, tuple[int, int]],
    cap: int = 256,
) -> ConstraintExpr:
    """Existentially eliminate ``elim`` variables from ``c``.

    Strategy per variable, cheapest first: a top-level equality conjunct
    forcing a constant is substituted; a variable occurring in exactly one
    comparison with unit coefficient is eliminated analytically; otherwise
    the finite domain is enumerated and the instances disjoined.  Domains
    larger than ``cap`` fall back to a sampled-witness disjunction, which is
    a sound under-approximation.
    """
    out = simplify(c, bounds)
    for v in sorted(elim):
        if v not in out.free_vars():
            continue
        lo, hi = elim[v]
        forced = _forced_value(out, v)
        if forced is not None and lo <= forced <= hi:
            out = simplify(substitute(out, {v: forced}), bounds)
            continue
        analytic = _eliminate_single_occurrence(out, v, lo, hi)
        if analytic is not None:
            out = simplify(analytic, bounds)
            continue
        values = range(lo, hi + 1)
        if hi - lo + 1 > cap:
            step = max(1, (hi - lo) // (cap - 1))
            values = range(lo, hi + 1, step)
        out = simplify(disj([substitute(out, {v: k}) for k in values]), bounds)
    return out


def _forced_value(c: ConstraintExpr, v: str) -> int | None:
    """Constant forced on ``v`` by a top-level equality conjunct, if any."""
    conjuncts = c.items if isinstance(c, And) else (c,)
    for it in conjuncts:
        if isinstance(it, Cmp) and it.op == "=":
            coeffs, const = _cmp_parts(it)
            if set(coeffs) == {v} and abs(coeffs[v]) == 1:
                val = -const // coeffs[v]
                if coeffs[v] * val + const == 0:
                    return val
    return None


def _eliminate_single_occurrence(
    c: ConstraintExpr, v: str, lo: int, hi: int
) -> ConstraintExpr | None:
    """If ``v`` occurs in exactly one comparison with coefficient +-1,
    replace that comparison by its exists-projection over [lo, hi]."""
    holder: list[Cmp] = []
    if _count_occurrences(c, v, holder) != 1:
        return None
    target = holder[0]
    coeffs, const = _cmp_parts(target)
    k = coeffs.get(v, 0)
    if abs(k) != 1:
        return None
    rest = {w: kw for w, kw in coeffs.items() if w != v}
    # k*v + rest + const (op) 0 for some v in [lo, hi]
    rest_expr = from_linear(rest, const)
    op = target.op
    if op == "!=":
        if hi > lo:
            repl: ConstraintExpr = TRUE
        else:
            repl = Cmp(rest_expr, "!=", Const(-k * lo))
    elif op == "=":
        # rest + const = -k*v for some v in [lo,hi]; with k = +-1 this is a
        # pair of bounds on the rest of the comparison
        vals = sorted((-k * lo, -k * hi))
        repl = conj([Cmp(rest_expr, ">=", Const(vals[0])),
                     Cmp(rest_expr, "<=", Const(vals[1]))])
    else:
        # monotone: check at the extreme of v that helps the inequality
        best_v = hi if (k > 0) == (op in (">", ">=")) else lo
        worst_free = {v: best_v}
        repl = simplify(substitute(Cmp(target.left, op, target.right), worst_free))
    return _replace_cmp(c, target, repl)


def _count_occurrences(c: ConstraintExpr, v: str, holder: list[Cmp]) -> int:
    if isinstance(c, Cmp):
        n = 1 if v in c.free_vars() else 0
        if n:
            holder.append(c)
        return n
    if isinstance(c, (And, Or)):
        return sum(_count_occurrences(it, v, holder) for it in c.items)
    return 0


def _replace_cmp(c: ConstraintExpr, target: Cmp, repl: ConstraintExpr) -> ConstraintExpr:
    if c is target:
        return repl
    if isinstance(c, And):
        return And(tuple(_replace_cmp(it, target, repl) for it in c.items))
    if isinstance(c, Or):
        return Or(tuple(_replace_cmp(it, target, repl) for it in c.items))
    return c
