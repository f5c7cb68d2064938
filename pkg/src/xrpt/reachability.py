"""Bounded backward reachability constraints and the planner's on-line step.

Off-line, for a trap ``tr`` the analysis computes per location ``l`` a
weakest constraint ``C*[l]`` on state variables (states from which a path of
length at most ``L*[l]`` covers the trap) and per transition ``t`` a guarding
constraint ``Cg[t]`` on state and input variables (states and inputs from
which ``t`` begins a shortest covering path).  FALSE marks failure to derive
a feasible constraint.

Generation walks backwards from the trap transition by increasing path
length.  It stops at a fixpoint, once the initial location has a constraint,
or at the depth bound; a final pass then derives guarding constraints for
every transition into a constrained location, so the guard ring around the
deepest frontier is available to the on-line planner.

On-line, :func:`rpt_online_step` drives the SUT to cover one trap while the
current state satisfies ``C*``; it raises :class:`Stuck` when the constraints
stop being satisfiable (the caller falls back to heuristic search).
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import TYPE_CHECKING, Mapping

from .constraints import (
    ConstraintExpr, FALSE, Not, conj, disj, parse_constraint, render,
    simplify, substitute,
)
from .efsm import EfsmModel, EfsmState, ILABEL, Trap, Transition, trap_covered_by
from . import solver

if TYPE_CHECKING:  # pragma: no cover
    from .sut import SutPort

log = logging.getLogger(__name__)

INPUT_ENUM_CAP = 256


class Stuck(Exception):
    """No guarding constraint is satisfiable at the current state."""


class NonConformance(Exception):
    """Observed SUT output matches no enabled model transition."""


@dataclass
class ReachabilitySet:
    """Reachability constraints of one trap up to a depth bound.

    ``cg_len`` is the shortest plan length any disjunct of a transition's
    guarding constraint starts; the on-line step uses it to keep the
    remaining length strictly decreasing along a plan.
    """

    trap_var: str
    depth: int
    cstar: dict[str, ConstraintExpr]
    lstar: dict[str, int]
    cg: dict[str, ConstraintExpr]
    cg_len: dict[str, int]

    def cstar_at(self, location: str) -> ConstraintExpr:
        return self.cstar.get(location, FALSE)

    def cg_at(self, transition: str) -> ConstraintExpr:
        return self.cg.get(transition, FALSE)

    def to_dict(self) -> dict:
        return {
            "trap": self.trap_var,
            "depth": self.depth,
            "cstar": {l: render(c) for l, c in sorted(self.cstar.items())},
            "lstar": dict(sorted(self.lstar.items())),
            "cg": {t: render(c) for t, c in sorted(self.cg.items())},
            "cg_len": dict(sorted(self.cg_len.items())),
        }

    @classmethod
    def from_dict(cls, doc: Mapping) -> "ReachabilitySet":
        return cls(
            trap_var=doc["trap"],
            depth=int(doc["depth"]),
            cstar={l: parse_constraint(s) for l, s in doc["cstar"].items()},
            lstar={l: int(v) for l, v in doc["lstar"].items()},
            cg={t: parse_constraint(s) for t, s in doc["cg"].items()},
            cg_len={t: int(v) for t, v in doc.get("cg_len", {}).items()},
        )

    def save(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2)
            fh.write("\n")

    @classmethod
    def load(cls, path: str | Path) -> "ReachabilitySet":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def _substituted_domain(m: EfsmModel, t: Transition) -> ConstraintExpr:
    """D with the transition's update applied: post-state stays in domain.

    Restricted to state and input variables; trap and output bounds are
    never violated by updates and would only bloat the formulas.
    """
    relevant = set(m.state_vars) | set(m.input_vars)
    return simplify(substitute(m.domain(relevant), dict(t.update)), m.bounds())


def _project_to_state(m: EfsmModel, c: ConstraintExpr) -> ConstraintExpr:
    """Existentially eliminate input variables, keeping state variables."""
    bounds = m.bounds()
    elim = {v: bounds[v] for v in m.input_vars}
    elim[ILABEL] = bounds[ILABEL]
    return solver.eliminate_vars(c, elim, bounds, cap=INPUT_ENUM_CAP)


def _weaken(m: EfsmModel, old: ConstraintExpr, new: ConstraintExpr) -> tuple[ConstraintExpr, bool]:
    """Disjoin ``new`` into ``old`` unless one side already entails the other."""
    if new is FALSE:
        return old, False
    if old is FALSE:
        return new, True
    bounds = m.bounds()
    dom = m.domain(old.free_vars() | new.free_vars())
    if solver.is_weaker_or_equal(old, new, dom, bounds):
        return old, False
    if solver.is_weaker_or_equal(new, old, dom, bounds):
        return new, True
    return simplify(disj([old, new]), m.bounds()), True


def _optimistic_predicate(m: EfsmModel, trap: Trap) -> ConstraintExpr:
    """Trap predicate with dependency trap variables assumed satisfied.

    A trap only becomes active once the traps it depends on are covered, so
    the off-line constraints may treat those variables as 1.
    """
    sub = {v: 1 for v in m.trap_vars if v in trap.predicate.free_vars()}
    return substitute(trap.predicate, sub) if sub else trap.predicate


def generate_reachability(m: EfsmModel, trap: Trap, depth_bound: int) -> ReachabilitySet:
    """Backward reachability constraints for one trap, bounded by depth."""
    if depth_bound < 1:
        raise ValueError("depth bound must be positive")
    bounds = m.bounds()
    ti = m.transitions[trap.transition]
    cstar: dict[str, ConstraintExpr] = {}
    lstar: dict[str, int] = {}
    cg: dict[str, ConstraintExpr] = {}
    cg_len: dict[str, int] = {}

    base = simplify(
        conj([ti.guard, _optimistic_predicate(m, trap), _substituted_domain(m, ti)]),
        bounds)
    cg[ti.id] = base
    if base is not FALSE:
        cg_len[ti.id] = 1
    proj = _project_to_state(m, base)
    if proj is not FALSE:
        cstar[ti.source] = proj
        lstar[ti.source] = 1
    changed = {ti.source} if proj is not FALSE else set()

    k = 1
    while changed and k < depth_bound:
        k += 1
        if m.initial in cstar:
            log.debug("reachability for %s: initial location reached", trap.var)
            break
        snapshot = dict(cstar)  # one iteration = one extra path length
        next_changed: set[str] = set()
        for t in sorted(m.transitions.values(), key=lambda t: t.id):
            if t.target not in changed:
                continue
            g = _backward_constraint(m, t, snapshot[t.target])
            if g is FALSE:
                continue
            cg[t.id], _ = _weaken(m, cg.get(t.id, FALSE), g)
            cg_len[t.id] = min(cg_len.get(t.id, k), k)
            proj = _project_to_state(m, g)
            if proj is FALSE:
                continue
            if t.source not in cstar:
                cstar[t.source] = proj
                lstar[t.source] = k
                next_changed.add(t.source)
            else:
                merged, widened = _weaken(m, cstar[t.source], proj)
                if widened:
                    cstar[t.source] = merged
                    lstar[t.source] = k
                    next_changed.add(t.source)
        changed = next_changed

    # final pass: guarding constraints for every transition into a
    # constrained location (the ring around the frontier); C* is not touched
    for t in sorted(m.transitions.values(), key=lambda t: t.id):
        if t.target not in cstar:
            continue
        g = _backward_constraint(m, t, cstar[t.target])
        if g is not FALSE:
            cg[t.id], _ = _weaken(m, cg.get(t.id, FALSE), g)
            cg_len[t.id] = min(cg_len.get(t.id, lstar[t.target] + 1),
                               lstar[t.target] + 1)

    for l in m.locations:
        cstar.setdefault(l, FALSE)
    for t in m.transitions.values():
        cg.setdefault(t.id, FALSE)
    return ReachabilitySet(trap.var, depth_bound, cstar, lstar, cg, cg_len)


def _backward_constraint(m: EfsmModel, t: Transition,
                         target_cstar: ConstraintExpr) -> ConstraintExpr:
    pulled = substitute(target_cstar, dict(t.update))
    return simplify(conj([t.guard, pulled, _substituted_domain(m, t)]),
                    m.bounds())


# ---------------------------------------------------------------------------
# RPT on-line algorithm (single trap)
# ---------------------------------------------------------------------------

def cstar_satisfiable(m: EfsmModel, rs: ReachabilitySet, state: EfsmState) -> bool:
    c = rs.cstar_at(state.location)
    if c is FALSE:
        return False
    free = {v: m.bounds()[v] for v in c.free_vars() - set(state.alpha)}
    ok, _ = solver.sat_model(free, dict(state.alpha), c)
    return ok


def rpt_online_step(
    m: EfsmModel,
    rs: ReachabilitySet,
    state: EfsmState,
    trap: Trap,
    sut: "SutPort",
    ctx=None,
) -> EfsmState:
    """Drive the SUT until ``trap`` is covered, following the reachability
    constraints from the current state.

    At each state the transition with a satisfiable guarding constraint and
    the shortest remaining plan is chosen; rival guards are excluded where
    that leaves the constraint satisfiable, otherwise the SUT's observed
    output resolves the move and planning continues from the actual state.

    Raises :class:`Stuck` when ``C*`` is unsatisfiable at the current state
    (then the heuristic engine takes over) and :class:`NonConformance` when
    the SUT's output matches no enabled transition.
    """
    from .sut import conforms  # circular-import avoidance

    seen: set[tuple] = set()
    remaining: int | None = None
    while True:
        if ctx is not None and ctx.is_covered(trap.var):
            return state
        if not cstar_satisfiable(m, rs, state):
            raise Stuck(f"C* for {trap.var} unsatisfiable at {state!r}")
        if state.key() in seen:
            raise Stuck(f"planning cycle at {state!r}")  # rival ping-pong
        seen.add(state.key())
        horizon = rs.lstar.get(state.location)
        if horizon is None:
            raise Stuck(f"no path length recorded at {state.location}")
        remaining = horizon if remaining is None else min(remaining, horizon)

        choice = _choose_plan_transition(m, rs, state, remaining)
        if choice is None:
            raise Stuck(f"no guarding constraint satisfiable at {state!r} "
                        f"within {remaining} steps")
        t, inp = choice
        label = m.input_labels[inp[ILABEL]]
        params = {p: inp[p] for p in t.input_params}
        out_label, out_params = sut.send(label, params)
        actual = conforms(m, state, inp, (out_label, out_params))
        if actual is None:
            raise NonConformance(
                f"output {out_label}{out_params} matches no enabled transition "
                f"at {state!r}")
        prev = state
        state = m.apply_transition(state, actual, inp)
        # on-plan moves consume budget; a rival divergence forces a replan
        remaining = rs.cg_len[t.id] - 1 if actual.id == t.id else None
        if ctx is not None:
            ctx.record_step(prev, actual, inp, (out_label, out_params), "rpt")
            if ctx.is_covered(trap.var):
                return state
        elif trap_covered_by(m, prev, actual, inp, trap, {}):
            return state


def _choose_plan_transition(
    m: EfsmModel, rs: ReachabilitySet, state: EfsmState, remaining: int
) -> tuple[Transition, dict[str, int]] | None:
    ranked: list[tuple[int, str]] = []
    for t in m.out(state.location):
        if rs.cg_at(t.id) is FALSE:
            continue
        length = rs.cg_len.get(t.id)
        if length is None or length > remaining:
            continue
        ranked.append((length, t.id))
    for _, tid in sorted(ranked):
        t = m.transitions[tid]
        inp = _solve_plan_input(m, rs, state, t)
        if inp is not None:
            return t, inp
    return None


def _solve_plan_input(
    m: EfsmModel, rs: ReachabilitySet, state: EfsmState, t: Transition
) -> dict[str, int] | None:
    bounds = m.bounds()
    base = conj([rs.cg_at(t.id),
                 parse_constraint(f"{ILABEL} = {m.label_index(t.input_label)}")])
    free = {v: bounds[v] for v in m.input_vars}
    free[ILABEL] = bounds[ILABEL]
    fixed = dict(state.alpha)
    order = [ILABEL] + sorted(m.input_vars)
    # prefer inputs that exclude rival moves; fall back to output observation
    rival_neg = [Not(r.guard) for r in m.rivals(t)]
    if rival_neg:
        ok, model = solver.sat_model(free, fixed, conj([base] + rival_neg), order)
        if ok:
            return model
    ok, model = solver.sat_model(free, fixed, base, order)
    return model if ok else None
