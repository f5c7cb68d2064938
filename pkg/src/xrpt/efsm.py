"""I/O EFSM models: machines, states, traps, goals, validation, (de)serialization.

A machine is a tuple of locations, an initial location, typed bounded
variables (state / input / output / trap), input and output label alphabets,
and guarded transitions with simultaneous updates.  Transitions carry an
input label and an output label; among rival transitions (same source, same
input label, jointly satisfiable guards) output labels must differ so the
observed output identifies the move taken (output observability).

Models load from a JSON document; guards, updates and trap predicates use
the textual constraint syntax of :mod:`xrpt.constraints`.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

from .constraints import (
    ArithExpr, Cmp, Const, ConstraintExpr, TRUE, Var, conj, evaluate,
    parse_constraint, parse_update, render, render_arith, eval_arith,
)
from . import solver

ILABEL = "iLabel"


class ModelError(Exception):
    """Model fails structural or semantic validation."""


class UnknownLocationError(ModelError):
    pass


class NotEnabledError(ModelError):
    """apply_transition called with a transition that is not enabled."""


class DomainViolationError(ModelError):
    """An update drove a state variable outside its declared bounds."""


class VarKind(enum.Enum):
    STATE = "state"
    INPUT = "input"
    OUTPUT = "output"
    TRAP = "trap"


@dataclass(frozen=True, slots=True)
class VarDecl:
    name: str
    kind: VarKind
    lower: int
    upper: int

    def __post_init__(self) -> None:
        if self.lower > self.upper:
            raise ModelError(f"{self.name}: lower bound exceeds upper bound")
        if self.kind is VarKind.TRAP and (self.lower, self.upper) != (0, 1):
            raise ModelError(f"trap variable {self.name} must have domain {{0, 1}}")


@dataclass(frozen=True)
class Transition:
    id: str
    source: str
    target: str
    input_label: str
    input_params: tuple[str, ...]
    output_label: str
    output_params: tuple[str, ...]
    guard: ConstraintExpr
    update: Mapping[str, ArithExpr]


@dataclass(frozen=True)
class EfsmState:
    """A (location, state-variable assignment) pair."""

    location: str
    alpha: Mapping[str, int]

    def key(self) -> tuple:
        return (self.location, tuple(sorted(self.alpha.items())))

    def __repr__(self) -> str:  # pragma: no cover
        vals = ", ".join(f"{k}={v}" for k, v in sorted(self.alpha.items()))
        return f"({self.location}, {{{vals}}})"


class TrapStatus(enum.Enum):
    UNCOVERED = "uncovered"
    COVERED = "covered"
    DISCARDED = "discarded"


@dataclass(frozen=True)
class Trap:
    """A (transition, predicate) test-goal atom, named by its trap variable.

    The predicate ranges over state and input variables and may reference
    other trap variables, which induces the dependency order between traps.
    """

    var: str
    transition: str
    predicate: ConstraintExpr

    def dependencies(self, trap_vars: Iterable[str]) -> frozenset[str]:
        names = self.predicate.free_vars()
        return frozenset(v for v in trap_vars if v in names and v != self.var)


@dataclass(frozen=True)
class TestGoal:
    name: str
    traps: tuple[Trap, ...]

    def dependency_order_ok(self) -> bool:
        """Traps must only depend on traps listed earlier (acyclic chain)."""
        seen: set[str] = set()
        all_vars = [t.var for t in self.traps]
        for t in self.traps:
            if not t.dependencies(all_vars) <= seen:
                return False
            seen.add(t.var)
        return True


class EfsmModel:
    """Immutable, validated I/O EFSM.  Shareable between threads."""

    def __init__(
        self,
        name: str,
        locations: Iterable[str],
        initial: str,
        variables: Iterable[VarDecl],
        input_labels: Iterable[str],
        output_labels: Iterable[str],
        transitions: Iterable[Transition],
        traps: Iterable[Trap] = (),
        goals: Mapping[str, tuple[str, ...]] | None = None,
    ) -> None:
        self.name = name
        self.locations = tuple(locations)
        self.initial = initial
        self.vars: dict[str, VarDecl] = {v.name: v for v in variables}
        self.input_labels = tuple(input_labels)
        self.output_labels = tuple(output_labels)
        self.transitions: dict[str, Transition] = {t.id: t for t in transitions}
        self.traps: dict[str, Trap] = {t.var: t for t in traps}
        self.goals: dict[str, tuple[str, ...]] = dict(goals or {})
        self._out: dict[str, tuple[Transition, ...]] = {}
        self._rivals: dict[str, tuple[str, ...]] = {}
        self._perfect_rivals: dict[str, tuple[str, ...]] = {}
        self._bounds: dict[str, tuple[int, int]] | None = None
        self._domain: ConstraintExpr | None = None
        self._validate()

    # -- derived views ------------------------------------------------

    @property
    def state_vars(self) -> list[str]:
        return [n for n, d in self.vars.items() if d.kind is VarKind.STATE]

    @property
    def input_vars(self) -> list[str]:
        return [n for n, d in self.vars.items() if d.kind is VarKind.INPUT]

    @property
    def output_vars(self) -> list[str]:
        return [n for n, d in self.vars.items() if d.kind is VarKind.OUTPUT]

    @property
    def trap_vars(self) -> list[str]:
        return [n for n, d in self.vars.items() if d.kind is VarKind.TRAP]

    def bounds(self) -> dict[str, tuple[int, int]]:
        if self._bounds is None:
            b = {n: (d.lower, d.upper) for n, d in self.vars.items()}
            b[ILABEL] = (0, max(0, len(self.input_labels) - 1))
            self._bounds = b
        return self._bounds

    def domain(self, names: Iterable[str] | None = None) -> ConstraintExpr:
        """D: the conjunction of variable domain bounds.

        ``names`` restricts D to the given variables; bound conjuncts of
        other variables are independently satisfiable, so dropping them
        never changes satisfiability or entailment of a restricted query.
        """
        if names is not None:
            parts = []
            for n in sorted(set(names)):
                d = self.vars.get(n)
                if d is None:
                    continue
                parts.append(Cmp(Var(n), ">=", Const(d.lower)))
                parts.append(Cmp(Var(n), "<=", Const(d.upper)))
            return conj(parts)
        if self._domain is None:
            self._domain = self.domain(self.vars)
        return self._domain

    def label_index(self, label: str) -> int:
        return self.input_labels.index(label)

    def label_params(self, label: str) -> tuple[str, ...]:
        for t in self.transitions.values():
            if t.input_label == label:
                return t.input_params
        return ()

    def initial_state(self) -> EfsmState:
        alpha = {n: self.vars[n].lower for n in self.state_vars}
        return EfsmState(self.initial, alpha)

    def goal(self, name: str) -> TestGoal:
        """Resolve a goal name, a trap variable, or 'all' to a TestGoal."""
        if name in self.goals:
            trap_vars = self.goals[name]
        elif name in self.traps:
            trap_vars = (name,)
        elif name == "all":
            trap_vars = tuple(self.traps)
        else:
            found = [v.strip() for v in name.split(",") if v.strip()]
            if not found or any(v not in self.traps for v in found):
                raise ModelError(f"unknown goal or trap {name!r}")
            trap_vars = tuple(found)
        goal = TestGoal(name, tuple(self.traps[v] for v in trap_vars))
        if not goal.dependency_order_ok():
            raise ModelError(f"goal {name!r} is not in dependency order")
        return goal

    # -- machine structure --------------------------------------------

    def out(self, location: str) -> tuple[Transition, ...]:
        """Outgoing transitions of a location."""
        if location not in self._out:
            if location not in self.locations:
                raise UnknownLocationError(location)
            self._out[location] = tuple(
                t for t in self.transitions.values() if t.source == location)
        return self._out[location]

    def rivals(self, t: Transition) -> tuple[Transition, ...]:
        """Same-source, same-input-label transitions whose guards are jointly
        satisfiable with t's guard somewhere in the domain.  Transitions on
        different input labels can never fire on the same stimulus (the
        iLabel dimension separates them), so they are not rivals."""
        if t.id not in self._rivals:
            self._rivals[t.id] = tuple(
                o.id for o in self.out(t.source)
                if o.id != t.id and o.input_label == t.input_label
                and self._jointly_satisfiable(t, o))
        return tuple(self.transitions[i] for i in self._rivals[t.id])

    def perfect_rivals(self, t: Transition) -> tuple[Transition, ...]:
        """Rivals whose guard is equal to or weaker than t's guard."""
        if t.id not in self._perfect_rivals:
            bounds = self.bounds()
            self._perfect_rivals[t.id] = tuple(
                o.id for o in self.rivals(t)
                if solver.is_weaker_or_equal(
                    o.guard, t.guard,
                    self.domain(o.guard.free_vars() | t.guard.free_vars()),
                    bounds))
        return tuple(self.transitions[i] for i in self._perfect_rivals[t.id])

    def _jointly_satisfiable(self, a: Transition, b: Transition) -> bool:
        relevant = a.guard.free_vars() | b.guard.free_vars()
        query = conj([a.guard, b.guard, self.domain(relevant)])
        free = {v: self.bounds()[v] for v in query.free_vars()}
        ok, _ = solver.sat_model(free, {}, query)
        return ok

    # -- execution ----------------------------------------------------

    def enabled(self, state: EfsmState, inp: Mapping[str, int]) -> list[Transition]:
        """Transitions fireable at ``state`` for input ``inp`` (which carries
        iLabel plus the parameters of that label).  Includes the requirement
        that the update keeps state variables inside their bounds."""
        label = self.input_labels[inp[ILABEL]]
        env = {**state.alpha, **inp}
        result = []
        for t in self.out(state.location):
            if t.input_label != label:
                continue
            if not evaluate(t.guard, {k: env[k] for k in t.guard.free_vars()}):
                continue
            if self._update_in_domain(t, env):
                result.append(t)
        return sorted(result, key=lambda t: t.id)

    def _update_in_domain(self, t: Transition, env: Mapping[str, int]) -> bool:
        for name, expr in t.update.items():
            decl = self.vars[name]
            if decl.kind is not VarKind.STATE:
                continue
            val = eval_arith(expr, env)
            if not decl.lower <= val <= decl.upper:
                return False
        return True

    def apply_transition(self, state: EfsmState, t: Transition,
                         inp: Mapping[str, int]) -> EfsmState:
        """Execute ``t``: simultaneous update, then move to the target."""
        if t.id not in [x.id for x in self.enabled(state, inp)]:
            raise NotEnabledError(f"{t.id} not enabled at {state!r}")
        env = {**state.alpha, **inp}
        alpha = dict(state.alpha)
        for name, expr in t.update.items():
            if self.vars[name].kind is not VarKind.STATE:
                continue
            val = eval_arith(expr, env)
            decl = self.vars[name]
            if not decl.lower <= val <= decl.upper:
                raise DomainViolationError(f"{name} = {val} outside bounds")
            alpha[name] = val
        return EfsmState(t.target, alpha)

    def output_message(self, t: Transition, state: EfsmState,
                       inp: Mapping[str, int]) -> tuple[str, dict[str, int]]:
        """Output label and emitted output-parameter values of firing ``t``."""
        env = {**state.alpha, **inp}
        params = {}
        for name in t.output_params:
            expr = t.update.get(name)
            params[name] = eval_arith(expr, env) if expr is not None else 0
        return t.output_label, params

    # -- validation ---------------------------------------------------

    def _validate(self) -> None:
        if self.initial not in self.locations:
            raise ModelError(f"initial location {self.initial!r} not declared")
        if len(set(self.locations)) != len(self.locations):
            raise ModelError("duplicate locations")
        if ILABEL in self.vars:
            raise ModelError(f"{ILABEL} is reserved")
        kinds = {VarKind.STATE: set(), VarKind.INPUT: set(),
                 VarKind.OUTPUT: set(), VarKind.TRAP: set()}
        for v in self.vars.values():
            kinds[v.kind].add(v.name)
        for t in self.transitions.values():
            self._validate_transition(t, kinds)
        for trap in self.traps.values():
            self._validate_trap(trap, kinds)
        self._validate_connected()
        self._validate_output_observability()

    def _validate_transition(self, t: Transition, kinds) -> None:
        if t.source not in self.locations or t.target not in self.locations:
            raise ModelError(f"{t.id}: unknown source or target location")
        if t.input_label not in self.input_labels:
            raise ModelError(f"{t.id}: unknown input label {t.input_label!r}")
        if t.output_label not in self.output_labels:
            raise ModelError(f"{t.id}: unknown output label {t.output_label!r}")
        allowed_guard = kinds[VarKind.STATE] | set(t.input_params) | {ILABEL}
        bad = t.guard.free_vars() - allowed_guard
        if bad:
            raise ModelError(
                f"{t.id}: guard references {sorted(bad)}; guards may use state "
                f"variables and the parameters of the transition's input label")
        for name, expr in t.update.items():
            if name not in kinds[VarKind.STATE] | kinds[VarKind.OUTPUT]:
                raise ModelError(f"{t.id}: update assigns non-state/output {name!r}")
            bad = expr.free_vars() - (kinds[VarKind.STATE] | set(t.input_params))
            if bad:
                raise ModelError(f"{t.id}: update rhs references {sorted(bad)}")
        for p in t.input_params:
            if p not in kinds[VarKind.INPUT]:
                raise ModelError(f"{t.id}: parameter {p!r} is not an input variable")
        for p in t.output_params:
            if p not in kinds[VarKind.OUTPUT]:
                raise ModelError(f"{t.id}: parameter {p!r} is not an output variable")
        # all transitions of one input label must agree on its parameters
        for o in self.transitions.values():
            if o.input_label == t.input_label and o.input_params != t.input_params:
                raise ModelError(
                    f"label {t.input_label!r}: inconsistent parameter lists "
                    f"on {t.id} and {o.id}")

    def _validate_trap(self, trap: Trap, kinds) -> None:
        if trap.transition not in self.transitions:
            raise ModelError(f"trap {trap.var}: unknown transition {trap.transition!r}")
        if trap.var not in kinds[VarKind.TRAP]:
            raise ModelError(f"trap variable {trap.var!r} not declared with kind 'trap'")
        allowed = (kinds[VarKind.STATE] | kinds[VarKind.INPUT]
                   | kinds[VarKind.TRAP] | {ILABEL})
        bad = trap.predicate.free_vars() - allowed
        if bad:
            raise ModelError(f"trap {trap.var}: predicate references {sorted(bad)}")
        if trap.var in trap.predicate.free_vars():
            raise ModelError(f"trap {trap.var}: predicate references its own variable")

    def _validate_connected(self) -> None:
        """The underlying (undirected) control graph must be connected."""
        if len(self.locations) <= 1:
            return
        adj: dict[str, set[str]] = {l: set() for l in self.locations}
        for t in self.transitions.values():
            adj[t.source].add(t.target)
            adj[t.target].add(t.source)
        seen = {self.initial}
        stack = [self.initial]
        while stack:
            for nxt in adj[stack.pop()]:
                if nxt not in seen:
                    seen.add(nxt)
                    stack.append(nxt)
        unreached = set(self.locations) - seen
        if unreached:
            raise ModelError(f"control graph not connected; isolated: {sorted(unreached)}")

    def _validate_output_observability(self) -> None:
        for t in self.transitions.values():
            for r in self.rivals(t):
                if r.output_label == t.output_label:
                    raise ModelError(
                        f"not output-observable: rivals {t.id} and {r.id} share "
                        f"output label {t.output_label!r}")


def trap_covered_by(
    m: EfsmModel,
    s: EfsmState,
    t: Transition,
    inp: Mapping[str, int],
    trap: Trap,
    trap_vals: Mapping[str, int],
) -> bool:
    """Did firing ``t`` from ``s`` under ``inp`` cover ``trap``?

    True iff ``t`` is the trap's transition and the predicate holds on the
    pre-state, the input, and the trap values before this firing.
    """
    if t.id != trap.transition:
        return False
    env = {**trap_vals, **s.alpha, **inp}
    need = trap.predicate.free_vars()
    missing = need - set(env)
    if missing:
        env = dict(env)
        for v in missing:  # unsent parameters of other labels default to 0
            env[v] = 0
    return evaluate(trap.predicate, env)


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------

def model_to_dict(m: EfsmModel) -> dict:
    return {
        "name": m.name,
        "locations": list(m.locations),
        "initial": m.initial,
        "variables": [
            {"name": v.name, "kind": v.kind.value, "lower": v.lower, "upper": v.upper}
            for v in m.vars.values()
        ],
        "input_labels": list(m.input_labels),
        "output_labels": list(m.output_labels),
        "transitions": [
            {
                "id": t.id,
                "source": t.source,
                "target": t.target,
                "input": t.input_label,
                "output": t.output_label,
                "params": list(t.input_params),
                "output_params": list(t.output_params),
                "guard": render(t.guard),
                "update": "; ".join(
                    f"{k} := {render_arith(e)}" for k, e in t.update.items()),
            }
            for t in m.transitions.values()
        ],
        "traps": [
            {"var": tr.var, "transition": tr.transition,
             "predicate": render(tr.predicate)}
            for tr in m.traps.values()
        ],
        "goals": {k: list(v) for k, v in m.goals.items()},
    }


def model_from_dict(doc: Mapping) -> EfsmModel:
    variables = [
        VarDecl(v["name"], VarKind(v["kind"]), int(v["lower"]), int(v["upper"]))
        for v in doc.get("variables", ())
    ]
    transitions = [
        Transition(
            id=t["id"],
            source=t["source"],
            target=t["target"],
            input_label=t["input"],
            input_params=tuple(t.get("params", ())),
            output_label=t["output"],
            output_params=tuple(t.get("output_params", ())),
            guard=parse_constraint(t.get("guard", "true")),
            update=parse_update(t.get("update", "")),
        )
        for t in doc.get("transitions", ())
    ]
    traps = [
        Trap(tr["var"], tr["transition"], parse_constraint(tr.get("predicate", "true")))
        for tr in doc.get("traps", ())
    ]
    return EfsmModel(
        name=doc.get("name", "model"),
        locations=doc["locations"],
        initial=doc["initial"],
        variables=variables,
        input_labels=doc.get("input_labels", ()),
        output_labels=doc.get("output_labels", ()),
        transitions=transitions,
        traps=traps,
        goals={k: tuple(v) for k, v in doc.get("goals", {}).items()},
    )


def load_model(path: str | Path) -> EfsmModel:
    with open(path, "r", encoding="utf-8") as fh:
        return model_from_dict(json.load(fh))


def save_model(m: EfsmModel, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model_to_dict(m), fh, indent=2, sort_keys=False)
        fh.write("\n")


def bundled_model_path(name: str) -> Path:
    """Path of a model shipped with the package (m1_counter, m2_inres)."""
    return Path(__file__).parent / "models" / f"{name}.json"


def load_bundled(name: str) -> EfsmModel:
    return load_model(bundled_model_path(name))
