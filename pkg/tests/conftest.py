"""Shared fixtures and independent oracles used across the suite."""

from __future__ import annotations

import itertools
import random

import pytest

from xrpt.constraints import (
    Add, And, Cmp, Const, Mul, Not, Or, Sub, TRUE, FALSE, Var,
)
from xrpt.efsm import (
    EfsmModel, EfsmState, ILABEL, Transition, Trap, VarDecl, VarKind,
    load_bundled,
)
from xrpt.constraints import parse_constraint, parse_update


@pytest.fixture(scope="session")
def m1() -> EfsmModel:
    return load_bundled("m1_counter")


@pytest.fixture(scope="session")
def m2() -> EfsmModel:
    return load_bundled("m2_inres")


# ---------------------------------------------------------------------------
# Random formulas (for property suites)
# ---------------------------------------------------------------------------

CMP_OPS = ("=", "!=", "<", "<=", ">", ">=")


def random_arith(rng: random.Random, names: list[str], depth: int = 2):
    if depth == 0 or rng.random() < 0.4:
        if rng.random() < 0.5:
            return Const(rng.randint(-10, 10))
        return Var(rng.choice(names))
    kind = rng.randrange(3)
    if kind == 0:
        return Add(random_arith(rng, names, depth - 1),
                   random_arith(rng, names, depth - 1))
    if kind == 1:
        return Sub(random_arith(rng, names, depth - 1),
                   random_arith(rng, names, depth - 1))
    return Mul(rng.randint(-3, 3), random_arith(rng, names, depth - 1))


def random_formula(rng: random.Random, names: list[str], depth: int = 3):
    if depth == 0 or rng.random() < 0.35:
        roll = rng.random()
        if roll < 0.05:
            return TRUE
        if roll < 0.10:
            return FALSE
        return Cmp(random_arith(rng, names), rng.choice(CMP_OPS),
                   random_arith(rng, names))
    kind = rng.randrange(3)
    kids = tuple(random_formula(rng, names, depth - 1)
                 for _ in range(rng.randint(2, 3)))
    if kind == 0:
        return And(kids)
    if kind == 1:
        return Or(kids)
    return Not(random_formula(rng, names, depth - 1))


def random_assignment(rng: random.Random, names: list[str],
                      lo: int = 0, hi: int = 5) -> dict[str, int]:
    return {n: rng.randint(lo, hi) for n in names}


# ---------------------------------------------------------------------------
# Random small deterministic machines (for reachability oracles)
# ---------------------------------------------------------------------------

def random_small_model(rng: random.Random, name: str = "tiny") -> EfsmModel:
    """2-4 locations, 1-2 state variables on [0,5], one input parameter.

    Each location's outgoing transitions carry distinct input labels, so the
    machine is deterministic and output observability holds trivially.
    """
    n_loc = rng.randint(2, 4)
    n_var = rng.randint(1, 2)
    locs = [f"q{i}" for i in range(n_loc)]
    svars = [f"v{j}" for j in range(n_var)]

    specs: list[tuple[str, str, str, str]] = []
    for i in range(n_loc):  # ring spine keeps the graph strongly connected
        specs.append((locs[i], locs[(i + 1) % n_loc], "true", ""))
    for _ in range(rng.randint(1, 4)):
        src = rng.choice(locs)
        tgt = rng.choice(locs)
        v = rng.choice(svars)
        kind = rng.randrange(4)
        if kind == 0:
            specs.append((src, src, f"{v} <= 4", f"{v} := {v} + 1"))
        elif kind == 1:
            specs.append((src, tgt, f"{v} >= {rng.randint(1, 4)}", f"{v} := 0"))
        elif kind == 2:
            specs.append((src, src, "p >= 1 && p <= 4", f"{v} := p"))
        else:
            specs.append((src, tgt, "true", f"{v} := {rng.randint(0, 3)}"))

    out_index: dict[str, int] = {}
    transitions = []
    max_label = 0
    for k, (src, tgt, guard, update) in enumerate(specs):
        idx = out_index.get(src, 0)
        out_index[src] = idx + 1
        max_label = max(max_label, idx + 1)
        transitions.append(Transition(
            id=f"t{k}", source=src, target=tgt,
            input_label=f"a{idx}", input_params=("p",),
            output_label=f"o{idx}", output_params=(),
            guard=parse_constraint(guard), update=parse_update(update)))

    trap_t = rng.choice(transitions)
    variables = [VarDecl(v, VarKind.STATE, 0, 5) for v in svars]
    variables.append(VarDecl("p", VarKind.INPUT, 0, 5))
    variables.append(VarDecl("goal", VarKind.TRAP, 0, 1))
    return EfsmModel(
        name=name, locations=locs, initial=locs[0], variables=variables,
        input_labels=[f"a{i}" for i in range(max_label)],
        output_labels=[f"o{i}" for i in range(max_label)],
        transitions=transitions,
        traps=[Trap("goal", trap_t.id, TRUE)],
        goals={"goal": ("goal",)})


def all_states(m: EfsmModel):
    names = sorted(m.state_vars)
    ranges = [range(m.vars[v].lower, m.vars[v].upper + 1) for v in names]
    for loc in m.locations:
        for combo in itertools.product(*ranges):
            yield EfsmState(loc, dict(zip(names, combo)))


def all_inputs(m: EfsmModel):
    names = sorted(m.input_vars)
    ranges = [range(m.vars[v].lower, m.vars[v].upper + 1) for v in names]
    for ilabel in range(len(m.input_labels)):
        for combo in itertools.product(*ranges):
            yield {ILABEL: ilabel, **dict(zip(names, combo))}


def min_cover_steps(m: EfsmModel, trap: Trap) -> dict[tuple, int]:
    """Explicit-state oracle: fewest controlled steps to cover ``trap`` from
    every concrete state, on a deterministic machine."""
    from xrpt.efsm import trap_covered_by

    inputs = list(all_inputs(m))
    states = list(all_states(m))
    succ: dict[tuple, list[tuple[tuple, bool]]] = {}
    for s in states:
        edges = []
        for inp in inputs:
            for t in m.enabled(s, inp):
                nxt = m.apply_transition(s, t, inp)
                covers = trap_covered_by(m, s, t, inp, trap, {})
                edges.append((nxt.key(), covers))
        succ[s.key()] = edges
    dist: dict[tuple, int] = {}
    frontier = [k for k, edges in succ.items() if any(c for _, c in edges)]
    for k in frontier:
        dist[k] = 1
    depth = 1
    while frontier:
        depth += 1
        nxt = []
        for k, edges in succ.items():
            if k in dist:
                continue
            if any(target in dist and dist[target] == depth - 1
                   for target, _ in edges):
                dist[k] = depth
                nxt.append(k)
        frontier = nxt
    return dist
