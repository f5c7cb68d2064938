"""Reference strategies: random walk and randomized anti-ant.

Both make purely local moves and serve as the comparison floor for the
guided engine.  Anti-ant keeps a per-transition visit count (pheromone,
without decay) and always moves along a least-visited transition whose
guard is satisfiable at the current state; the random walk ignores counts.
Inputs are drawn with the randomized-branching solver, not by rejection
sampling, so constrained guards are handled exactly.
"""

from __future__ import annotations

import logging
import random
import time
from collections import Counter

from .constraints import Cmp, Const, Not, Var, conj, push_negations, substitute
from .efsm import EfsmModel, EfsmState, ILABEL, TestGoal, Transition, TrapStatus
from .engine import RunContext, StepBudgetExceeded
from .reachability import NonConformance
from .reports import TestReport, Verdict
from .sut import SutPort, conforms
from . import solver

log = logging.getLogger(__name__)

PheromoneMap = Counter


class DeadEnd(Exception):
    """No outgoing transition has a satisfiable guard at the current state."""


_formula_cache: dict[tuple[int, str], object] = {}


def _step_formula(m: EfsmModel, t: Transition):
    """guard && iLabel = label(t) && D[update(t)], cached per transition."""
    key = (id(m), t.id)
    if key not in _formula_cache:
        relevant = set(m.state_vars) | set(m.input_vars)
        from .constraints import simplify
        _formula_cache[key] = simplify(conj([
            t.guard,
            Cmp(Var(ILABEL), "=", Const(m.label_index(t.input_label))),
            substitute(m.domain(relevant), dict(t.update)),
        ]), m.bounds())
    return _formula_cache[key]


def _enabled_inputs(m: EfsmModel, s: EfsmState, t: Transition,
                    rng: random.Random) -> dict[str, int] | None:
    """A random input enabling ``t`` at ``s``, or None."""
    free = {v: m.bounds()[v] for v in m.input_vars}
    free[ILABEL] = m.bounds()[ILABEL]
    ok, model = solver.random_model(free, dict(s.alpha), _step_formula(m, t), rng)
    return model if ok else None


def _feasible_moves(m: EfsmModel, s: EfsmState, rng: random.Random
                    ) -> list[tuple[Transition, dict[str, int]]]:
    feasible = []
    for t in sorted(m.out(s.location), key=lambda t: t.id):
        inp = _enabled_inputs(m, s, t, rng)
        if inp is not None:
            feasible.append((t, inp))
    if not feasible:
        raise DeadEnd(f"no satisfiable guard at {s!r}")
    return feasible


def anti_ant_step(
    m: EfsmModel, s: EfsmState, ph: PheromoneMap, rng: random.Random
) -> tuple[Transition, dict[str, int]]:
    """Pick a least-visited transition with a satisfiable guard; ties random.

    The chosen transition's count is incremented.
    """
    feasible = _feasible_moves(m, s, rng)
    least = min(ph[t.id] for t, _ in feasible)
    pool = [(t, inp) for t, inp in feasible if ph[t.id] == least]
    t, inp = pool[rng.randrange(len(pool))]
    ph[t.id] += 1
    return t, inp


def random_step(
    m: EfsmModel, s: EfsmState, rng: random.Random
) -> tuple[Transition, dict[str, int]]:
    """Uniform choice among transitions with a satisfiable guard."""
    feasible = _feasible_moves(m, s, rng)
    return feasible[rng.randrange(len(feasible))]


def run_baseline(
    m: EfsmModel,
    goal: TestGoal,
    sut: SutPort,
    strategy: str = "anti-ant",
    seed: int = 0,
    max_steps: int = 10_000,
    report: TestReport | None = None,
) -> TestReport:
    """Walk the SUT with a baseline strategy until the goal is exhausted.

    Stops when every trap is covered, on nonconformance, or at the step cap
    (remaining traps are then left uncovered; the verdict stays FINISHED
    because baselines have no unreachability argument).
    """
    if strategy not in ("anti-ant", "random"):
        raise ValueError(f"unknown baseline {strategy!r}")
    if report is None:
        report = TestReport(m.name, goal.name, strategy, seed)
    rng = random.Random(seed)
    ph: PheromoneMap = Counter()
    ctx = RunContext(m, goal, report, max_steps + 1)
    sut.reset()
    start = time.monotonic()
    try:
        while len(report.path) < max_steps:
            if all(ctx.statuses[t.var] is not TrapStatus.UNCOVERED
                   for t in goal.traps):
                break
            s = ctx.state
            if strategy == "anti-ant":
                t, inp = anti_ant_step(m, s, ph, rng)
            else:
                t, inp = random_step(m, s, rng)
            label = m.input_labels[inp[ILABEL]]
            params = {p: inp[p] for p in t.input_params}
            out = sut.send(label, params)
            actual = conforms(m, s, inp, out)
            if actual is None:
                raise NonConformance(
                    f"output {out[0]}{out[1]} matches no enabled transition")
            ctx.record_step(s, actual, inp, out, strategy)
    except (NonConformance, DeadEnd) as exc:
        report.verdict = Verdict.TEST_FAILED
        report.failure = str(exc)
    else:
        report.verdict = Verdict.TEST_FINISHED
    report.online_time = time.monotonic() - start
    for var, st in ctx.statuses.items():
        report.trap_status[var] = st.value
    return report
