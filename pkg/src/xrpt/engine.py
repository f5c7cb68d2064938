"""On-line decision engine: fitness-guided candidate search with tabu lists.

Each cycle works from cheap to expensive.  First the planner is given a
chance: while the reachability constraint of any active trap is satisfiable
at the current state, coverage is delegated to the plan-following step of
:mod:`xrpt.reachability`.  Otherwise candidate moves are generated per
active trap and outgoing transition, filtered by a satisfiability test over

    guard(t) && not guard(rivals) && iLabel = label(t)
    && D[update(t)] && not Tabu[trap, location]

and scored with ``f = dist^2 + viol^2`` where ``dist`` is one plus the
control-graph distance from the transition's target to a neighbourhood
location and ``viol`` the violations degree of that location's reachability
constraint after applying the update and the chosen values.  Up to N of the
best candidates are re-solved with input optimization, the winner is played
against the SUT, and the move actually observed is recorded in the tabu
list so the search cannot revisit it.

Traps whose candidate generation comes up empty twice (tabu emptied in
between, with the twice-emptied-locations filter applied on the second run)
are discarded; discarding is an over-approximation of unreachability.
"""

from __future__ import annotations

import heapq
import logging
import time
from dataclasses import dataclass, field
from typing import Mapping

from .analysis import INF, OfflineAnalysis, TrapPartition, update_neighbourhood
from .constraints import (
    Cmp, Const, ConstraintExpr, FALSE, Not, TRUE, Var, conj, evaluate,
    push_negations, render, simplify, substitute, violations_degree,
)
from .efsm import (
    EfsmModel, EfsmState, ILABEL, TestGoal, Transition, Trap, TrapStatus,
    trap_covered_by,
)
from .reachability import NonConformance, Stuck, cstar_satisfiable, rpt_online_step
from .reports import CandidateRecord, DecisionRecord, Step, TestReport, Verdict
from .sut import SutPort, conforms
from . import solver

log = logging.getLogger(__name__)


class StepBudgetExceeded(Exception):
    """The safety watchdog fired; treated as a defect in the artifact."""


@dataclass
class EngineConfig:
    candidate_budget: int = 5      # N: tuples examined by input optimization
    rng_seed: int = 0
    max_steps: int = 10_000


@dataclass(frozen=True)
class TabuMove:
    """One recorded move: transition plus full state and input assignments."""

    transition: str
    alpha: tuple[tuple[str, int], ...]
    alpha_i: tuple[tuple[str, int], ...]

    def conjunction(self) -> ConstraintExpr:
        parts = [Cmp(Var(k), "=", Const(v)) for k, v in self.alpha + self.alpha_i]
        return conj(parts)


class TabuStore:
    """Per (trap, location) move history plus the emptied-location sets L^T."""

    def __init__(self) -> None:
        self.entries: dict[tuple[str, str], list[TabuMove]] = {}
        self.emptied: dict[str, set[str]] = {}
        self.empty_counts: dict[tuple[str, str], int] = {}

    def moves(self, trap: str, loc: str) -> list[TabuMove]:
        return self.entries.get((trap, loc), [])

    def record(self, trap: str, loc: str, move: TabuMove) -> None:
        self.entries.setdefault((trap, loc), []).append(move)

    def empty(self, trap: str, loc: str) -> None:
        self.entries[(trap, loc)] = []
        self.emptied.setdefault(trap, set()).add(loc)
        self.empty_counts[(trap, loc)] = self.empty_counts.get((trap, loc), 0) + 1

    def emptied_locations(self, trap: str) -> set[str]:
        return self.emptied.get(trap, set())

    def negation_for(self, trap: str, loc: str, transition: str) -> ConstraintExpr:
        """!Tabu with the transition selector resolved to ``transition``."""
        parts = [Not(mv.conjunction()) for mv in self.moves(trap, loc)
                 if mv.transition == transition]
        return conj(parts) if parts else TRUE

    def as_constraint(self, trap: str, loc: str,
                      selector: str = "__move") -> ConstraintExpr:
        """The stored disjunction-of-conjunctions, with a synthetic selector
        variable standing for the transition of each recorded move."""
        from .constraints import disj
        if not self.moves(trap, loc):
            return FALSE
        disjuncts = []
        for mv in self.moves(trap, loc):
            sel = Cmp(Var(selector), "=", Const(_stable_id(mv.transition)))
            disjuncts.append(conj([sel, mv.conjunction()]))
        return disj(disjuncts)


def _stable_id(name: str) -> int:
    return int.from_bytes(name.encode()[:6].ljust(6, b"\0"), "big") % 1_000_003


@dataclass(frozen=True)
class SolutionCandidate:
    """A possible move: transition, inputs, neighbourhood target, trap, f."""

    transition: str
    alpha_i: tuple[tuple[str, int], ...]
    l_c: str
    trap: str
    f: int
    viol: int
    dist: int

    def sort_key(self) -> tuple:
        return (self.f, self.transition, self.l_c, self.trap)

    def record(self) -> CandidateRecord:
        return CandidateRecord(self.transition, self.l_c, self.trap,
                               dict(self.alpha_i), self.viol, self.dist, self.f)


def make_tabu_element(actual_move: TabuMove, best_move: TabuMove,
                      entry: list[TabuMove]) -> TabuMove:
    """The element appended after a move: normally the actual move, but the
    intended best move when non-determinism keeps replaying an already
    recorded actual move (otherwise perfect rivals could loop the search)."""
    if actual_move in entry:
        return best_move
    return actual_move


class RunContext:
    """Mutable per-run state: trap statuses, executed path, watchdog."""

    def __init__(self, m: EfsmModel, goal: TestGoal, report: TestReport,
                 max_steps: int):
        self.m = m
        self.goal = goal
        self.report = report
        self.max_steps = max_steps
        self.statuses: dict[str, TrapStatus] = {
            t.var: TrapStatus.UNCOVERED for t in goal.traps}
        self.state = m.initial_state()

    def trap_values(self) -> dict[str, int]:
        vals = {v: 0 for v in self.m.trap_vars}
        for var, st in self.statuses.items():
            vals[var] = 1 if st is TrapStatus.COVERED else 0
        return vals

    def is_covered(self, var: str) -> bool:
        return self.statuses[var] is TrapStatus.COVERED

    def set_discarded(self, var: str) -> None:
        if self.statuses[var] is TrapStatus.UNCOVERED:
            self.statuses[var] = TrapStatus.DISCARDED

    def record_step(self, prev: EfsmState, t: Transition,
                    inp: Mapping[str, int], observed: tuple[str, dict],
                    mode: str) -> None:
        label = self.m.input_labels[inp[ILABEL]]
        params = {p: inp[p] for p in t.input_params}
        self.report.path.append(Step(t.id, label, params, observed[0],
                                     dict(observed[1]), mode))
        if mode == "rpt":
            self.report.steps_rpt += 1
        elif mode == "xrpt":
            self.report.steps_xrpt += 1
        pre_vals = self.trap_values()
        for trap in self.goal.traps:  # pre-firing trap values decide coverage
            if self.statuses[trap.var] is TrapStatus.UNCOVERED and \
                    trap_covered_by(self.m, prev, t, inp, trap, pre_vals):
                self.statuses[trap.var] = TrapStatus.COVERED
        self.state = self.m.apply_transition(prev, t, inp)
        if len(self.report.path) > self.max_steps:
            raise StepBudgetExceeded(f"exceeded {self.max_steps} steps")


class _Engine:
    def __init__(self, m: EfsmModel, analysis: OfflineAnalysis, goal: TestGoal,
                 sut: SutPort, cfg: EngineConfig, report: TestReport):
        self.m = m
        self.analysis = analysis
        self.goal = goal
        self.sut = sut
        self.cfg = cfg
        self.ctx = RunContext(m, goal, report, cfg.max_steps)
        self.tabu = TabuStore()
        self.bounds = m.bounds()
        self._static: dict[str, ConstraintExpr] = {}
        self._input_box = {v: self.bounds[v] for v in m.input_vars}
        self._input_box[ILABEL] = self.bounds[ILABEL]
        self._order = [ILABEL] + sorted(m.input_vars)

    # -- static per-transition formula: guard, label, rival exclusion, D --

    def static_formula(self, t: Transition) -> ConstraintExpr:
        if t.id not in self._static:
            m = self.m
            relevant = set(m.state_vars) | set(m.input_vars)
            parts = [t.guard,
                     Cmp(Var(ILABEL), "=", Const(m.label_index(t.input_label)))]
            # a perfect rival's guard cannot be excluded by any input, so
            # negating it would only make the move permanently infeasible;
            # output observation plus the tabu rule handle those rivals
            perfect = {r.id for r in m.perfect_rivals(t)}
            parts += [push_negations(Not(r.guard)) for r in m.rivals(t)
                      if r.id not in perfect]
            parts.append(substitute(m.domain(relevant), dict(t.update)))
            self._static[t.id] = simplify(conj(parts), self.bounds)
        return self._static[t.id]

    # -- main loop ------------------------------------------------------

    def run(self) -> TestReport:
        report = self.ctx.report
        start = time.monotonic()
        self.sut.reset()
        partition = update_neighbourhood(self.goal, self.ctx.statuses)
        try:
            while partition.tr_plus:
                partition = self._online_rpt(partition)
                if not partition.tr_plus:
                    break
                t0 = time.monotonic()
                decision = DecisionRecord(self.ctx.state.location,
                                          dict(self.ctx.state.alpha))
                heap, partition = self._generate_candidates(partition, decision)
                if not heap:
                    decision.latency = time.monotonic() - t0
                    report.decisions.append(decision)
                    continue
                best = self._choose_most_promising(heap, decision)
                decision.latency = time.monotonic() - t0
                report.decisions.append(decision)
                self._interact(best)
        except NonConformance as exc:
            report.verdict = Verdict.TEST_FAILED
            report.failure = str(exc)
        else:
            report.verdict = Verdict.TEST_FINISHED
        report.online_time = time.monotonic() - start
        for var, st in self.ctx.statuses.items():
            report.trap_status[var] = st.value
        return report

    # -- subroutine #1: hand off to the planner when constraints hold ----

    def _online_rpt(self, partition: TrapPartition) -> TrapPartition:
        while True:
            ready = [
                var for var in partition.tr_plus
                if cstar_satisfiable(self.m, self.analysis.reach[var], self.ctx.state)
            ]
            ready.sort(key=lambda v: (
                self.analysis.reach[v].lstar.get(self.ctx.state.location, 10 ** 6), v))
            covered_one = False
            for var in ready:
                start_loc = self.ctx.state.location
                start_alpha = dict(self.ctx.state.alpha)
                steps_before = len(self.ctx.report.path)
                try:
                    rpt_online_step(self.m, self.analysis.reach[var],
                                    self.ctx.state, self.m.traps[var],
                                    self.sut, self.ctx)
                except Stuck as exc:
                    log.debug("planner stuck on %s: %s", var, exc)
                if len(self.ctx.report.path) > steps_before or self.ctx.is_covered(var):
                    self.ctx.report.decisions.append(DecisionRecord(
                        start_loc, start_alpha, handoff=True))
                if self.ctx.is_covered(var):
                    covered_one = True
                    break  # statuses changed; recompute the ready set
            partition = update_neighbourhood(self.goal, self.ctx.statuses)
            if not covered_one:
                return partition

    # -- subroutine #2: generate solution candidates ---------------------

    def _generate_candidates(
        self, partition: TrapPartition, decision: DecisionRecord
    ) -> tuple[list, TrapPartition]:
        m = self.m
        loc = self.ctx.state.location
        alpha = dict(self.ctx.state.alpha)
        fixed = {**alpha, **self.ctx.trap_values()}
        heap: list[tuple[tuple, SolutionCandidate]] = []
        outgoing = sorted(m.out(loc), key=lambda t: t.id)
        for run in (0, 1):
            produced = False
            for var in list(partition.tr_plus):
                per_trap: list[SolutionCandidate] = []
                hood = self.analysis.neighbourhoods[var].get(loc, ())
                cstar = self.analysis.reach[var].cstar
                lt = self.tabu.emptied_locations(var)
                escalate = self.tabu.empty_counts.get((var, loc), 0) >= 2
                for t in outgoing:
                    formula = conj([self.static_formula(t),
                                    self.tabu.negation_for(var, loc, t.id)])
                    ok, alpha_i = solver.sat_model(
                        self._input_box, fixed, formula, self._order)
                    if not ok:
                        continue
                    for l_c in hood:
                        if (run == 1 or escalate) and \
                                t.target in lt and t.source in lt:
                            continue
                        cand = self._score(t, alpha_i, l_c, var, cstar[l_c])
                        if cand is not None:
                            per_trap.append(cand)
                if per_trap:
                    heap.extend((c.sort_key(), c) for c in per_trap)
                    produced = True
                elif run == 0:
                    self.tabu.empty(var, loc)
                    decision.tabu_emptied.append(var)
                else:
                    self.ctx.set_discarded(var)
                    decision.discarded.append(var)
                    partition = update_neighbourhood(self.goal, self.ctx.statuses)
            if heap:
                break
        heapq.heapify(heap)
        decision.candidates = [c.record() for _, c in sorted(heap)]
        return heap, partition

    def _score(self, t: Transition, alpha_i: Mapping[str, int], l_c: str,
               trap_var: str, cstar_lc: ConstraintExpr) -> SolutionCandidate | None:
        d = self.analysis.dist[(t.target, l_c)]
        if d is INF:
            return None
        dist = 1 + int(d)
        env = {**self.ctx.state.alpha, **alpha_i}
        pulled = substitute(cstar_lc, dict(t.update))
        viol = violations_degree(pulled, env)
        return SolutionCandidate(t.id, tuple(sorted(alpha_i.items())), l_c,
                                 trap_var, dist * dist + viol * viol, viol, dist)

    # -- subroutine #3: optimize the best N and pick the move -------------

    def _choose_most_promising(self, heap: list, decision: DecisionRecord
                               ) -> SolutionCandidate:
        m = self.m
        loc = self.ctx.state.location
        fixed = {**self.ctx.state.alpha, **self.ctx.trap_values()}
        best: SolutionCandidate | None = None
        for _ in range(min(self.cfg.candidate_budget, len(heap))):
            _, cand = heapq.heappop(heap)
            t = m.transitions[cand.transition]
            formula = conj([self.static_formula(t),
                            self.tabu.negation_for(cand.trap, loc, t.id)])
            objective = substitute(
                self.analysis.reach[cand.trap].cstar[cand.l_c], dict(t.update))
            ok, alpha_i = solver.optimize_model(
                self._input_box, fixed, formula, objective, self._order)
            if not ok:  # cannot happen: same formula passed the SAT filter
                continue
            viol = violations_degree(substitute(objective, fixed), alpha_i)
            f = cand.dist * cand.dist + viol * viol
            improved = SolutionCandidate(cand.transition,
                                         tuple(sorted(alpha_i.items())),
                                         cand.l_c, cand.trap, f, viol, cand.dist)
            decision.examined.append(improved.record())
            if best is None or f < best.f:
                best = improved
        assert best is not None
        decision.chosen = best.record()
        return best

    # -- subroutine #4: play the move against the SUT ---------------------

    def _interact(self, best: SolutionCandidate) -> None:
        m = self.m
        state = self.ctx.state
        loc = state.location
        t = m.transitions[best.transition]
        alpha_i = dict(best.alpha_i)
        label = m.input_labels[alpha_i[ILABEL]]
        params = {p: alpha_i[p] for p in t.input_params}
        out_label, out_params = self.sut.send(label, params)
        actual = conforms(m, state, alpha_i, (out_label, out_params))
        if actual is None:
            raise NonConformance(
                f"output {out_label}{out_params} matches no enabled transition "
                f"at {state!r} for input {label}{params}")
        alpha_items = tuple(sorted(state.alpha.items()))
        actual_move = TabuMove(actual.id, alpha_items, best.alpha_i)
        best_move = TabuMove(best.transition, alpha_items, best.alpha_i)
        entry = self.tabu.moves(best.trap, loc)
        self.tabu.record(best.trap, loc,
                         make_tabu_element(actual_move, best_move, entry))
        self.ctx.record_step(state, actual, alpha_i,
                             (out_label, out_params), "xrpt")


def run(
    m: EfsmModel,
    analysis: OfflineAnalysis,
    goal: TestGoal,
    sut: SutPort,
    cfg: EngineConfig | None = None,
    report: TestReport | None = None,
) -> TestReport:
    """Execute the on-line algorithm until the goal is exhausted.

    Returns TEST_FINISHED with per-trap statuses (covered / discarded /
    uncovered) or TEST_FAILED at the first conformance violation.
    """
    cfg = cfg or EngineConfig()
    if report is None:
        report = TestReport(m.name, goal.name, "xrpt", cfg.rng_seed)
    report.offline_time = analysis.elapsed
    return _Engine(m, analysis, goal, sut, cfg, report).run()


def run_rpt_only(
    m: EfsmModel,
    analysis: OfflineAnalysis,
    goal: TestGoal,
    sut: SutPort,
    cfg: EngineConfig | None = None,
    report: TestReport | None = None,
) -> TestReport:
    """Plan-following only: cover traps while reachability constraints hold.

    Without the heuristic search this strategy cannot move when no ``C*`` is
    satisfiable at the current state, which is exactly the gap the engine
    fills; remaining traps are reported uncovered.
    """
    cfg = cfg or EngineConfig()
    if report is None:
        report = TestReport(m.name, goal.name, "rpt-only", cfg.rng_seed)
    report.offline_time = analysis.elapsed
    eng = _Engine(m, analysis, goal, sut, cfg, report)
    start = time.monotonic()
    sut.reset()
    partition = update_neighbourhood(goal, eng.ctx.statuses)
    try:
        eng._online_rpt(partition)
    except NonConformance as exc:
        report.verdict = Verdict.TEST_FAILED
        report.failure = str(exc)
    else:
        report.verdict = Verdict.TEST_FINISHED
    report.online_time = time.monotonic() - start
    for var, st in eng.ctx.statuses.items():
        report.trap_status[var] = st.value
    return report
