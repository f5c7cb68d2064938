"""Control-graph analysis feeding the on-line engine.

Three artifacts, all computed once per (model, goal, reachability) triple:

- all-pairs shortest distances over the location digraph (unit weights),
- per (trap, location) search neighbourhoods: the closest locations that
  carry informative reachability constraints for the trap,
- the partition of uncovered traps into currently coverable (``tr_plus``)
  and blocked-on-dependencies (``tr_minus``).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Mapping

from .constraints import FALSE, TRUE
from .efsm import EfsmModel, TestGoal, TrapStatus
from .reachability import ReachabilitySet
from . import solver

log = logging.getLogger(__name__)

INF = float("inf")


def compute_dist(m: EfsmModel) -> dict[tuple[str, str], float]:
    """Unit-weight all-pairs shortest path lengths; INF when unreachable."""
    dist: dict[tuple[str, str], float] = {}
    adj: dict[str, set[str]] = {l: set() for l in m.locations}
    for t in m.transitions.values():
        adj[t.source].add(t.target)
    for src in m.locations:
        seen = {src: 0}
        frontier = [src]
        depth = 0
        while frontier:
            depth += 1
            nxt = []
            for loc in frontier:
                for succ in sorted(adj[loc]):
                    if succ not in seen:
                        seen[succ] = depth
                        nxt.append(succ)
            frontier = nxt
        for dst in m.locations:
            dist[(src, dst)] = seen.get(dst, INF)
    return dist


def compute_neighbourhoods(
    m: EfsmModel,
    reach: Mapping[str, ReachabilitySet],
    dist: Mapping[tuple[str, str], float],
) -> dict[str, dict[str, tuple[str, ...]]]:
    """Search neighbourhood L^C indexed by trap and location.

    Qualifying locations have a non-FALSE C* that is not merely a consequence
    of the domain bounds (domain-weak constraints carry no guidance and are
    removed).  If removal would leave a trap with no qualifying location at
    all, the non-FALSE ones are kept after all; otherwise a trap whose only
    constraint is TRUE everywhere could never attract the search.

    For each location the neighbourhood is the closest tier of qualifying
    locations; a location that itself qualifies additionally includes the
    next-closest tier.
    """
    bounds = m.bounds()
    out: dict[str, dict[str, tuple[str, ...]]] = {}
    for trap_var, rs in reach.items():
        qualifying = []
        nonfalse = []
        for loc in m.locations:
            c = rs.cstar_at(loc)
            if c is FALSE:
                continue
            nonfalse.append(loc)
            if not solver.is_weaker_or_equal(c, TRUE, m.domain(c.free_vars()), bounds):
                qualifying.append(loc)
        if not qualifying:
            qualifying = nonfalse
            if qualifying:
                log.debug("trap %s: only domain-weak constraints; keeping %s",
                          trap_var, qualifying)
        per_loc: dict[str, tuple[str, ...]] = {}
        for loc in m.locations:
            tiers: dict[float, list[str]] = {}
            for q in qualifying:
                d = dist[(loc, q)]
                if d is not INF:
                    tiers.setdefault(d, []).append(q)
            ordered = sorted(tiers)
            members: list[str] = []
            if ordered:
                members.extend(sorted(tiers[ordered[0]]))
                if ordered[0] == 0 and len(ordered) > 1:
                    members.extend(sorted(tiers[ordered[1]]))
            per_loc[loc] = tuple(members)
        out[trap_var] = per_loc
    return out


@dataclass
class TrapPartition:
    """Uncovered traps split into coverable-now and blocked-on-dependencies."""

    tr_plus: tuple[str, ...]
    tr_minus: tuple[str, ...]


def update_neighbourhood(
    goal: TestGoal, statuses: Mapping[str, TrapStatus]
) -> TrapPartition:
    """Recompute the partition from the current trap statuses.

    A trap is coverable once every trap its predicate depends on is covered;
    a dependency on a discarded trap keeps it blocked for good.
    """
    all_vars = [t.var for t in goal.traps]
    plus, minus = [], []
    for t in goal.traps:
        if statuses[t.var] is not TrapStatus.UNCOVERED:
            continue
        deps = t.dependencies(all_vars)
        if all(statuses[d] is TrapStatus.COVERED for d in deps):
            plus.append(t.var)
        else:
            minus.append(t.var)
    return TrapPartition(tuple(plus), tuple(minus))


@dataclass
class OfflineAnalysis:
    """Everything the on-line engine needs, computed before execution."""

    reach: dict[str, ReachabilitySet]
    dist: dict[tuple[str, str], float]
    neighbourhoods: dict[str, dict[str, tuple[str, ...]]]
    depth: int = 0
    elapsed: float = 0.0

    @classmethod
    def compute(cls, m: EfsmModel, goal: TestGoal, depth: int) -> "OfflineAnalysis":
        import time
        from .reachability import generate_reachability

        t0 = time.monotonic()
        reach = {t.var: generate_reachability(m, t, depth) for t in goal.traps}
        dist = compute_dist(m)
        hoods = compute_neighbourhoods(m, reach, dist)
        return cls(reach, dist, hoods, depth, time.monotonic() - t0)
