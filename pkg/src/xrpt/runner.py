"""Experiment driver: off-line pipeline, per-seed on-line runs, summaries,
and a scalable synthetic model generator.

The driver wires the pieces together for the CLI and for benchmark specs:
it loads a model, resolves a goal, runs the off-line analysis once, executes
the chosen strategy per seed against a simulated or external SUT, and emits
per-seed reports plus a min/avg/max comparison table.
"""

from __future__ import annotations

import json
import logging
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

from .analysis import OfflineAnalysis
from .baselines import run_baseline
from .constraints import parse_constraint, parse_update
from .efsm import (
    EfsmModel, ModelError, TestGoal, Transition, Trap, VarDecl, VarKind,
    load_model,
)
from .engine import EngineConfig, run as run_engine, run_rpt_only
from .reports import TestReport, summarize
from .sut import ExternalProcessSut, SimulatedSut, SutPort, TcpSut

log = logging.getLogger(__name__)

STRATEGIES = ("xrpt", "rpt-only", "anti-ant", "random")


class InfeasibleShape(Exception):
    """Synthetic model parameters cannot produce a connected machine."""


@dataclass
class ExperimentSpec:
    model: str
    goal: str
    strategy: str = "xrpt"
    depth_bound: int = 2
    candidates: int = 5
    seeds: Sequence[int] = (0,)
    sut: str = "simulated"          # "simulated" | "tcp://host:port" | "cmd:..."
    sut_policy: str = "uniform"
    max_steps: int = 10_000
    out_dir: str | None = None
    replay_discarded: bool = False

    def __post_init__(self) -> None:
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}")
        if self.depth_bound < 1:
            raise ValueError("depth_bound must be >= 1")
        if not self.seeds:
            raise ValueError("at least one seed is required")

    @classmethod
    def from_file(cls, path: str | Path) -> list["ExperimentSpec"]:
        """A bench file holds one spec or a list of specs (JSON)."""
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
        docs = doc if isinstance(doc, list) else [doc]
        return [cls(**d) for d in docs]


def _make_sut(spec: ExperimentSpec, m: EfsmModel, seed: int) -> SutPort:
    if spec.sut == "simulated":
        return SimulatedSut(m, seed=seed, policy=spec.sut_policy)
    if spec.sut.startswith("tcp://"):
        host, _, port = spec.sut[len("tcp://"):].partition(":")
        return TcpSut(host, int(port))
    if spec.sut.startswith("cmd:"):
        return ExternalProcessSut(spec.sut[len("cmd:"):])
    raise ValueError(f"unknown SUT mode {spec.sut!r}")


def run_experiment(spec: ExperimentSpec,
                   model: EfsmModel | None = None) -> tuple[list[TestReport], dict]:
    """Execute one spec over all its seeds; returns reports and a summary."""
    m = model if model is not None else load_model(spec.model)
    goal = m.goal(spec.goal)
    analysis = None
    if spec.strategy in ("xrpt", "rpt-only"):
        analysis = OfflineAnalysis.compute(m, goal, spec.depth_bound)
    reports: list[TestReport] = []
    for seed in spec.seeds:
        sut = _make_sut(spec, m, seed)
        cfg = EngineConfig(candidate_budget=spec.candidates, rng_seed=seed,
                           max_steps=spec.max_steps)
        try:
            if spec.strategy == "xrpt":
                rep = run_engine(m, analysis, goal, sut, cfg)
                if spec.replay_discarded and not rep.all_covered() and \
                        "discarded" in rep.trap_status.values():
                    rep = run_engine(m, analysis, goal, sut, cfg)
            elif spec.strategy == "rpt-only":
                rep = run_rpt_only(m, analysis, goal, sut, cfg)
            else:
                rep = run_baseline(m, goal, sut, spec.strategy, seed,
                                   spec.max_steps)
        finally:
            close = getattr(sut, "close", None)
            if close is not None:
                close()
        if analysis is not None:
            rep.offline_time = analysis.elapsed
        reports.append(rep)
        if spec.out_dir:
            out = Path(spec.out_dir)
            out.mkdir(parents=True, exist_ok=True)
            rep.save(out / f"report_{spec.strategy}_{seed}.json")
    return reports, summarize(reports)


def comparison_table(rows: Mapping[str, dict]) -> str:
    """Aligned text table over per-strategy summaries."""
    headers = ["strategy", "runs", "covered", "len min/avg/max", "online s (avg)"]
    lines = [headers]
    for name, s in rows.items():
        lines.append([
            name,
            str(s["runs"]),
            str(s["covered"]),
            "%d / %.1f / %d" % (s["length"]["min"], s["length"]["avg"],
                                s["length"]["max"]),
            "%.3f" % s["online_time"]["avg"],
        ])
    widths = [max(len(r[i]) for r in lines) for i in range(len(headers))]
    out = []
    for idx, row in enumerate(lines):
        out.append("  ".join(cell.ljust(widths[i]) for i, cell in enumerate(row)))
        if idx == 0:
            out.append("  ".join("-" * w for w in widths))
    return "\n".join(out)


# ---------------------------------------------------------------------------
# Synthetic scalable models
# ---------------------------------------------------------------------------

def generate_synthetic_model(
    locations: int,
    transitions: int,
    vars: int,
    domain_width: int,
    seed: int,
    goal_traps: int = 4,
    guard_terms: int = 2,
) -> EfsmModel:
    """A connected, output-observable machine of the requested shape.

    The control graph is a ring (or a chain when only ``locations - 1``
    transitions are allowed) plus randomly placed counter self-loops,
    threshold-guarded chords, and resets.  Each location's outgoing
    transitions carry distinct input labels, so the machine is deterministic
    and trivially output-observable.  A chained multi-trap goal named
    ``"chain"`` is attached over transitions known to be repeatedly fireable.
    """
    if locations < 1 or vars < 1:
        raise InfeasibleShape("need at least one location and one variable")
    if transitions < locations - 1:
        raise InfeasibleShape(
            f"{transitions} transitions cannot connect {locations} locations")
    rng = random.Random(seed)
    locs = [f"l{i}" for i in range(locations)]
    svars = [f"v{j}" for j in range(vars)]
    width = max(domain_width, 1)
    pump_cap = min(width, 9)

    specs: list[dict] = []

    def add(src: str, tgt: str, guard: str, update: str, kind: str) -> None:
        specs.append({"src": src, "tgt": tgt, "guard": guard,
                      "update": update, "kind": kind})

    ring = locations if transitions >= locations else locations - 1
    for i in range(ring):
        src, tgt = locs[i], locs[(i + 1) % locations]
        add(src, tgt, "true", "", "ring")
    budget = transitions - ring

    # every variable gets a pump somewhere, then random structure
    pump_locs: dict[str, str] = {}
    for j, v in enumerate(svars):
        if budget <= 0:
            break
        loc = locs[j % locations]
        add(loc, loc, f"{v} <= {pump_cap - 1}", f"{v} := {v} + 1", "pump")
        pump_locs[v] = loc
        budget -= 1
    while budget > 0:
        kind = rng.choice(("pump", "chord", "reset", "park"))
        src = locs[rng.randrange(locations)]
        v = svars[rng.randrange(vars)]
        if kind == "pump":
            add(src, src, f"{v} <= {pump_cap - 1}", f"{v} := {v} + 1", "pump")
        elif kind == "chord" and locations > 1:
            tgt = locs[rng.randrange(locations)]
            thresh = rng.randint(1, pump_cap)
            extras = [f"{svars[rng.randrange(vars)]} >= 0"
                      for _ in range(max(0, guard_terms - 1))]
            guard = " && ".join([f"{v} >= {thresh}"] + extras)
            add(src, tgt, guard, f"{v} := 0", "chord")
        elif kind == "reset":
            add(src, locs[0], "true", f"{v} := 0", "reset")
        else:
            add(src, src, "p >= 1", "", "park")
        budget -= 1

    # labels: distinct per source location; all labels share the parameter p
    out_index: dict[str, int] = {}
    built: list[Transition] = []
    label_pool_size = 0
    for k, sp in enumerate(specs):
        idx = out_index.get(sp["src"], 0)
        out_index[sp["src"]] = idx + 1
        label_pool_size = max(label_pool_size, idx + 1)
        built.append(Transition(
            id=f"t{k}",
            source=sp["src"],
            target=sp["tgt"],
            input_label=f"in{idx}",
            input_params=("p",),
            output_label=f"out{idx}",
            output_params=(),
            guard=parse_constraint(sp["guard"]),
            update=parse_update(sp["update"]),
        ))

    variables = [VarDecl(v, VarKind.STATE, 0, width) for v in svars]
    variables.append(VarDecl("p", VarKind.INPUT, 0, min(width, 11)))

    # chained goal over repeatedly fireable transitions (ring and pumps)
    candidates = [t for t, sp in zip(built, specs) if sp["kind"] in ("ring", "pump")]
    chain = [candidates[rng.randrange(len(candidates))]
             for _ in range(min(goal_traps, max(1, len(candidates))))]
    traps = []
    goal_vars = []
    prev: list[str] = []
    for k, t in enumerate(chain, start=1):
        var = f"chain_tr{k}"
        pred = " && ".join(f"{v} = 1" for v in prev) or "true"
        traps.append(Trap(var, t.id, parse_constraint(pred)))
        variables.append(VarDecl(var, VarKind.TRAP, 0, 1))
        goal_vars.append(var)
        prev.append(var)

    return EfsmModel(
        name=f"synthetic_{locations}x{transitions}_s{seed}",
        locations=locs,
        initial=locs[0],
        variables=variables,
        input_labels=[f"in{i}" for i in range(label_pool_size)],
        output_labels=[f"out{i}" for i in range(label_pool_size)],
        transitions=built,
        traps=traps,
        goals={"chain": tuple(goal_vars)},
    )
