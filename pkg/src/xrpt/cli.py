"""Command-line interface.

Subcommands:

- ``offline``   run the off-line phase and write reachability/analysis tables
- ``test``      execute one strategy against a SUT and write a report
- ``bench``     run a spec file of experiments and print a comparison table
- ``gen-model`` emit a synthetic scalable model
- ``serve-sut`` expose a simulated SUT on stdio (line protocol)

Exit codes: 0 finished with all traps covered, 1 finished with discarded or
uncovered traps, 2 test failed (nonconformance), 3 artifact error.

Set XRPT_LOG=debug|info|warning to control verbosity.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from . import __version__
from .analysis import OfflineAnalysis
from .efsm import bundled_model_path, load_model, save_model
from .reports import summarize
from .runner import (
    ExperimentSpec, comparison_table, generate_synthetic_model, run_experiment,
)
from .sut import serve_stdio

log = logging.getLogger("xrpt")

EXIT_OK = 0
EXIT_INCOMPLETE = 1
EXIT_FAILED = 2
EXIT_ERROR = 3


def _resolve_model(name: str) -> Path:
    p = Path(name)
    if p.exists():
        return p
    bundled = bundled_model_path(name)
    if bundled.exists():
        return bundled
    raise FileNotFoundError(f"model {name!r} not found (no file, not bundled)")


def _cmd_offline(args: argparse.Namespace) -> int:
    m = load_model(_resolve_model(args.model))
    goal = m.goal(args.goal)
    analysis = OfflineAnalysis.compute(m, goal, args.depth)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for var, rs in analysis.reach.items():
        rs.save(out / f"reach_{var}.json")
    summary = {
        "model": m.name,
        "goal": goal.name,
        "depth": args.depth,
        "elapsed": analysis.elapsed,
        "dist": {f"{a}->{b}": (None if d == float("inf") else int(d))
                 for (a, b), d in sorted(analysis.dist.items())},
        "neighbourhoods": {
            var: {loc: list(locs) for loc, locs in per.items()}
            for var, per in analysis.neighbourhoods.items()
        },
    }
    with open(out / "analysis.json", "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2)
        fh.write("\n")
    for var, rs in analysis.reach.items():
        print(f"trap {var} (depth {rs.depth}):")
        for loc in m.locations:
            lstar = rs.lstar.get(loc, "-")
            print(f"  C*[{loc}] = {rs.cstar_at(loc)}   L* = {lstar}")
        for tid in sorted(m.transitions):
            print(f"  Cg[{tid}] = {rs.cg_at(tid)}")
    print(f"written to {out} ({analysis.elapsed:.2f}s off-line)")
    return EXIT_OK


def _cmd_test(args: argparse.Namespace) -> int:
    sut = "simulated"
    if args.sut:
        sut = args.sut
    elif args.sut_cmd:
        sut = f"cmd:{args.sut_cmd}"
    spec = ExperimentSpec(
        model=str(_resolve_model(args.model)),
        goal=args.goal,
        strategy=args.strategy,
        depth_bound=args.depth,
        candidates=args.candidates,
        seeds=[args.seed],
        sut=sut,
        sut_policy=args.sut_policy,
        max_steps=args.max_steps,
        out_dir=args.out,
        replay_discarded=args.replay,
    )
    reports, _ = run_experiment(spec)
    rep = reports[0]
    print(f"verdict:  {rep.verdict.value}")
    print(f"path ({rep.path_length}): {'-'.join(rep.path_ids())}")
    print(f"on-line split: {rep.steps_xrpt} + {rep.steps_rpt} (xrpt + rpt)")
    print(f"per-state mean decision time: {rep.mean_decision_time * 1e3:.2f} ms")
    for var, status in rep.trap_status.items():
        print(f"  {var}: {status}")
    if rep.failure:
        print(f"failure: {rep.failure}")
    if rep.verdict.value == "TEST_FAILED":
        return EXIT_FAILED
    return EXIT_OK if rep.all_covered() else EXIT_INCOMPLETE


def _cmd_bench(args: argparse.Namespace) -> int:
    specs = ExperimentSpec.from_file(args.spec)
    rows = {}
    worst = EXIT_OK
    for spec in specs:
        spec.model = str(_resolve_model(spec.model))
        reports, summary = run_experiment(spec)
        rows[f"{spec.strategy}/{spec.goal}"] = summary
        for rep in reports:
            if rep.verdict.value == "TEST_FAILED":
                worst = max(worst, EXIT_FAILED)
            elif not rep.all_covered():
                worst = max(worst, EXIT_INCOMPLETE)
    print(comparison_table(rows))
    return worst


def _cmd_gen_model(args: argparse.Namespace) -> int:
    m = generate_synthetic_model(
        locations=args.locations,
        transitions=args.transitions,
        vars=args.vars,
        domain_width=args.domain_width,
        seed=args.seed,
        goal_traps=args.goal_traps,
        guard_terms=args.guard_terms,
    )
    save_model(m, args.out)
    print(f"wrote {args.out}: {len(m.locations)} locations, "
          f"{len(m.transitions)} transitions, goal 'chain' with "
          f"{len(m.goals['chain'])} traps")
    return EXIT_OK


def _cmd_serve_sut(args: argparse.Namespace) -> int:
    m = load_model(_resolve_model(args.model))
    serve_stdio(m, seed=args.seed, policy=args.policy)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="xrpt", description=__doc__,
                                formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--version", action="version", version=f"xrpt {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    off = sub.add_parser("offline", help="off-line reachability + analysis")
    off.add_argument("model")
    off.add_argument("goal")
    off.add_argument("--depth", type=int, default=2)
    off.add_argument("--out", default="xrpt-offline")
    off.set_defaults(func=_cmd_offline)

    test = sub.add_parser("test", help="run one on-line test")
    test.add_argument("model")
    test.add_argument("goal")
    test.add_argument("--strategy", default="xrpt",
                      choices=("xrpt", "rpt-only", "anti-ant", "random"))
    test.add_argument("--depth", type=int, default=2)
    test.add_argument("--candidates", type=int, default=5,
                      help="N: candidates examined by input optimization")
    test.add_argument("--seed", type=int, default=0)
    test.add_argument("--max-steps", type=int, default=10_000)
    test.add_argument("--sut", help="tcp://host:port for an external SUT")
    test.add_argument("--sut-cmd", help="command speaking the stdio protocol")
    test.add_argument("--sut-policy", default="uniform",
                      choices=("uniform", "first", "hostile"))
    test.add_argument("--replay", action="store_true",
                      help="reset and re-run once when traps were discarded")
    test.add_argument("--out", help="directory for the JSON report")
    test.set_defaults(func=_cmd_test)

    bench = sub.add_parser("bench", help="run a JSON spec of experiments")
    bench.add_argument("spec")
    bench.set_defaults(func=_cmd_bench)

    gen = sub.add_parser("gen-model", help="generate a synthetic model")
    gen.add_argument("--locations", type=int, required=True)
    gen.add_argument("--transitions", type=int, required=True)
    gen.add_argument("--vars", type=int, default=4)
    gen.add_argument("--domain-width", type=int, default=10)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--goal-traps", type=int, default=4)
    gen.add_argument("--guard-terms", type=int, default=2)
    gen.add_argument("--out", default="synthetic.json")
    gen.set_defaults(func=_cmd_gen_model)

    serve = sub.add_parser("serve-sut", help="simulated SUT on stdio")
    serve.add_argument("model")
    serve.add_argument("--seed", type=int, default=0)
    serve.add_argument("--policy", default="uniform",
                       choices=("uniform", "first", "hostile"))
    serve.set_defaults(func=_cmd_serve_sut)
    return p


def main(argv: list[str] | None = None) -> int:
    level = os.environ.get("XRPT_LOG", "warning").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except BrokenPipeError:
        return EXIT_OK
    except Exception as exc:  # surfaced with context, stable exit code
        log.error("%s", exc, exc_info=os.environ.get("XRPT_LOG") == "debug")
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
