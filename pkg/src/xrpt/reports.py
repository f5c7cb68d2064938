"""Run reports: verdicts, executed paths, per-trap outcomes, decision log."""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping


class Verdict(enum.Enum):
    TEST_FINISHED = "TEST_FINISHED"
    TEST_FAILED = "TEST_FAILED"


@dataclass
class Step:
    """One executed transition with the exchanged messages."""

    transition: str
    input_label: str
    input_params: dict[str, int]
    output_label: str
    output_params: dict[str, int]
    mode: str  # "xrpt" | "rpt" | "anti-ant" | "random"


@dataclass
class CandidateRecord:
    transition: str
    l_c: str
    trap: str
    alpha_i: dict[str, int]
    viol: int
    dist: int
    f: int


@dataclass
class DecisionRecord:
    """What the engine saw and chose at one state."""

    location: str
    alpha: dict[str, int]
    handoff: bool = False
    candidates: list[CandidateRecord] = field(default_factory=list)
    examined: list[CandidateRecord] = field(default_factory=list)
    chosen: CandidateRecord | None = None
    discarded: list[str] = field(default_factory=list)
    tabu_emptied: list[str] = field(default_factory=list)
    latency: float = 0.0


@dataclass
class TestReport:
    model: str
    goal: str
    strategy: str
    seed: int
    verdict: Verdict = Verdict.TEST_FINISHED
    trap_status: dict[str, str] = field(default_factory=dict)
    path: list[Step] = field(default_factory=list)
    steps_xrpt: int = 0
    steps_rpt: int = 0
    offline_time: float = 0.0
    online_time: float = 0.0
    decisions: list[DecisionRecord] = field(default_factory=list)
    failure: str | None = None

    @property
    def path_length(self) -> int:
        return len(self.path)

    @property
    def mean_decision_time(self) -> float:
        times = [d.latency for d in self.decisions]
        return sum(times) / len(times) if times else 0.0

    def path_ids(self) -> list[str]:
        return [s.transition for s in self.path]

    def all_covered(self) -> bool:
        return all(v == "covered" for v in self.trap_status.values())

    def to_dict(self) -> dict:
        return {
            "model": self.model,
            "goal": self.goal,
            "strategy": self.strategy,
            "seed": self.seed,
            "verdict": self.verdict.value,
            "trap_status": dict(self.trap_status),
            "path": [
                {
                    "transition": s.transition,
                    "input": {"label": s.input_label, "params": s.input_params},
                    "output": {"label": s.output_label, "params": s.output_params},
                    "mode": s.mode,
                }
                for s in self.path
            ],
            "path_length": self.path_length,
            "online_split": {"xrpt": self.steps_xrpt, "rpt": self.steps_rpt},
            "times": {
                "offline": self.offline_time,
                "online": self.online_time,
                "per_state_mean": self.mean_decision_time,
            },
            "failure": self.failure,
        }

    def save(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2)
            fh.write("\n")


def summarize(reports: list[TestReport]) -> dict:
    """min/avg/max summary over seeds, Table-1 style."""
    lengths = [r.path_length for r in reports]
    times = [r.online_time for r in reports]
    covered = sum(1 for r in reports if r.all_covered())
    return {
        "runs": len(reports),
        "covered": covered,
        "length": {
            "min": min(lengths) if lengths else 0,
            "avg": sum(lengths) / len(lengths) if lengths else 0.0,
            "max": max(lengths) if lengths else 0,
        },
        "online_time": {
            "min": min(times) if times else 0.0,
            "avg": sum(times) / len(times) if times else 0.0,
            "max": max(times) if times else 0.0,
        },
    }
