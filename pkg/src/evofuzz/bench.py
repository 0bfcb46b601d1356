"""Repeated evolutionary-vs-baseline comparison on a coverage-reporting target."""

from __future__ import annotations

import statistics
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Dict, List, Sequence

from .evolution import CampaignConfig, VirtualClock, run_campaign
from .grammar import Grammar
from .harness import TargetSpec, mann_whitney_u

MODE_INDEX = {"evolutionary": 0, "baseline": 1}


def run_seed(master_seed: int, mode: str, k: int) -> int:
    return master_seed * 2 + MODE_INDEX[mode] + 2 * k


@dataclass
class RunOutcome:
    mode: str
    repeat: int
    rng_seed: int
    coverage_percent: float
    exception_types: List[str]
    first_seen: Dict[str, int]
    generations: int
    inputs_executed: int


@dataclass
class BenchSummary:
    runs: List[RunOutcome] = field(default_factory=list)

    def coverage(self, mode: str) -> List[float]:
        return [r.coverage_percent for r in self.runs if r.mode == mode]

    def median(self, mode: str) -> float:
        return statistics.median(self.coverage(mode))

    def type_counts(self, mode: str) -> Dict[str, int]:
        counts: Dict[str, int] = {}
        for r in self.runs:
            if r.mode == mode:
                for t in r.exception_types:
                    counts[t] = counts.get(t, 0) + 1
        return dict(sorted(counts.items()))

    def test(self):
        return mann_whitney_u(self.coverage("evolutionary"), self.coverage("baseline"))

    def to_dict(self) -> dict:
        u, p = self.test()
        return {
            "evolutionary": {
                "median_coverage": self.median("evolutionary"),
                "coverage": self.coverage("evolutionary"),
                "exception_types": self.type_counts("evolutionary"),
            },
            "baseline": {
                "median_coverage": self.median("baseline"),
                "coverage": self.coverage("baseline"),
                "exception_types": self.type_counts("baseline"),
            },
            "u": u,
            "p": p,
            "significant": p < 0.05,
            "runs": [asdict(r) for r in self.runs],
        }


def _one(args) -> RunOutcome:
    cfg, grammar, seeds, target, k, ms_per_exec = args
    clock = VirtualClock(ms_per_exec) if ms_per_exec else None
    report = run_campaign(cfg, grammar, seeds, target, clock=clock)
    return RunOutcome(
        mode=cfg.mode,
        repeat=k,
        rng_seed=cfg.rng_seed,
        coverage_percent=report.coverage.percent if report.coverage else 0.0,
        exception_types=sorted(report.exception_types),
        first_seen=dict(report.first_seen),
        generations=report.generations,
        inputs_executed=report.inputs_executed,
    )


def run_bench(
    cfg: CampaignConfig,
    grammar: Grammar,
    seeds: Sequence[bytes],
    target: TargetSpec,
    repeats: int,
    jobs: int = 1,
    virtual_ms_per_exec: float = 0.0,
    progress=None,
) -> BenchSummary:
    """Run ``repeats`` campaigns per mode with distinct derived seeds.

    Only builtin targets are supported here since coverage is the metric, and
    with ``jobs > 1`` the target function must be picklable.
    """
    if repeats < 1:
        raise ValueError("repeats must be at least 1")
    if not target.has_coverage:
        raise ValueError("bench needs a builtin target that reports coverage")
    tasks = []
    for k in range(repeats):
        for mode in ("evolutionary", "baseline"):
            run_cfg = replace(cfg, mode=mode, rng_seed=run_seed(cfg.rng_seed, mode, k))
            tasks.append((run_cfg, grammar, list(seeds), target, k, virtual_ms_per_exec))
    summary = BenchSummary()
    if jobs > 1:
        with ProcessPoolExecutor(jobs) as pool:
            for outcome in pool.map(_one, tasks):
                summary.runs.append(outcome)
                if progress:
                    progress(outcome)
    else:
        for task in tasks:
            outcome = _one(task)
            summary.runs.append(outcome)
            if progress:
                progress(outcome)
    return summary
