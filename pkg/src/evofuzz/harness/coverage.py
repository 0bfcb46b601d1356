from __future__ import annotations

from dataclasses import dataclass
from typing import FrozenSet, Iterable

from .results import ExecutionResult


@dataclass(frozen=True)
class CoverageSummary:
    covered: FrozenSet[str]
    total: int

    @property
    def percent(self) -> float:
        return 100.0 * len(self.covered) / self.total if self.total else 0.0


def coverage_union(results: Iterable[ExecutionResult], total: int) -> CoverageSummary:
    covered = set()
    for r in results:
        if r.coverage:
            covered |= r.coverage
    return CoverageSummary(frozenset(covered), total)
