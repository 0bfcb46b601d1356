from __future__ import annotations

from dataclasses import dataclass
from typing import FrozenSet, Optional

OUTCOMES = ("ok", "exception", "timeout")
TIMEOUT_TYPE = "Timeout"


@dataclass(frozen=True)
class ExecutionResult:
    outcome: str
    exception_type: Optional[str] = None
    duration_ms: float = 0.0
    coverage: Optional[FrozenSet[str]] = None

    def __post_init__(self):
        if self.outcome not in OUTCOMES:
            raise ValueError(f"unknown outcome {self.outcome!r}")
        if self.outcome == "exception" and not self.exception_type:
            raise ValueError("an exception outcome needs a non-empty exception type")

    @classmethod
    def ok(cls, coverage=None, duration_ms: float = 0.0) -> "ExecutionResult":
        return cls("ok", None, duration_ms, coverage)

    @classmethod
    def exception(cls, type_: str, coverage=None, duration_ms: float = 0.0) -> "ExecutionResult":
        return cls("exception", type_, duration_ms, coverage)

    @classmethod
    def timeout(cls, duration_ms: float = 0.0) -> "ExecutionResult":
        return cls("timeout", TIMEOUT_TYPE, duration_ms)

    @property
    def failure_type(self) -> Optional[str]:
        """Exception identity used for archiving; None when the run was ok."""
        if self.outcome == "ok":
            return None
        return self.exception_type or TIMEOUT_TYPE


@dataclass(frozen=True)
class ExceptionRecord:
    type: str
    input: bytes
    generation: int
    elapsed_ms: float
    input_path: str = ""
