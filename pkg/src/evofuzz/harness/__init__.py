"""Running targets on inputs and summarizing the outcome."""

from .results import ExceptionRecord, ExecutionResult
from .execute import (
    AdapterError,
    Classifier,
    TargetSpec,
    execute,
    parse_target,
)
from .coverage import CoverageSummary, coverage_union
from .jsontarget import JSON_BRANCHES, builtin_json_target
from .stats import MannWhitneyResult, mann_whitney_u

__all__ = [
    "AdapterError",
    "Classifier",
    "CoverageSummary",
    "ExceptionRecord",
    "ExecutionResult",
    "JSON_BRANCHES",
    "MannWhitneyResult",
    "TargetSpec",
    "builtin_json_target",
    "coverage_union",
    "execute",
    "mann_whitney_u",
    "parse_target",
]
