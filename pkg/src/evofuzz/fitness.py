"""Structure and feedback scores of individuals.

The structure score rewards inputs derived with many rule applications
relative to their size: ``expansions**2 / (lambda * length)``.  Any input
that makes the target raise (or time out) outranks every input that does
not; among those, structure decides.
"""

from __future__ import annotations

from dataclasses import dataclass

from .generator import Individual
from .harness import ExecutionResult

DEFAULT_LAMBDA = 2.0
JSON_LAMBDA = 1.5


@dataclass(frozen=True)
class FitnessConfig:
    lam: float = DEFAULT_LAMBDA

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError(f"lambda must be positive, got {self.lam}")


@dataclass(frozen=True, order=True)
class Fitness:
    # field order drives the ordering: exceptional first, then structure
    exceptional: bool
    structure: float

    def __post_init__(self):
        if not self.structure >= 0:
            raise ValueError(f"structure score must be non-negative, got {self.structure}")


def default_lambda(language: str = "") -> float:
    return JSON_LAMBDA if "json" in language.lower() else DEFAULT_LAMBDA


def ratio(ind: Individual, cfg: FitnessConfig) -> float:
    return ind.expansions / (cfg.lam * max(ind.length, 1))


def score_structure(ind: Individual, cfg: FitnessConfig) -> float:
    return ratio(ind, cfg) * ind.expansions


def score_feedback(result: ExecutionResult) -> bool:
    return result.outcome in ("exception", "timeout")


def fitness(ind: Individual, result: ExecutionResult, cfg: FitnessConfig) -> Fitness:
    return Fitness(score_feedback(result), score_structure(ind, cfg))
