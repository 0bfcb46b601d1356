"""Two-sided Mann-Whitney U test.

Small tie-free samples (``len(a) + len(b) <= EXACT_LIMIT``) get the exact
null distribution of U; everything else uses the normal approximation with
tie and continuity corrections.
"""

from __future__ import annotations

import math
from functools import lru_cache
from typing import List, NamedTuple, Sequence, Tuple

EXACT_LIMIT = 16


class MannWhitneyResult(NamedTuple):
    u: float
    p: float


def rankdata(values: Sequence[float]) -> List[float]:
    """1-based ranks, ties get the mean of the ranks they span."""
    order = sorted(range(len(values)), key=values.__getitem__)
    ranks = [0.0] * len(values)
    i = 0
    while i < len(order):
        j = i
        while j + 1 < len(order) and values[order[j + 1]] == values[order[i]]:
            j += 1
        mid = (i + j) / 2.0 + 1.0
        for k in range(i, j + 1):
            ranks[order[k]] = mid
        i = j + 1
    return ranks


@lru_cache(maxsize=None)
def u_distribution(n1: int, n2: int) -> Tuple[int, ...]:
    """Number of rank assignments yielding each U = 0 .. n1*n2 (no ties)."""
    if n1 == 0 or n2 == 0:
        return (1,)
    # f(m, n, u) = f(m - 1, n, u - n) + f(m, n - 1, u)
    prev = [[1] for _ in range(n1 + 1)]  # n = 0: only U = 0
    for n in range(1, n2 + 1):
        cur = [[1]]  # m = 0
        for m in range(1, n1 + 1):
            size = m * n + 1
            row = [0] * size
            a = cur[m - 1]
            for u, c in enumerate(a):
                row[u + n] += c
            b = prev[m]
            for u, c in enumerate(b):
                row[u] += c
            cur.append(row)
        prev = cur
    return tuple(prev[n1])


def _exact_p(u: float, n1: int, n2: int) -> float:
    dist = u_distribution(n1, n2)
    total = math.comb(n1 + n2, n1)
    k = int(round(u))
    lower = sum(dist[: k + 1])
    upper = sum(dist[k:])
    return min(1.0, 2.0 * min(lower, upper) / total)


def _normal_p(u: float, n1: int, n2: int, ranks: Sequence[float]) -> float:
    n = n1 + n2
    ties = {}
    for r in ranks:
        ties[r] = ties.get(r, 0) + 1
    tie_term = sum(t**3 - t for t in ties.values()) / (n * (n - 1)) if n > 1 else 0.0
    var = n1 * n2 / 12.0 * ((n + 1) - tie_term)
    if var <= 0:
        return 1.0
    z = max(abs(u - n1 * n2 / 2.0) - 0.5, 0.0) / math.sqrt(var)
    return min(1.0, math.erfc(z / math.sqrt(2.0)))


def mann_whitney_u(a: Sequence[float], b: Sequence[float], method: str = "auto") -> MannWhitneyResult:
    """U statistic of ``a`` (pairs with a > b, ties counting 1/2) and two-sided p.

    ``method`` is ``"auto"``, ``"exact"`` (tie-free samples only) or ``"normal"``.
    """
    if method not in ("auto", "exact", "normal"):
        raise ValueError(f"unknown method {method!r}")
    n1, n2 = len(a), len(b)
    if n1 == 0 or n2 == 0:
        raise ValueError("both samples must be non-empty")
    pooled = list(a) + list(b)
    ranks = rankdata(pooled)
    u = sum(ranks[:n1]) - n1 * (n1 + 1) / 2.0
    if len(set(pooled)) == 1:
        return MannWhitneyResult(u, 1.0)
    tie_free = len(set(pooled)) == len(pooled)
    if method == "exact" and not tie_free:
        raise ValueError("the exact distribution needs tie-free samples")
    if method == "exact" or (method == "auto" and tie_free and n1 + n2 <= EXACT_LIMIT):
        return MannWhitneyResult(u, _exact_p(u, n1, n2))
    return MannWhitneyResult(u, _normal_p(u, n1, n2, ranks))
