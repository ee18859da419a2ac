"""Screening statistics for the analysis pipeline.

One-way ANOVA flags systematic effects (cohort, participant, sentence, word
count) on the adjusted levels; Tukey's HSD pinpoints which groups stand out.
The F statistic comes from the classic sum-of-squares decomposition, tail
probabilities from scipy's F and studentized-range distributions.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import stats as sps


class StatsError(Exception):
    pass


@dataclass(frozen=True)
class AnovaResult:
    f: float
    df_between: int
    df_within: int
    p_value: float
    degenerate: bool = False    # zero within-group variance with spread between groups


@dataclass(frozen=True)
class PairComparison:
    group_a: int
    group_b: int
    mean_difference: float      # mean(a) - mean(b)
    q: float
    p_adjusted: float
    significant: bool


@dataclass(frozen=True)
class TukeyResult:
    comparisons: tuple[PairComparison, ...]
    alpha: float

    def significant_pairs(self) -> list[tuple[int, int]]:
        return [(c.group_a, c.group_b) for c in self.comparisons if c.significant]


def _check_groups(groups: Sequence[Sequence[float]]) -> list[np.ndarray]:
    if len(groups) < 2:
        raise StatsError("need at least two groups")
    arrays = [np.asarray(g, dtype=float) for g in groups]
    for i, arr in enumerate(arrays):
        if arr.size == 0:
            raise StatsError(f"group {i} is empty")
    if sum(a.size for a in arrays) <= len(arrays):
        raise StatsError("need more observations than groups")
    return arrays


def _sums_of_squares(arrays: list[np.ndarray]):
    total_n = sum(a.size for a in arrays)
    grand = math.fsum(float(a.sum()) for a in arrays) / total_n
    ss_between = math.fsum(a.size * (float(a.mean()) - grand) ** 2 for a in arrays)
    ss_within = math.fsum(float(np.sum((a - a.mean()) ** 2)) for a in arrays)
    return total_n, ss_between, ss_within


def anova_oneway(groups: Sequence[Sequence[float]]) -> AnovaResult:
    """One-way fixed-effects analysis of variance."""
    arrays = _check_groups(groups)
    total_n, ss_between, ss_within = _sums_of_squares(arrays)
    df_between = len(arrays) - 1
    df_within = total_n - len(arrays)
    ms_between = ss_between / df_between
    ms_within = ss_within / df_within
    if ms_within == 0.0:
        if ms_between == 0.0:
            return AnovaResult(0.0, df_between, df_within, 1.0)
        return AnovaResult(math.inf, df_between, df_within, 0.0, degenerate=True)
    f = ms_between / ms_within
    p = float(sps.f.sf(f, df_between, df_within))
    return AnovaResult(f, df_between, df_within, p)


def tukey_hsd(groups: Sequence[Sequence[float]], alpha: float = 0.05) -> TukeyResult:
    """All pairwise comparisons with studentized-range adjusted p values.

    Uses the Tukey-Kramer statistic, so unbalanced group sizes are fine.
    Groups are identified by their position in the input.
    """
    arrays = _check_groups(groups)
    k = len(arrays)
    _, _, ss_within = _sums_of_squares(arrays)
    df_within = sum(a.size for a in arrays) - k
    ms_within = ss_within / df_within

    comparisons = []
    for i, j in itertools.combinations(range(k), 2):
        diff = float(arrays[i].mean() - arrays[j].mean())
        if ms_within == 0.0:
            q = 0.0 if diff == 0.0 else math.inf
            p = 1.0 if diff == 0.0 else 0.0
        else:
            se = math.sqrt(ms_within / 2.0 * (1.0 / arrays[i].size + 1.0 / arrays[j].size))
            q = abs(diff) / se
            p = float(sps.studentized_range.sf(q, k, df_within))
        comparisons.append(PairComparison(i, j, diff, q, p, p < alpha))
    return TukeyResult(tuple(comparisons), alpha)
