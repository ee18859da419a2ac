"""Sentence-level intelligibility analysis.

Each sentence's word-repetition data is fitted with a two-parameter logistic
curve of correct-word probability versus the presentation level expressed
relative to the listener's block threshold (the adjusted level).  The fitted
parameters feed the selection of a maximally homogeneous sentence subset and
the per-sentence gains that align all 50% points.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy.special import expit

from .staircase import TrialRecord

B_CAP = 10.0            # per dB; fits pushed past this are flagged, not raised
MAX_ITER = 100
PARAM_TOL = 1e-8
GRAD_TOL = 1e-6


class AnalysisError(Exception):
    pass


@dataclass(frozen=True)
class TrialObservation:
    sentence_id: str
    atsl: float             # presentation level minus the block threshold, dB
    words_total: int
    words_correct: int

    def __post_init__(self):
        if not 0 <= self.words_correct <= self.words_total:
            raise AnalysisError("words_correct must be within 0..words_total")
        if not math.isfinite(self.atsl):
            raise AnalysisError("adjusted level must be finite")


def compute_atsl(trials: Sequence[TrialRecord], block_srt: float) -> list[TrialObservation]:
    """Reference each scored trial to its block threshold.

    Callers are expected to pass only scored (non-training) trials of blocks
    whose threshold estimate is usable.
    """
    if block_srt is None or not math.isfinite(block_srt):
        raise AnalysisError("block SRT is missing or non-finite")
    return [
        TrialObservation(t.sentence_id, t.level - block_srt, t.words_total, t.words_correct)
        for t in trials
    ]


@dataclass(frozen=True)
class PsychometricFit:
    sentence_id: str
    a: float                # intercept
    b: float                # slope, per dB
    s: float                # proportion per dB at the steepest point, b/4
    r: float                # adjusted level of the 50% point, -a/b
    r_squared: float
    n_trials: int
    converged: bool

    def predict(self, x) -> np.ndarray:
        return expit(self.a + self.b * np.asarray(x, dtype=float))


def _log_likelihood(a: float, b: float, x, n, k) -> float:
    eta = a + b * x
    # stable log sigmoid / log complement
    return float(np.sum(k * -np.logaddexp(0.0, -eta) + (n - k) * -np.logaddexp(0.0, eta)))


def _irls(x: np.ndarray, n: np.ndarray, k: np.ndarray):
    """Binomial maximum likelihood for the two-parameter logistic.

    Newton steps with step-halving, so the log-likelihood never decreases.
    Returns (a, b, converged, ll_trace).  Separated or otherwise degenerate
    data come back with ``converged=False`` and the slope held within
    ``B_CAP``; this never raises.
    """
    total = n.sum()
    mean = float(np.clip(k.sum() / total, 1e-6, 1 - 1e-6))
    a = math.log(mean / (1.0 - mean))
    b = 0.0

    if np.all(k == n) or np.all(k == 0) or np.unique(x).size < 2:
        return a, b, False, [_log_likelihood(a, b, x, n, k)]

    ll = _log_likelihood(a, b, x, n, k)
    trace = [ll]
    converged = False
    for _ in range(MAX_ITER):
        p = expit(a + b * x)
        w = n * p * (1.0 - p)
        g = np.array([np.sum(k - n * p), np.sum(x * (k - n * p))])
        h = np.array([[np.sum(w), np.sum(w * x)],
                      [np.sum(w * x), np.sum(w * x * x)]])
        try:
            step = np.linalg.solve(h, g)
        except np.linalg.LinAlgError:
            break
        scale = 1.0
        for _ in range(40):
            na, nb = a + scale * step[0], b + scale * step[1]
            new_ll = _log_likelihood(na, nb, x, n, k)
            if new_ll >= ll:
                break
            scale /= 2.0
        else:
            break
        delta = max(abs(na - a), abs(nb - b))
        a, b, ll = na, nb, new_ll
        trace.append(ll)
        if abs(b) > B_CAP:
            b = math.copysign(B_CAP, b)
            return a, b, False, trace
        if delta < PARAM_TOL:
            p = expit(a + b * x)
            g = np.array([np.sum(k - n * p), np.sum(x * (k - n * p))])
            converged = bool(np.linalg.norm(g) < GRAD_TOL)
            break
    return a, b, converged, trace


def fit_logistic(observations: Sequence[TrialObservation]) -> PsychometricFit:
    """Fit one sentence's psychometric curve by binomial maximum likelihood.

    The derived quantities are the steepest slope ``s = b/4``, the 50% point
    ``r`` (the level shift at which the fitted curve crosses one half), and a
    coefficient of determination over the per-observation proportions.
    """
    if not observations:
        raise AnalysisError("no observations to fit")
    ids = {o.sentence_id for o in observations}
    if len(ids) != 1:
        raise AnalysisError(f"observations mix sentences: {sorted(ids)}")
    sentence_id = observations[0].sentence_id

    x = np.array([o.atsl for o in observations], dtype=float)
    n = np.array([o.words_total for o in observations], dtype=float)
    k = np.array([o.words_correct for o in observations], dtype=float)
    a, b, converged, _ = _irls(x, n, k)

    r = -a / b if b != 0.0 else math.nan
    y = k / n
    p = expit(a + b * x)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    if ss_tot == 0.0:
        r_squared = math.nan
    else:
        # the ML fit is not a least-squares fit, so floor at zero
        r_squared = max(0.0, 1.0 - float(np.sum((y - p) ** 2)) / ss_tot)
    return PsychometricFit(sentence_id, a, b, b / 4.0, r, r_squared,
                           len(observations), converged)


@dataclass(frozen=True)
class SelectionResult:
    selected_ids: tuple[str, ...]
    r_lo: float
    r_hi: float
    s_lo: float
    s_hi: float
    median_r: float
    median_s: float
    sd_r: float
    sd_s: float
    threshold: float        # max-normalized distance of the last admitted sentence

    def z_distance(self, fit: PsychometricFit) -> float:
        zr = 0.0 if self.sd_r == 0.0 else abs(fit.r - self.median_r) / self.sd_r
        zs = 0.0 if self.sd_s == 0.0 else abs(fit.s - self.median_s) / self.sd_s
        return max(zr, zs)

    def contains(self, fit: PsychometricFit) -> bool:
        return self.z_distance(fit) <= self.threshold


def _z(values: np.ndarray, center: float, sd: float) -> np.ndarray:
    if sd == 0.0:
        return np.zeros_like(values)
    return np.abs(values - center) / sd


def select_sentences(fits: Sequence[PsychometricFit], n_select: int = 120,
                     r2_min: float = 0.5) -> SelectionResult:
    """Choose the sentences closest to the bulk of the fitted population.

    Fits that failed to converge or explain less than ``r2_min`` of the
    response variance are discarded.  The remaining sentences are ranked by
    the larger of their two standardized distances from the medians of the
    50% point and the slope, which makes the acceptance region an
    axis-aligned rectangle in the (50% point, slope) plane.  Ties are broken
    by ascending sentence id.
    """
    survivors = [
        f for f in fits
        if f.converged and math.isfinite(f.r_squared) and f.r_squared >= r2_min
    ]
    if len(survivors) < n_select:
        raise AnalysisError(
            f"only {len(survivors)} usable fits after gating; need {n_select}"
        )
    r = np.array([f.r for f in survivors])
    s = np.array([f.s for f in survivors])
    median_r, median_s = float(np.median(r)), float(np.median(s))
    sd_r = float(np.std(r, ddof=1)) if len(r) > 1 else 0.0
    sd_s = float(np.std(s, ddof=1)) if len(s) > 1 else 0.0
    distance = np.maximum(_z(r, median_r, sd_r), _z(s, median_s, sd_s))

    order = sorted(range(len(survivors)),
                   key=lambda i: (distance[i], survivors[i].sentence_id))
    chosen = order[:n_select]
    threshold = float(distance[chosen[-1]])
    return SelectionResult(
        selected_ids=tuple(survivors[i].sentence_id for i in chosen),
        r_lo=median_r - threshold * sd_r,
        r_hi=median_r + threshold * sd_r,
        s_lo=median_s - threshold * sd_s,
        s_hi=median_s + threshold * sd_s,
        median_r=median_r,
        median_s=median_s,
        sd_r=sd_r,
        sd_s=sd_s,
        threshold=threshold,
    )


def equalization_gains(selection: SelectionResult,
                       fits: Iterable[PsychometricFit]) -> dict[str, float]:
    """Per-sentence level corrections that align all 50% points at zero.

    Amplifying a sentence by its own 50% point shifts its curve so that it
    reaches half intelligibility at the common reference level.
    """
    by_id: Mapping[str, PsychometricFit] = {f.sentence_id: f for f in fits}
    gains: dict[str, float] = {}
    for sid in selection.selected_ids:
        if sid not in by_id:
            raise AnalysisError(f"no fit available for selected sentence {sid}")
        gains[sid] = by_id[sid].r
    return gains


def averaged_curve_slope(fits: Sequence[PsychometricFit], grid_step: float = 0.01) -> float:
    """Slope of the population-average curve at its own midpoint.

    The fitted curves are averaged pointwise on a dense level grid; the
    midpoint is halfway between the average curve's asymptotic extremes, and
    the returned slope is a central finite difference at the crossing.
    """
    if not fits:
        raise AnalysisError("need at least one fit")
    a = np.array([f.a for f in fits])
    b = np.array([f.b for f in fits])
    finite_r = [f.r for f in fits if math.isfinite(f.r)]
    if not finite_r:
        return 0.0
    nonzero_b = np.abs(b[b != 0.0])
    margin = max(20.0, 15.0 / float(nonzero_b.min()))
    lo, hi = min(finite_r) - margin, max(finite_r) + margin
    grid = np.arange(lo, hi + grid_step, grid_step)

    def mean_curve(x: np.ndarray) -> np.ndarray:
        return expit(a[:, None] + b[:, None] * x[None, :]).mean(axis=0)

    m = mean_curve(grid)
    mid = (m[0] + m[-1]) / 2.0
    d = m - mid
    crossings = np.nonzero(np.diff(np.signbit(d)))[0]
    if crossings.size == 0:
        return 0.0
    i = int(crossings[0])
    frac = d[i] / (d[i] - d[i + 1]) if d[i] != d[i + 1] else 0.0
    x_star = grid[i] + frac * grid_step
    h = grid_step
    left, right = mean_curve(np.array([x_star - h, x_star + h]))
    return float((right - left) / (2.0 * h))
