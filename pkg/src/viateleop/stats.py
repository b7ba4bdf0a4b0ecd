"""Nonparametric analysis pipeline for the trial records.

Per-participant aggregation uses the median and a rank-interpolated
percentile whose rank rule r = p*n + 0.5 puts the 10th percentile of ten
values midway between the best and second-best trial.  Paired settings
are compared with Wilcoxon's signed-rank test (exact null distribution up
to 25 effective pairs, normal approximation with tie and continuity
corrections beyond) and a median-difference effect size with a seeded
percentile-bootstrap confidence interval.

Conventions: zero differences are excluded (classic Wilcoxon), tied
absolute differences receive average ranks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional, Sequence

import numpy as np

EXACT_LIMIT = 25


@dataclass(frozen=True)
class PairedSample:
    first: np.ndarray
    second: np.ndarray

    def __post_init__(self) -> None:
        a = np.asarray(self.first, dtype=float)
        b = np.asarray(self.second, dtype=float)
        if a.ndim != 1 or a.shape != b.shape or len(a) == 0:
            raise ValueError("need two equal-length non-empty 1-d samples")
        object.__setattr__(self, "first", a)
        object.__setattr__(self, "second", b)

    @property
    def differences(self) -> np.ndarray:
        return self.first - self.second

    def __len__(self) -> int:
        return len(self.first)


@dataclass(frozen=True)
class WilcoxonResult:
    w_statistic: float        # sum of ranks of positive differences
    p_value: float            # two-sided
    method: str               # "exact", "normal", or "degenerate"
    n_effective: int          # pairs left after excluding zero differences


@dataclass(frozen=True)
class EffectSize:
    median_difference: float
    ci_low: float
    ci_high: float
    level: float = 0.95
    method: str = "bootstrap-percentile"

    def __post_init__(self) -> None:
        if not self.ci_low <= self.median_difference <= self.ci_high:
            raise ValueError("effect size must lie inside its interval")


def percentile_midpoint(values: Sequence[float], p: float) -> float:
    """Percentile by the rank rule r = p*n + 0.5 with linear interpolation
    between order statistics, clamped to the observed range."""
    v = np.sort(np.asarray(values, dtype=float))
    n = len(v)
    if n == 0:
        raise ValueError("empty sample")
    if not 0.0 <= p <= 1.0:
        raise ValueError("p must be in [0, 1]")
    r = p * n + 0.5
    if r <= 1.0:
        return float(v[0])
    if r >= n:
        return float(v[-1])
    lo = int(math.floor(r))
    frac = r - lo
    return float(v[lo - 1] + frac * (v[lo] - v[lo - 1]))


def _signed_ranks(diffs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Average ranks of |d| (ties shared) and the sign of each d."""
    absd = np.abs(diffs)
    order = np.argsort(absd, kind="stable")
    ranks = np.empty(len(absd))
    sorted_abs = absd[order]
    i = 0
    while i < len(sorted_abs):
        j = i
        while j + 1 < len(sorted_abs) and sorted_abs[j + 1] == sorted_abs[i]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks, np.sign(diffs)


def _exact_two_sided_p(ranks: np.ndarray, w_plus: float) -> float:
    """Exact two-sided p over all 2^n sign assignments.

    Ranks are integers or half-integers (average ranks), so doubling
    makes the distribution of 2*W+ a lattice; a subset-sum convolution
    counts assignments exactly (integer arithmetic, no rounding).
    """
    scaled = [int(round(2.0 * r)) for r in ranks]
    total = sum(scaled)
    counts = np.zeros(total + 1, dtype=np.int64)
    counts[0] = 1
    for s in scaled:
        shifted = np.zeros_like(counts)
        shifted[s:] = counts[:total + 1 - s]
        counts = counts + shifted
    w2 = int(round(2.0 * w_plus))
    n_assign = 1 << len(scaled)
    p_le = Fraction(int(np.sum(counts[:w2 + 1])), n_assign)
    p_ge = Fraction(int(np.sum(counts[w2:])), n_assign)
    p = 2 * min(p_le, p_ge)
    return float(min(p, Fraction(1)))


def wilcoxon_signed_rank(sample: PairedSample) -> WilcoxonResult:
    """Two-sided Wilcoxon signed-rank test on paired values."""
    diffs = sample.differences
    diffs = diffs[diffs != 0.0]
    n = len(diffs)
    if n == 0:
        return WilcoxonResult(w_statistic=0.0, p_value=1.0,
                              method="degenerate", n_effective=0)
    ranks, signs = _signed_ranks(diffs)
    w_plus = float(np.sum(ranks[signs > 0]))
    if n <= EXACT_LIMIT:
        return WilcoxonResult(
            w_statistic=w_plus,
            p_value=_exact_two_sided_p(ranks, w_plus),
            method="exact", n_effective=n,
        )
    mean = n * (n + 1) / 4.0
    var = n * (n + 1) * (2 * n + 1) / 24.0
    # tie correction: subtract sum(t^3 - t)/48 over tie groups
    _, tie_counts = np.unique(np.abs(diffs), return_counts=True)
    var -= float(np.sum(tie_counts**3 - tie_counts)) / 48.0
    if var <= 0:
        return WilcoxonResult(w_statistic=w_plus, p_value=1.0,
                              method="degenerate", n_effective=n)
    delta = w_plus - mean
    # continuity correction towards the mean
    z = (delta - 0.5 * np.sign(delta)) / math.sqrt(var)
    p = math.erfc(abs(z) / math.sqrt(2.0))
    return WilcoxonResult(w_statistic=w_plus, p_value=min(p, 1.0),
                          method="normal", n_effective=n)


def median_difference_ci(
    sample: PairedSample,
    level: float = 0.95,
    n_boot: int = 10_000,
    seed: int = 0,
) -> EffectSize:
    """Median of paired differences with a percentile-bootstrap CI."""
    diffs = sample.differences
    n = len(diffs)
    if n < 6:
        raise ValueError("need at least 6 pairs for a bootstrap interval")
    if not 0.0 < level < 1.0:
        raise ValueError("level must be in (0, 1)")
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, n, size=(n_boot, n))
    boot = np.median(diffs[idx], axis=1)
    alpha = 1.0 - level
    lo, hi = np.quantile(boot, [alpha / 2.0, 1.0 - alpha / 2.0])
    point = float(np.median(diffs))
    return EffectSize(
        median_difference=point,
        ci_low=float(min(lo, point)),
        ci_high=float(max(hi, point)),
        level=level,
    )


def hodges_lehmann(sample: PairedSample) -> float:
    """Median of Walsh averages of the paired differences."""
    d = sample.differences
    i, j = np.triu_indices(len(d))
    return float(np.median((d[i] + d[j]) / 2.0))
