"""Metrics and comparison statistics for model benchmarking.

Macro metrics average per-class losses over the classes present in the
ground truth.  The Wilcoxon signed-rank test drops zero differences,
averages tied ranks, and uses the exact enumerated null for up to 25
effective pairs (a subset-sum dynamic program over doubled ranks) with
a continuity-corrected normal approximation beyond that.  Critical
differences follow the Nemenyi construction with the published q table.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.stats import norm, rankdata

__all__ = [
    "ScoreTable",
    "WilcoxonResult",
    "CdResult",
    "macro_zero_one",
    "macro_mae",
    "wilcoxon_signed_rank",
    "average_ranks",
    "critical_difference",
    "cd_groups",
]

EXACT_WILCOXON_MAX_N = 25

# Two-tailed Nemenyi q values (studentized range / sqrt(2)), m = 2..10,
# at the three supported significance levels.
NEMENYI_Q = {
    0.01: (2.576, 2.913, 3.113, 3.255, 3.364, 3.452, 3.526, 3.590, 3.646),
    0.05: (1.960, 2.343, 2.569, 2.728, 2.850, 2.949, 3.031, 3.102, 3.164),
    0.10: (1.645, 2.052, 2.291, 2.460, 2.589, 2.693, 2.780, 2.855, 2.920),
}


@dataclass
class ScoreTable:
    """Lower-is-better scores, one row per dataset and column per model."""

    models: list
    datasets: list
    scores: np.ndarray
    metric: str = ""

    def __post_init__(self):
        self.scores = np.asarray(self.scores, dtype=np.float64)
        if self.scores.shape != (len(self.datasets), len(self.models)):
            raise ValueError(
                f"scores must be ({len(self.datasets)}, {len(self.models)}), "
                f"got {self.scores.shape}"
            )
        if not np.isfinite(self.scores).all():
            raise ValueError("scores must be finite")


@dataclass(frozen=True)
class WilcoxonResult:
    statistic: float
    p_value: float
    significant: bool
    n_effective: int
    degenerate: bool = False


@dataclass
class CdResult:
    average_ranks: np.ndarray
    critical_difference: float
    alpha: float
    groups: list = field(default_factory=list)


def _macro(y_true, y_pred, k, loss):
    y_true = np.asarray(y_true, dtype=np.int64)
    y_pred = np.asarray(y_pred, dtype=np.int64)
    if y_true.shape != y_pred.shape or y_true.ndim != 1:
        raise ValueError("y_true and y_pred must be equal-length vectors")
    if y_true.size == 0:
        raise ValueError("empty input")
    for name, arr in (("y_true", y_true), ("y_pred", y_pred)):
        if arr.min() < 1 or arr.max() > k:
            raise ValueError(f"{name} labels outside 1..{k}")
    per_class = []
    for label in np.unique(y_true):
        sel = y_true == label
        per_class.append(loss(y_true[sel], y_pred[sel]).mean())
    return float(np.mean(per_class))


def macro_zero_one(y_true, y_pred, k: int) -> float:
    """Per-class mean 0/1 loss, averaged over classes present in y_true."""
    return _macro(y_true, y_pred, k, lambda t, p: (t != p).astype(float))


def macro_mae(y_true, y_pred, k: int) -> float:
    """Per-class mean absolute error, averaged over classes present."""
    return _macro(y_true, y_pred, k, lambda t, p: np.abs(t - p).astype(float))


def _exact_signed_rank_p(doubled_ranks, doubled_stat: int) -> float:
    """P-value from the enumerated null of the signed-rank sum.

    Works on ranks doubled to integers so tied (x.5) ranks stay exact.
    Counts subsets by dynamic programming; float64 holds them exactly
    (2^25 < 2^53).
    """
    total = int(doubled_ranks.sum())
    counts = np.zeros(total + 1)
    counts[0] = 1.0
    for r in doubled_ranks:
        shifted = np.zeros_like(counts)
        shifted[r:] = counts[: total + 1 - r]
        counts += shifted
    tail = counts[: doubled_stat + 1].sum() / 2.0 ** len(doubled_ranks)
    return min(1.0, 2.0 * tail)


def wilcoxon_signed_rank(a, b, alpha: float = 0.01) -> WilcoxonResult:
    """Two-sided paired signed-rank test of a vs b.

    Zero differences are dropped; the statistic is min(W+, W-).  All
    differences zero yields the degenerate result (p = 1).
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError("paired score vectors must have equal length")
    if a.size < 5:
        raise ValueError("need at least 5 pairs")
    diff = a - b
    diff = diff[diff != 0]
    n = diff.size
    if n == 0:
        return WilcoxonResult(0.0, 1.0, False, 0, degenerate=True)
    ranks = rankdata(np.abs(diff))
    w_plus = float(ranks[diff > 0].sum())
    w_minus = float(ranks[diff < 0].sum())
    statistic = min(w_plus, w_minus)
    if n <= EXACT_WILCOXON_MAX_N:
        doubled = np.rint(2 * ranks).astype(np.int64)
        p = _exact_signed_rank_p(doubled, int(round(2 * statistic + 1e-9)))
    else:
        mu = n * (n + 1) / 4.0
        _, tie_counts = np.unique(ranks, return_counts=True)
        sigma_sq = n * (n + 1) * (2 * n + 1) / 24.0 - (
            (tie_counts.astype(float) ** 3 - tie_counts).sum() / 48.0
        )
        z = (statistic - mu + 0.5) / np.sqrt(sigma_sq)
        p = min(1.0, 2.0 * float(norm.cdf(z)))
    return WilcoxonResult(statistic, p, bool(p < alpha), n)


def average_ranks(table: ScoreTable) -> np.ndarray:
    """Mean of per-dataset ranks (1 = lowest score, ties averaged)."""
    ranks = np.vstack([rankdata(row) for row in table.scores])
    return ranks.mean(axis=0)


def critical_difference(n_models: int, n_datasets: int, alpha: float = 0.01) -> float:
    """Minimum average-rank gap that is significant at the given level."""
    if n_models < 2:
        raise ValueError("need at least two models")
    if n_models > 11:
        raise ValueError("q table covers up to 10 models")
    if n_datasets < 1:
        raise ValueError("need at least one dataset")
    if alpha not in NEMENYI_Q:
        raise ValueError(f"alpha must be one of {sorted(NEMENYI_Q)}")
    q = NEMENYI_Q[alpha][n_models - 2]
    return q * np.sqrt(n_models * (n_models + 1) / (6.0 * n_datasets))


def cd_groups(ranks, cd: float, alpha: float = 0.01) -> CdResult:
    """Maximal contiguous groups of models whose rank spread is below cd."""
    ranks = np.asarray(ranks, dtype=np.float64)
    order = np.argsort(ranks, kind="stable")
    sorted_ranks = ranks[order]
    m = ranks.size
    groups = []
    prev_end = -1
    for start in range(m):
        end = start
        while end + 1 < m and sorted_ranks[end + 1] - sorted_ranks[start] < cd:
            end += 1
        if end > prev_end:
            groups.append(tuple(sorted(int(i) for i in order[start : end + 1])))
            prev_end = end
    return CdResult(
        average_ranks=ranks,
        critical_difference=float(cd),
        alpha=alpha,
        groups=groups,
    )
