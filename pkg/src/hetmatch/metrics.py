"""Rank-correlation and top-k overlap metrics for similarity regression."""

from __future__ import annotations

import math

import numpy as np

from .errors import NumericError, UsageError


def _check_lengths(xs, ys):
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    if xs.ndim != 1 or ys.ndim != 1 or xs.shape != ys.shape:
        raise UsageError("inputs must be 1-D vectors of equal length")
    if xs.size < 2:
        raise UsageError("need at least 2 observations")
    return xs, ys


def average_ranks(xs) -> np.ndarray:
    """Ranks starting at 1; tied values share the mean of their ranks."""
    xs = np.asarray(xs, dtype=np.float64)
    order = np.argsort(xs, kind="stable")
    ranks = np.empty(xs.size, dtype=np.float64)
    i = 0
    while i < xs.size:
        j = i
        while j + 1 < xs.size and xs[order[j + 1]] == xs[order[i]]:
            j += 1
        ranks[order[i:j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def spearman(xs, ys) -> float:
    """Spearman's rho: Pearson correlation of average ranks.

    Average ranks are half-integers, so doubling them makes every sum exact
    in integer arithmetic; perfectly equal or reversed rankings come out as
    exactly +/-1.0.
    """
    xs, ys = _check_lengths(xs, ys)
    n = xs.size
    rx = [int(r) for r in average_ranks(xs) * 2]
    ry = [int(r) for r in average_ranks(ys) * 2]
    sum_x, sum_y = sum(rx), sum(ry)
    num = n * sum(a * b for a, b in zip(rx, ry)) - sum_x * sum_y
    den_x = n * sum(a * a for a in rx) - sum_x * sum_x
    den_y = n * sum(b * b for b in ry) - sum_y * sum_y
    if den_x == 0 or den_y == 0:
        raise NumericError("spearman undefined: a rank vector has zero variance")
    prod = den_x * den_y
    root = math.isqrt(prod)
    return num / (root if root * root == prod else math.sqrt(prod))


def kendall(xs, ys) -> float:
    """Kendall's tau-b over all index pairs, tie adjusted."""
    xs, ys = _check_lengths(xs, ys)
    dx = np.sign(xs[:, None] - xs[None, :])
    dy = np.sign(ys[:, None] - ys[None, :])
    upper = np.triu_indices(xs.size, k=1)
    prod = dx[upper] * dy[upper]
    concordant = int((prod > 0).sum())
    discordant = int((prod < 0).sum())
    n0 = xs.size * (xs.size - 1) // 2
    ties_x = int((dx[upper] == 0).sum())
    ties_y = int((dy[upper] == 0).sum())
    denom = ((n0 - ties_x) * (n0 - ties_y)) ** 0.5
    if denom == 0.0:
        raise NumericError("kendall undefined: all pairs tied")
    return (concordant - discordant) / denom


def precision_at_k(pred_scores, true_scores, k: int, ids=None) -> float:
    """Overlap between the predicted and the true top-k candidate sets.

    Candidates with equal scores are ordered by ascending id (indices when
    `ids` is omitted), so the result is deterministic under ties.
    """
    pred = list(pred_scores)
    true = list(true_scores)
    if len(pred) != len(true):
        raise UsageError("prediction and truth must have equal length")
    if not 1 <= k <= len(pred):
        raise UsageError(f"k must be in 1..{len(pred)}, got {k}")
    if ids is None:
        ids = list(range(len(pred)))
    ids = list(ids)

    def top(scores):
        order = sorted(range(len(scores)), key=lambda i: (-scores[i], ids[i]))
        return {ids[i] for i in order[:k]}

    return len(top(pred) & top(true)) / k
