"""Shared statistical test machinery: integer-binned chi-square tests.

Counts land in one bin per integer on [lo, hi] plus two overflow bins; bins
with too-small expected counts are merged into their neighbors so the
chi-square approximation stays valid.
"""

from __future__ import annotations

import numpy as np
from scipy import stats


def integer_bin_counts(samples: np.ndarray, lo: int, hi: int) -> np.ndarray:
    """Counts for bins [< lo], lo, lo+1, ..., hi, [> hi]."""
    samples = np.asarray(samples)
    under = int(np.sum(samples < lo))
    over = int(np.sum(samples > hi))
    inner_vals = samples[(samples >= lo) & (samples <= hi)].astype(np.int64) - lo
    inner = np.bincount(inner_vals, minlength=hi - lo + 1)
    return np.concatenate([[under], inner, [over]]).astype(np.int64)


def merge_small_bins(rows: list[np.ndarray], criterion: np.ndarray, threshold: float):
    """Merge the bin with the smallest criterion into a neighbor until all
    criteria reach ``threshold`` (or only two bins remain)."""
    rows = [list(map(float, r)) for r in rows]
    crit = list(map(float, criterion))
    while len(crit) > 2:
        i = int(np.argmin(crit))
        if crit[i] >= threshold:
            break
        if i == 0:
            j = 1
        elif i == len(crit) - 1:
            j = i - 1
        else:
            j = i - 1 if crit[i - 1] < crit[i + 1] else i + 1
        for r in rows:
            r[j] += r[i]
            del r[i]
        crit[j] += crit[i]
        del crit[i]
    return [np.array(r) for r in rows]


def chisq_gof_pvalue(
    samples: np.ndarray, bin_probs: np.ndarray, lo: int, hi: int, min_expected: float = 5.0
) -> float:
    """One-sample chi-square p-value against analytic bin probabilities.

    ``bin_probs`` must cover [< lo], lo..hi, [> hi] and sum to ~1.
    """
    obs = integer_bin_counts(samples, lo, hi).astype(float)
    n = obs.sum()
    exp = np.asarray(bin_probs, dtype=float) * n
    obs2, exp2 = merge_small_bins([obs, exp], exp, min_expected)
    exp2 = exp2 * (obs2.sum() / exp2.sum())
    return float(stats.chisquare(obs2, f_exp=exp2).pvalue)


def chisq_two_sample_pvalue(
    x: np.ndarray, y: np.ndarray, lo: int = -12, hi: int = 12, min_pooled: float = 20.0
) -> float:
    """Two-sample chi-square p-value on integer-binned counts."""
    cx = integer_bin_counts(x, lo, hi).astype(float)
    cy = integer_bin_counts(y, lo, hi).astype(float)
    cx2, cy2 = merge_small_bins([cx, cy], cx + cy, min_pooled)
    table = np.vstack([cx2, cy2])
    keep = table.sum(axis=0) > 0
    table = table[:, keep]
    return float(stats.chi2_contingency(table).pvalue)


def symmetric_tail_probs(inner_probs: np.ndarray) -> np.ndarray:
    """Attach equal under/over tail bins to inner probabilities of a
    symmetric distribution."""
    leftover = max(0.0, 1.0 - float(inner_probs.sum()))
    half = leftover / 2.0
    return np.concatenate([[half], inner_probs, [half]])


def upper_tail_probs(inner_probs: np.ndarray) -> np.ndarray:
    """Attach an empty under bin and a remainder over bin (one-sided laws)."""
    leftover = max(0.0, 1.0 - float(inner_probs.sum()))
    return np.concatenate([[0.0], inner_probs, [leftover]])
