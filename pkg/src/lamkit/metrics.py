"""Classification and calibration metrics.

AUC is computed as the rank-sum (Mann-Whitney) statistic, i.e. the
probability that a random positive outranks a random negative with ties
counted half. Calibration uses equal-width probability bins, half-open with
the top bin closed, summarised as the mass-weighted mean gap (expected
calibration error) and the worst gap (maximum calibration error).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataValidationError


def _midranks(x: np.ndarray) -> np.ndarray:
    """1-based ranks with ties assigned the mean of their positions."""
    x = np.asarray(x)
    order = np.argsort(x, kind="mergesort")
    ranks = np.empty(x.size, dtype=np.float64)
    sx = x[order]
    # block boundaries of equal values
    boundaries = np.flatnonzero(np.diff(sx) != 0) + 1
    starts = np.concatenate([[0], boundaries])
    stops = np.concatenate([boundaries, [x.size]])
    for a, b in zip(starts, stops):
        ranks[order[a:b]] = 0.5 * (a + b + 1)
    return ranks


def auc(scores: np.ndarray, labels: np.ndarray) -> float:
    """Area under the ROC curve via the rank statistic, O(M log M)."""
    s = np.asarray(scores, dtype=np.float64).reshape(-1)
    y = np.asarray(labels).reshape(-1)
    if s.size != y.size or s.size == 0:
        raise DataValidationError("scores and labels must be matching non-empty vectors")
    n_pos = int(np.sum(y == 1))
    n_neg = int(np.sum(y == 0))
    if n_pos == 0 or n_neg == 0:
        raise DataValidationError("AUC requires both classes to be present")
    ranks = _midranks(s)
    pos_rank_sum = float(np.sum(ranks[y == 1]))
    return (pos_rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


@dataclass(frozen=True)
class CalibrationTable:
    """Per-bin reliability summary over equal-width probability bins."""

    k: int
    counts: np.ndarray    # rows per bin
    observed: np.ndarray  # empirical positive fraction (NaN for empty bins)
    expected: np.ndarray  # mean predicted probability (NaN for empty bins)
    mass: np.ndarray      # fraction of all rows per bin

    def __post_init__(self) -> None:
        for name in ("counts", "observed", "expected", "mass"):
            arr = np.asarray(getattr(self, name), dtype=np.float64)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    def rows(self) -> list[dict]:
        out = []
        for i in range(self.k):
            out.append(
                {
                    "bin": i + 1,
                    "lower": i / self.k,
                    "upper": (i + 1) / self.k,
                    "count": int(self.counts[i]),
                    "observed": None if self.counts[i] == 0 else float(self.observed[i]),
                    "expected": None if self.counts[i] == 0 else float(self.expected[i]),
                    "mass": float(self.mass[i]),
                }
            )
        return out


def calibration_table(scores: np.ndarray, labels: np.ndarray, k: int = 15) -> CalibrationTable:
    """Bin predictions into ``k`` equal-width bins over [0, 1].

    Bin ``i`` covers ``[(i-1)/k, i/k)``; the last bin is closed at 1 so every
    score lands somewhere and the counts sum to M.
    """
    if k < 1:
        raise DataValidationError(f"bin count must be >= 1, got {k}")
    s = np.asarray(scores, dtype=np.float64).reshape(-1)
    y = np.asarray(labels, dtype=np.float64).reshape(-1)
    if s.size != y.size:
        raise DataValidationError("scores and labels must have equal length")
    idx = np.minimum((s * k).astype(np.int64), k - 1)
    counts = np.bincount(idx, minlength=k).astype(np.float64)
    pos = np.bincount(idx, weights=y, minlength=k)
    pred = np.bincount(idx, weights=s, minlength=k)
    with np.errstate(invalid="ignore", divide="ignore"):
        observed = np.where(counts > 0, pos / counts, np.nan)
        expected = np.where(counts > 0, pred / counts, np.nan)
    mass = counts / s.size if s.size else counts
    return CalibrationTable(k=k, counts=counts, observed=observed, expected=expected, mass=mass)


def ece(table: CalibrationTable) -> float:
    """Expected calibration error: mass-weighted mean |observed - expected|."""
    gaps = np.where(table.counts > 0, np.abs(table.observed - table.expected), 0.0)
    return float(np.sum(table.mass * gaps))


def mce(table: CalibrationTable) -> float:
    """Maximum calibration error over non-empty bins."""
    filled = table.counts > 0
    if not np.any(filled):
        raise DataValidationError("MCE undefined: all calibration bins are empty")
    return float(np.max(np.abs(table.observed[filled] - table.expected[filled])))


def certainty_fraction(scores: np.ndarray) -> float:
    """Fraction of predictions that are exactly 0 or exactly 1."""
    s = np.asarray(scores, dtype=np.float64).reshape(-1)
    if s.size == 0:
        return 0.0
    return float(np.mean((s == 0.0) | (s == 1.0)))
