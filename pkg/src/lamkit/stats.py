"""Nonparametric multiple-comparison machinery for benchmark score matrices.

Pipeline: per-dataset ranks -> Friedman statistic with the Iman-Davenport
F correction as the omnibus test -> exact paired Wilcoxon signed-rank tests
for every classifier pair, step-down Holm control of the family-wise error
rate, Hodges-Lehmann pseudomedians as effect sizes, and finally the
"cannot distinguish" graph whose connected components group equivalent
classifiers.

The Wilcoxon p-values are exact (dynamic programming over the realised
rank multiset under random signs), never the normal approximation: the
benchmark sizes here sit squarely in the exact regime.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DataValidationError, NumericalError
from .metrics import _midranks

_MAX_EXACT_N = 30


@dataclass(frozen=True)
class ScoreMatrix:
    """k classifiers by N datasets of mean CV scores."""

    values: np.ndarray
    classifiers: tuple[str, ...]
    datasets: tuple[str, ...]
    higher_is_better: bool = True

    def __post_init__(self) -> None:
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2:
            raise DataValidationError("score matrix must be 2-D")
        if v.shape != (len(self.classifiers), len(self.datasets)):
            raise DataValidationError("score matrix shape must match the name lists")
        if np.isnan(v).any():
            raise DataValidationError("score matrix contains missing cells")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "classifiers", tuple(self.classifiers))
        object.__setattr__(self, "datasets", tuple(self.datasets))

    @classmethod
    def from_csv(cls, path: str, higher_is_better: bool = True) -> "ScoreMatrix":
        """Rows are classifiers, columns datasets; top-left header cell is free text."""
        with open(path, "r", encoding="utf-8", newline="") as fh:
            rows = list(csv.reader(fh))
        if len(rows) < 2 or len(rows[0]) < 2:
            raise DataValidationError(f"{path}: need at least one classifier and one dataset")
        datasets = tuple(rows[0][1:])
        classifiers = tuple(r[0] for r in rows[1:])
        try:
            values = np.asarray([[float(c) for c in r[1:]] for r in rows[1:]])
        except ValueError as exc:
            raise DataValidationError(f"{path}: non-numeric score cell ({exc})") from None
        return cls(values, classifiers, datasets, higher_is_better)

    def to_csv(self, path: str) -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["classifier", *self.datasets])
            for name, row in zip(self.classifiers, self.values):
                writer.writerow([name, *[repr(float(v)) for v in row]])


def rank_matrix(sm: ScoreMatrix) -> np.ndarray:
    """Per-dataset ranks, best = 1, ties mid-ranked; shape (k, N)."""
    v = sm.values if not sm.higher_is_better else -sm.values
    return np.column_stack([_midranks(v[:, j]) for j in range(v.shape[1])])


def friedman(ranks: np.ndarray) -> float:
    """Omnibus chi-squared statistic from the (k, N) rank matrix."""
    ranks = np.asarray(ranks, dtype=np.float64)
    if ranks.ndim != 2 or ranks.shape[0] < 2 or ranks.shape[1] < 2:
        raise DataValidationError("need at least 2 classifiers and 2 datasets")
    k, n = ranks.shape
    mean_ranks = ranks.mean(axis=1)
    return float(
        12.0 * n / (k * (k + 1)) * (np.sum(mean_ranks**2) - k * (k + 1) ** 2 / 4.0)
    )


def _betacf(a: float, b: float, x: float) -> float:
    """Continued fraction for the regularised incomplete beta (modified Lentz)."""
    tiny = 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < tiny:
        d = tiny
    d = 1.0 / d
    h = d
    for m in range(1, 400):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < 1e-14:
            return h
    raise NumericalError("incomplete beta continued fraction did not converge")


def regularized_incomplete_beta(a: float, b: float, x: float) -> float:
    """I_x(a, b) accurate to ~1e-12 via the continued-fraction expansion."""
    if a <= 0 or b <= 0:
        raise DataValidationError("beta parameters must be positive")
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    ln_front = (
        math.lgamma(a + b)
        - math.lgamma(a)
        - math.lgamma(b)
        + a * math.log(x)
        + b * math.log1p(-x)
    )
    front = math.exp(ln_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def f_distribution_sf(f_value: float, d1: float, d2: float) -> float:
    """Upper tail of the F distribution, P(F >= f_value)."""
    if f_value <= 0:
        return 1.0
    x = d2 / (d2 + d1 * f_value)
    return regularized_incomplete_beta(d2 / 2.0, d1 / 2.0, x)


def iman_davenport(chi2: float, n: int, k: int) -> tuple[float, float]:
    """F-corrected omnibus statistic and its p-value.

    Returns ``(F, p)`` where the statistic follows an F distribution with
    ``(k-1, (k-1)(n-1))`` degrees of freedom under the null of equal ranks.
    """
    if chi2 < 0:
        raise DataValidationError("chi-squared statistic cannot be negative")
    if chi2 == 0.0:
        return 0.0, 1.0
    denom = n * (k - 1) - chi2
    if denom <= 0:
        raise NumericalError(
            f"Iman-Davenport denominator N(k-1) - chi2 = {denom:g} is not positive"
        )
    f_value = (n - 1) * chi2 / denom
    return float(f_value), float(f_distribution_sf(f_value, k - 1, (k - 1) * (n - 1)))


@dataclass(frozen=True)
class WilcoxonResult:
    r_plus: float
    r_minus: float
    t_statistic: float
    p_value: float
    n_used: int
    dropped_zero: bool


def _signed_rank_tail_counts(
    quarter_ranks: np.ndarray, signs: np.ndarray, t_quarter: int
) -> tuple[int, int, int]:
    """Exact tail counts of the rank sum under random signs.

    ``quarter_ranks`` are the mid-ranks scaled by 4 (integers); zero rows
    contribute half their rank to both sums, i.e. a fixed offset. Returns
    (count at or below, count at or above, total) over sign assignments of
    the nonzero rows.
    """
    offset = int(sum(int(q) // 2 for q, s in zip(quarter_ranks, signs) if s == 0))
    nonzero = [int(q) for q, s in zip(quarter_ranks, signs) if s != 0]
    top = offset + sum(nonzero)
    counts = [0] * (top + 1)
    counts[offset] = 1
    for q in nonzero:
        for w in range(top, offset + q - 1, -1):
            if counts[w - q]:
                counts[w] += counts[w - q]
    below = sum(c for w, c in enumerate(counts) if w <= t_quarter)
    above = sum(c for w, c in enumerate(counts) if w >= t_quarter)
    return below, above, 2 ** len(nonzero)


def wilcoxon_exact(d: np.ndarray) -> WilcoxonResult:
    """Exact two-sided paired signed-rank test on a difference vector.

    Zero differences have their ranks split evenly between the positive and
    negative sums; with an odd number of zeros the last zero (in input
    order) is dropped first. The two-sided p-value is
    ``min(1, 2 * min(P(W <= T), P(W >= T)))`` under the exact null
    distribution of the positive rank sum W given the realised ties.
    """
    d = np.asarray(d, dtype=np.float64).reshape(-1)
    n = d.size
    if not 1 <= n <= _MAX_EXACT_N:
        raise DataValidationError(
            f"exact test supports 1 <= N <= {_MAX_EXACT_N} differences, got {n}"
        )
    if np.all(d == 0):
        raise DataValidationError("all differences are zero; test undefined")
    dropped = False
    zero_idx = np.flatnonzero(d == 0)
    if len(zero_idx) % 2 == 1:
        d = np.delete(d, zero_idx[-1])
        dropped = True
    ranks = _midranks(np.abs(d))
    r_plus = float(np.sum(ranks[d > 0]) + 0.5 * np.sum(ranks[d == 0]))
    r_minus = float(np.sum(ranks[d < 0]) + 0.5 * np.sum(ranks[d == 0]))
    t = min(r_plus, r_minus)
    quarter = np.rint(4.0 * ranks).astype(np.int64)
    below, above, total = _signed_rank_tail_counts(
        quarter, np.sign(d), int(round(4.0 * t))
    )
    p = min(1.0, 2.0 * min(below, above) / total)
    return WilcoxonResult(
        r_plus=r_plus,
        r_minus=r_minus,
        t_statistic=float(t),
        p_value=float(p),
        n_used=int(d.size),
        dropped_zero=dropped,
    )


def wilcoxon_critical_value(n: int, alpha: float = 0.05) -> int:
    """Largest T with exact two-sided p <= alpha for an untied sample of size n.

    The null is rejected whenever ``min(R+, R-) <= critical value``.
    """
    if not 1 <= n <= _MAX_EXACT_N:
        raise DataValidationError(f"exact regime covers 1 <= n <= {_MAX_EXACT_N}")
    maxw = n * (n + 1) // 2
    counts = [0] * (maxw + 1)
    counts[0] = 1
    for r in range(1, n + 1):
        for w in range(maxw, r - 1, -1):
            if counts[w - r]:
                counts[w] += counts[w - r]
    total = 2**n
    cumulative = 0
    critical = -1
    for t in range(maxw + 1):
        cumulative += counts[t]
        if 2.0 * cumulative / total <= alpha:
            critical = t
        else:
            break
    return critical


def holm(pvalues, alpha: float = 0.05) -> np.ndarray:
    """Step-down Holm decisions; True means the null is rejected.

    p-values are compared, smallest first, with ``alpha / (m - i + 1)``; the
    first retention retains everything after it.
    """
    p = np.asarray(pvalues, dtype=np.float64).reshape(-1)
    if p.size == 0:
        raise DataValidationError("need at least one hypothesis")
    if np.any((p < 0) | (p > 1)):
        raise DataValidationError("p-values must lie in [0, 1]")
    m = p.size
    order = np.argsort(p, kind="mergesort")
    rejected = np.zeros(m, dtype=bool)
    for i, idx in enumerate(order):
        if p[idx] <= alpha / (m - i):
            rejected[idx] = True
        else:
            break
    return rejected


def hodges_lehmann(d) -> float:
    """Pseudomedian: median of the pairwise Walsh averages (d_i + d_j) / 2, i <= j."""
    d = np.asarray(d, dtype=np.float64).reshape(-1)
    if d.size == 0:
        raise DataValidationError("need at least one difference")
    i, j = np.triu_indices(d.size)
    return float(np.median((d[i] + d[j]) / 2.0))


@dataclass(frozen=True)
class PairwiseComparison:
    first: str
    second: str
    r_plus: float
    r_minus: float
    t_statistic: float
    p_value: float
    pseudomedian: float
    identical: bool = False
    rejected: bool | None = None
    dropped_zero: bool = False

    def to_dict(self) -> dict:
        return {
            "first": self.first,
            "second": self.second,
            "r_plus": self.r_plus,
            "r_minus": self.r_minus,
            "t": self.t_statistic,
            "p_value": self.p_value,
            "pseudomedian": self.pseudomedian,
            "identical": self.identical,
            "rejected": self.rejected,
            "dropped_zero": self.dropped_zero,
        }


@dataclass(frozen=True)
class ComparisonResult:
    """Full omnibus + pairwise comparison over a score matrix."""

    classifiers: tuple[str, ...]
    mean_ranks: dict[str, float]
    chi2: float
    f_statistic: float
    omnibus_p: float
    pairwise: tuple[PairwiseComparison, ...]
    alpha: float
    edges: tuple[tuple[str, str], ...] = field(default=())

    def to_dict(self) -> dict:
        return {
            "classifiers": list(self.classifiers),
            "mean_ranks": self.mean_ranks,
            "chi2": self.chi2,
            "f_statistic": self.f_statistic,
            "omnibus_p": self.omnibus_p,
            "alpha": self.alpha,
            "pairwise": [p.to_dict() for p in self.pairwise],
            "indistinguishable_pairs": [list(e) for e in self.edges],
        }


def cd_graph(
    mean_ranks: dict[str, float], rejections: dict[tuple[str, str], bool]
) -> tuple[tuple[tuple[str, float], ...], tuple[tuple[str, str], ...]]:
    """Nodes with mean ranks plus edges joining pairs whose null was retained."""
    nodes = tuple(sorted(mean_ranks.items(), key=lambda kv: (kv[1], kv[0])))
    edges = sorted(tuple(sorted(pair)) for pair, rej in rejections.items() if not rej)
    return nodes, tuple(edges)


def compare_classifiers(sm: ScoreMatrix, alpha: float = 0.05) -> ComparisonResult:
    """Run the full comparison pipeline on a complete score matrix.

    Degenerate cases are mapped to their limits rather than errors: a pair
    with identical scores on every dataset gets p = 1 (nothing to reject),
    and a rank pattern so consistent that the F correction's denominator
    vanishes reports an infinite statistic with p = 0.
    """
    k, n = sm.values.shape
    ranks = rank_matrix(sm)
    mean_ranks = {c: float(r) for c, r in zip(sm.classifiers, ranks.mean(axis=1))}
    chi2 = friedman(ranks)
    denom = n * (k - 1) - chi2
    if chi2 > 0 and denom <= 1e-9:
        f_stat, omnibus_p = math.inf, 0.0
    else:
        f_stat, omnibus_p = iman_davenport(chi2, n, k)
    pairwise = []
    pvals = []
    for i in range(k):
        for j in range(i + 1, k):
            diff = sm.values[i] - sm.values[j]
            pseudo = hodges_lehmann(diff)
            if np.all(diff == 0):
                pairwise.append(
                    PairwiseComparison(
                        first=sm.classifiers[i],
                        second=sm.classifiers[j],
                        r_plus=0.0,
                        r_minus=0.0,
                        t_statistic=0.0,
                        p_value=1.0,
                        pseudomedian=pseudo,
                        identical=True,
                    )
                )
            else:
                res = wilcoxon_exact(diff)
                pairwise.append(
                    PairwiseComparison(
                        first=sm.classifiers[i],
                        second=sm.classifiers[j],
                        r_plus=res.r_plus,
                        r_minus=res.r_minus,
                        t_statistic=res.t_statistic,
                        p_value=res.p_value,
                        pseudomedian=pseudo,
                        dropped_zero=res.dropped_zero,
                    )
                )
            pvals.append(pairwise[-1].p_value)
    decisions = holm(pvals, alpha)
    pairwise = [
        PairwiseComparison(
            first=p.first,
            second=p.second,
            r_plus=p.r_plus,
            r_minus=p.r_minus,
            t_statistic=p.t_statistic,
            p_value=p.p_value,
            pseudomedian=p.pseudomedian,
            identical=p.identical,
            rejected=bool(rej),
            dropped_zero=p.dropped_zero,
        )
        for p, rej in zip(pairwise, decisions)
    ]
    rejections = {(p.first, p.second): bool(p.rejected) for p in pairwise}
    _, edges = cd_graph(mean_ranks, rejections)
    return ComparisonResult(
        classifiers=sm.classifiers,
        mean_ranks=mean_ranks,
        chi2=chi2,
        f_statistic=f_stat,
        omnibus_p=omnibus_p,
        pairwise=tuple(pairwise),
        alpha=alpha,
        edges=edges,
    )
