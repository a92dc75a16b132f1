"""Shared fixtures and independent oracles for the test suite.

Every oracle here is deliberately written as a brute-force or quadrature
re-derivation, not a call back into the code under test.
"""

from __future__ import annotations

import itertools
import json
import math

import numpy as np
from scipy import integrate

from lamkit.data import Dataset, DatasetConfig


# ---------------------------------------------------------------- datasets


def make_dataset(m=120, d=4, seed=0, bias=-0.5, categorical=()) -> Dataset:
    """Random numeric dataset with labels drawn from a planted linear model."""
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(m, d))
    w = rng.normal(scale=0.8, size=d)
    p = 1.0 / (1.0 + np.exp(-(bias + X @ w)))
    y = (rng.random(m) < p).astype(int)
    # make sure both classes exist
    y[0], y[1] = 0, 1
    names = tuple(f"f{i}" for i in range(d))
    mask = tuple(i in categorical for i in range(d))
    return Dataset(X, y, names, mask)


def config_for(ds: Dataset, monotone=None, subscales=None, special_values=None,
               max_leaves=5, threshold=float("-inf")) -> DatasetConfig:
    monotone = monotone or {}
    special_values = special_values or {}
    raw = {
        "special_value_threshold": threshold,
        "features": {
            name: {
                "monotone": int(monotone.get(name, 0)),
                "special_values": list(special_values.get(name, [])),
                "max_leaves": max_leaves,
                "categorical": bool(ds.categorical_mask[i]),
            }
            for i, name in enumerate(ds.feature_names)
        },
        "subscales": subscales or {"all": list(ds.feature_names)},
    }
    return DatasetConfig.from_dict(raw)


def write_csv(path, header, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(str(c) for c in row) + "\n")


def write_config(path, features, subscales, threshold=float("-inf")) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(
            {
                "special_value_threshold": threshold,
                "features": features,
                "subscales": subscales,
            },
            fh,
        )


# --------------------------------------------------------------- glm oracle


def logistic_objective(X, y, bias, coef, C=0.0) -> float:
    z = bias + X @ coef
    p = np.clip(1.0 / (1.0 + np.exp(-z)), 1e-300, 1 - 1e-16)
    return float(
        np.mean(-y * np.log(p) - (1 - y) * np.log(1 - p)) + C * np.dot(coef, coef)
    )


def gradient_descent_oracle(X, y, C=0.0, tol=2e-9, max_iter=400_000):
    """Plain full-batch gradient descent with Armijo halving, run very tight.

    Independent of the package solver: no projection, no BB step, fresh code.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    m, d = X.shape
    theta = np.zeros(d + 1)

    def grad(th):
        z = th[0] + X @ th[1:]
        p = 1.0 / (1.0 + np.exp(-z))
        r = (p - y) / m
        return np.concatenate(([r.sum()], X.T @ r + 2 * C * th[1:]))

    def value(th):
        return logistic_objective(X, y, th[0], th[1:], C)

    f = value(theta)
    step = 1.0
    for _ in range(max_iter):
        g = grad(theta)
        if np.max(np.abs(g)) <= tol:
            break
        while True:
            cand = theta - step * g
            fc = value(cand)
            if fc <= f - 1e-4 * step * float(g @ g):
                break
            step *= 0.5
        theta, f = cand, fc
        step = min(step * 2.0, 1e6)
    return theta[0], theta[1:]


# --------------------------------------------------------------- lam oracles


def dilog_quadrature(z: float) -> float:
    """-integral_0^z ln(1-u)/u du by adaptive quadrature."""
    if z == 0.0:
        return 0.0
    val, _ = integrate.quad(
        lambda u: math.log1p(-u) / u if u != 0 else -1.0, 0.0, z,
        epsabs=1e-13, epsrel=1e-13, limit=400,
    )
    return -val


def squared_error_quadrature(alpha: float) -> float:
    """Integral of (clipped-linear - sigmoid)^2, tails truncated at |x| = 60."""

    def sig(x):
        return 1.0 / (1.0 + np.exp(-x))

    lo, _ = integrate.quad(lambda x: sig(x) ** 2, -60.0, -alpha,
                           epsabs=1e-12, epsrel=1e-12, limit=400)
    mid, _ = integrate.quad(lambda x: (0.5 + x / (2 * alpha) - sig(x)) ** 2,
                            -alpha, alpha, epsabs=1e-12, epsrel=1e-12, limit=400)
    hi, _ = integrate.quad(lambda x: (1.0 - sig(x)) ** 2, alpha, 60.0,
                           epsabs=1e-12, epsrel=1e-12, limit=400)
    return lo + mid + hi


# ------------------------------------------------------------ metric oracles


def brute_force_auc(scores, labels) -> float:
    s = np.asarray(scores, dtype=float)
    y = np.asarray(labels)
    pos = s[y == 1]
    neg = s[y == 0]
    total = 0.0
    for a in pos:
        for b in neg:
            if a > b:
                total += 1.0
            elif a == b:
                total += 0.5
    return total / (len(pos) * len(neg))


# ------------------------------------------------------------- stats oracles


def brute_force_wilcoxon(d):
    """Exact two-sided p by enumerating all 2^N sign vectors.

    Follows the even-split convention: zero differences contribute half
    their rank to both sums regardless of the assigned sign; an odd count
    of zeros first drops the last zero in input order.
    """
    d = np.asarray(d, dtype=float)
    zero_idx = np.flatnonzero(d == 0)
    if len(zero_idx) % 2 == 1:
        d = np.delete(d, zero_idx[-1])
    n = len(d)
    abs_d = np.abs(d)
    order = np.argsort(abs_d, kind="mergesort")
    ranks = np.empty(n)
    i = 0
    sorted_abs = abs_d[order]
    while i < n:
        j = i
        while j < n and sorted_abs[j] == sorted_abs[i]:
            j += 1
        ranks[order[i:j]] = 0.5 * (i + j + 1)
        i = j
    zeros = d == 0
    r_plus_obs = ranks[d > 0].sum() + 0.5 * ranks[zeros].sum()
    r_minus_obs = ranks[d < 0].sum() + 0.5 * ranks[zeros].sum()
    t_obs = min(r_plus_obs, r_minus_obs)
    at_or_below = 0
    at_or_above = 0
    total = 0
    for signs in itertools.product((1, -1), repeat=n):
        w = 0.0
        for s, r, z in zip(signs, ranks, zeros):
            if z:
                w += 0.5 * r
            elif s == 1:
                w += r
        total += 1
        eps = 1e-9
        if w <= t_obs + eps:
            at_or_below += 1
        if w >= t_obs - eps:
            at_or_above += 1
    return t_obs, min(1.0, 2.0 * min(at_or_below, at_or_above) / total)


# ------------------------------------------------------------ binning oracle


def entropy_bits(labels) -> float:
    y = np.asarray(labels, dtype=float)
    n = len(y)
    if n == 0:
        return 0.0
    p = y.mean()
    if p in (0.0, 1.0):
        return 0.0
    return -(p * math.log(p) + (1 - p) * math.log(1 - p))


def exhaustive_split_gains(values, labels):
    """All candidate thresholds (midpoints of adjacent distinct values) and
    their information gains, computed directly from the definition."""
    v = np.asarray(values, dtype=float)
    y = np.asarray(labels, dtype=float)
    distinct = np.unique(v)
    out = []
    n = len(v)
    h_parent = entropy_bits(y)
    for a, b in zip(distinct[:-1], distinct[1:]):
        thr = 0.5 * (a + b)
        left = y[v <= thr]
        right = y[v > thr]
        gain = h_parent - (len(left) / n) * entropy_bits(left) - (
            len(right) / n
        ) * entropy_bits(right)
        out.append((thr, gain))
    return out


# -------------------------------------------------------------- hedge oracle


def hedge_recurrence(scores, labels, seed, eta=None, clip=1e-12):
    """Plain-python re-execution of the multiplicative weight updates."""
    S = np.asarray(scores, dtype=float)
    y = np.asarray(labels, dtype=float)
    m, k = S.shape
    if eta is None:
        eta = 8.0 * math.log(k) / m
    order = np.random.default_rng(seed).permutation(m)
    w = [1.0 / k] * k
    for t in order:
        new = []
        for i in range(k):
            p = min(max(S[t, i], clip), 1.0 - clip)
            loss = -(y[t] * math.log(p) + (1.0 - y[t]) * math.log(1.0 - p))
            new.append(w[i] * math.exp(-eta * loss))
        z = sum(new)
        w = [wi / z for wi in new]
    return np.asarray(w)
