"""Model composition: binned scorecards, two-layer stacks, and mixtures.

``Arm1Model`` is the one-layer pipeline (supervised binning feeding the
sign-constrained GLM). ``TwoLayerModel`` trains one such pipeline per
subscale, freezes them, and fits a nonnegative outer GLM on the subscale
risk scores. ``MixtureModel`` instead combines the frozen subscale scorers
as a convex opinion pool whose weights come from a single multiplicative-
weights pass over the shuffled training rows (:func:`subscale_hedge`).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Protocol

import numpy as np

from .binning import BinningTransform, fit_transform
from .data import Dataset, FeatureSpec, Monotone, SubscaleSpec
from .errors import DataValidationError
from .glm import AdditiveModel, Link, train_nnlr
from .lam import linearise, predict_lam

_LOSS_CLIP = 1e-12  # keeps the logistic loss finite for hard 0/1 expert outputs


class Scorer(Protocol):
    """Anything that maps a raw feature matrix to risks in [0, 1]."""

    feature_names: tuple[str, ...]

    def predict_proba(self, X: np.ndarray) -> np.ndarray: ...


@dataclass(frozen=True)
class Arm1Model:
    """Supervised binning composed with a sign-constrained GLM."""

    feature_names: tuple[str, ...]
    transform: BinningTransform
    model: AdditiveModel

    def predict_logit(self, X: np.ndarray) -> np.ndarray:
        return self.model.predict_logit(self.transform.transform(X))

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        encoded = self.transform.transform(X)
        if self.model.link is Link.LINEARISED:
            return predict_lam(self.model, encoded)
        return self.model.predict_proba(encoded)


@dataclass(frozen=True)
class RawLinearModel:
    """Sign-constrained GLM applied directly to the raw features."""

    feature_names: tuple[str, ...]
    model: AdditiveModel

    def predict_logit(self, X: np.ndarray) -> np.ndarray:
        return self.model.predict_logit(np.atleast_2d(np.asarray(X, dtype=np.float64)))

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if self.model.link is Link.LINEARISED:
            return predict_lam(self.model, X)
        return self.model.predict_proba(X)


@dataclass(frozen=True)
class FixedScores:
    """Externally supplied per-row risks standing in for a trained scorer.

    Rows are matched positionally against the matrix it is asked to score,
    so it only makes sense for the exact dataset the scores were built for.
    """

    scores: np.ndarray
    feature_names: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        s = np.asarray(self.scores, dtype=np.float64).reshape(-1)
        if s.size and (s.min() < 0.0 or s.max() > 1.0):
            raise DataValidationError("external scores must lie in [0, 1]")
        s.setflags(write=False)
        object.__setattr__(self, "scores", s)

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        n = np.atleast_2d(X).shape[0]
        if n != self.scores.size:
            raise DataValidationError(
                f"fixed scores cover {self.scores.size} rows, got {n}"
            )
        return self.scores


def _specs_for(specs, names: tuple[str, ...]) -> list[FeatureSpec]:
    by_name = {s.name: s for s in specs}
    missing = [n for n in names if n not in by_name]
    if missing:
        raise DataValidationError(f"no feature specs for columns {missing}")
    return [by_name[n] for n in names]


def train_arm1(
    ds: Dataset,
    specs,
    C: float = 0.0,
    *,
    special_value_threshold: float = float("-inf"),
    linearised: bool = False,
    tol: float = 1e-7,
    max_iter: int = 50_000,
) -> Arm1Model:
    """Fit the binned scorecard; all half-line indicators are constrained >= 0."""
    transform, encoded = fit_transform(
        ds, _specs_for(specs, ds.feature_names), special_value_threshold
    )
    model = train_nnlr(
        encoded,
        ds.labels,
        transform.column_directions,
        C,
        tol=tol,
        max_iter=max_iter,
        column_names=transform.column_names,
    )
    if linearised:
        model = linearise(model)
    return Arm1Model(ds.feature_names, transform, model)


def train_raw_nnlr(
    ds: Dataset,
    specs,
    C: float = 0.0,
    *,
    linearised: bool = False,
    tol: float = 1e-7,
    max_iter: int = 50_000,
) -> RawLinearModel:
    """Fit the GLM on untransformed features with the declared sign constraints."""
    ordered = _specs_for(specs, ds.feature_names)
    model = train_nnlr(
        ds.features,
        ds.labels,
        tuple(s.monotone for s in ordered),
        C,
        tol=tol,
        max_iter=max_iter,
        column_names=ds.feature_names,
    )
    if linearised:
        model = linearise(model)
    return RawLinearModel(ds.feature_names, model)


@dataclass(frozen=True)
class TwoLayerModel:
    """Frozen per-subscale scorecards under a nonnegative outer GLM."""

    feature_names: tuple[str, ...]
    subscale_names: tuple[str, ...]
    submodels: dict[str, Arm1Model]
    outer: AdditiveModel

    def _column_indices(self, names: tuple[str, ...]) -> list[int]:
        pos = {n: i for i, n in enumerate(self.feature_names)}
        return [pos[n] for n in names]

    def subscale_risks(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        cols = []
        for name in self.subscale_names:
            sub = self.submodels[name]
            cols.append(sub.predict_proba(X[:, self._column_indices(sub.feature_names)]))
        return np.column_stack(cols)

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        risks = self.subscale_risks(X)
        if self.outer.link is Link.LINEARISED:
            return predict_lam(self.outer, risks)
        return self.outer.predict_proba(risks)


def train_arm2(
    ds: Dataset,
    specs,
    subscales: SubscaleSpec,
    C: float = 0.0,
    *,
    special_value_threshold: float = float("-inf"),
    linearised: bool = False,
    tol: float = 1e-7,
    max_iter: int = 50_000,
) -> TwoLayerModel:
    """Train subscale scorecards first, then the outer nonnegative GLM.

    Staging is strictly sequential: subscale outputs are computed once and
    treated as fixed inputs to the outer fit. With ``linearised`` both layers
    swap to the clipped-linear link.
    """
    subscales.validate_partition(ds.feature_names)
    submodels: dict[str, Arm1Model] = {}
    risk_cols = []
    names = subscales.names
    for name in names:
        sub_ds = ds.select_features(subscales.groups[name])
        sub = train_arm1(
            sub_ds,
            specs,
            C,
            special_value_threshold=special_value_threshold,
            linearised=linearised,
            tol=tol,
            max_iter=max_iter,
        )
        submodels[name] = sub
        risk_cols.append(sub.predict_proba(sub_ds.features))
    risks = np.column_stack(risk_cols)
    outer = train_nnlr(
        risks,
        ds.labels,
        tuple(Monotone.INCREASING for _ in names),
        C,
        tol=tol,
        max_iter=max_iter,
        column_names=tuple(f"risk[{n}]" for n in names),
    )
    if linearised:
        outer = linearise(outer)
    return TwoLayerModel(ds.feature_names, names, submodels, outer)


@dataclass(frozen=True)
class MixtureModel:
    """Convex opinion pool over per-subscale scorers."""

    feature_names: tuple[str, ...]
    weights: dict[str, float]
    submodels: dict[str, Scorer]
    seed: int

    def __post_init__(self) -> None:
        total = sum(self.weights.values())
        if abs(total - 1.0) > 1e-9 or any(w < 0 for w in self.weights.values()):
            raise DataValidationError("mixture weights must be nonnegative and sum to 1")
        if set(self.weights) != set(self.submodels):
            raise DataValidationError("weights and submodels must cover the same subscales")

    def _column_indices(self, names: tuple[str, ...]) -> list[int]:
        pos = {n: i for i, n in enumerate(self.feature_names)}
        try:
            return [pos[n] for n in names]
        except KeyError as exc:
            raise DataValidationError(f"missing subscale feature {exc.args[0]!r}") from None

    def subscale_scores(self, X: np.ndarray) -> dict[str, np.ndarray]:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        out = {}
        for name, sub in self.submodels.items():
            feats = getattr(sub, "feature_names", ())
            block = X[:, self._column_indices(feats)] if feats else X
            out[name] = np.asarray(sub.predict_proba(block), dtype=np.float64)
        return out

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        scores = self.subscale_scores(X)
        return sum(self.weights[n] * scores[n] for n in self.weights)

    def attribute(self, x: np.ndarray) -> dict[str, float]:
        return attribute_subscales(self, x)


def hedge_weights(
    scores: np.ndarray,
    labels: np.ndarray,
    seed: int,
    eta: float | None = None,
    return_history: bool = False,
):
    """Multiplicative-weights pass over shuffled rows.

    ``scores`` is (M, K) with one column per expert, values in [0, 1].
    Weights start uniform; after each row every expert's weight is scaled by
    ``exp(-eta * logloss)`` and the vector is renormalised. The default
    learning rate is ``8 ln(K) / M``. Expert outputs are clipped away from
    hard 0/1 inside the loss so a single confident mistake cannot zero a
    weight irrecoverably.
    """
    S = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64).reshape(-1)
    if S.ndim != 2 or S.shape[0] != y.size:
        raise DataValidationError("scores must be (M, K) matching the labels")
    m, k = S.shape
    if k < 2:
        raise DataValidationError(f"need at least two experts, got {k}")
    if np.min(S) < 0.0 or np.max(S) > 1.0:
        raise DataValidationError("expert outputs must lie in [0, 1]")
    if eta is None:
        eta = 8.0 * np.log(k) / m
    clipped = np.clip(S, _LOSS_CLIP, 1.0 - _LOSS_CLIP)
    losses = -(y[:, None] * np.log(clipped) + (1.0 - y[:, None]) * np.log1p(-clipped))
    order = np.random.default_rng(seed).permutation(m)
    w = np.full(k, 1.0 / k)
    history = [w.copy()] if return_history else None
    for t in order:
        w = w * np.exp(-eta * losses[t])
        w = w / w.sum()
        if history is not None:
            history.append(w.copy())
    if return_history:
        return w, np.asarray(history)
    return w


def subscale_hedge(
    ds: Dataset,
    submodels: dict[str, Scorer],
    seed: int,
    eta: float | None = None,
) -> dict[str, float]:
    """Train opinion-pool weights for pre-fitted subscale scorers.

    Each scorer is evaluated once on all rows (cost ``O(M * |groups|)``
    scorer calls), then the sequential weight update runs over a single
    seeded shuffle of the rows.
    """
    if len(submodels) < 2:
        raise DataValidationError("need at least two subscales to train a mixture")
    names = tuple(submodels)
    pos = {n: i for i, n in enumerate(ds.feature_names)}
    cols = []
    for name in names:
        sub = submodels[name]
        feats = getattr(sub, "feature_names", ())
        block = ds.features[:, [pos[f] for f in feats]] if feats else ds.features
        s = np.asarray(sub.predict_proba(block), dtype=np.float64)
        if s.size and (s.min() < 0.0 or s.max() > 1.0):
            raise DataValidationError(f"subscale {name!r} produced scores outside [0, 1]")
        cols.append(s)
    w = hedge_weights(np.column_stack(cols), ds.labels, seed, eta)
    return {n: float(v) for n, v in zip(names, w)}


def train_mixture(
    ds: Dataset,
    specs,
    subscales: SubscaleSpec,
    C: float = 0.0,
    *,
    seed: int,
    special_value_threshold: float = float("-inf"),
    linearised: bool = False,
    holdout_fraction: float = 0.0,
    tol: float = 1e-7,
    max_iter: int = 50_000,
) -> MixtureModel:
    """Fit per-subscale scorecards and pool them with trained weights.

    With ``holdout_fraction > 0`` that share of rows is held out of the
    subscale fits and used only for the weight pass, avoiding optimistic
    weights; by default the weights are trained on the same rows the
    submodels saw.
    """
    subscales.validate_partition(ds.feature_names)
    if not 0.0 <= holdout_fraction < 1.0:
        raise DataValidationError("holdout_fraction must be in [0, 1)")
    fit_ds = hedge_ds = ds
    if holdout_fraction > 0.0:
        rng = np.random.default_rng(seed)
        perm = rng.permutation(ds.n_rows)
        n_hold = int(round(holdout_fraction * ds.n_rows))
        if n_hold == 0 or n_hold == ds.n_rows:
            raise DataValidationError("holdout_fraction leaves an empty split")
        hedge_ds = ds.subset_rows(np.sort(perm[:n_hold]))
        fit_ds = ds.subset_rows(np.sort(perm[n_hold:]))
    submodels: dict[str, Scorer] = {}
    for name in subscales.names:
        submodels[name] = train_arm1(
            fit_ds.select_features(subscales.groups[name]),
            specs,
            C,
            special_value_threshold=special_value_threshold,
            linearised=linearised,
            tol=tol,
            max_iter=max_iter,
        )
    if len(submodels) == 1:
        weights = {subscales.names[0]: 1.0}
    else:
        weights = subscale_hedge(hedge_ds, submodels, seed)
    return MixtureModel(ds.feature_names, weights, submodels, seed)


def predict_mixture(m: MixtureModel, x: np.ndarray) -> float | np.ndarray:
    """Weighted opinion pool; a convex combination, so always in [0, 1]."""
    scores = m.subscale_scores(x)
    out = sum(m.weights[n] * scores[n] for n in m.weights)
    if np.ndim(x) == 1:
        return float(out[0])
    return out


def attribute_subscales(m: MixtureModel, x: np.ndarray) -> dict[str, float]:
    """Per-subscale contributions ``weight * risk``, sorted descending.

    The contributions sum exactly to the prediction, so the top entries can
    be emitted directly as reason codes.
    """
    x = np.asarray(x, dtype=np.float64)
    scores = m.subscale_scores(x)
    contrib = {n: float(m.weights[n] * scores[n][0]) for n in m.weights}
    return dict(sorted(contrib.items(), key=lambda kv: (-kv[1], kv[0])))
