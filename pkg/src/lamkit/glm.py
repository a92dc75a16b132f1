"""Sign-constrained, ridge-penalised logistic regression.

The training problem is

    min over (b, w)   mean(logloss(sigmoid(b + X w), y)) + C * ||w||^2

subject to ``w_i >= 0`` for columns declared increasing and ``w_i <= 0`` for
columns declared decreasing. The bias is neither penalised nor constrained.
The objective is convex; we solve it with projected gradient descent using
a Barzilai-Borwein initial step and backtracking, which certifies optimality
through the projected-gradient residual (a KKT measure): for inactive
coordinates the residual is the plain gradient, and an active bound with
outward-pushing gradient contributes zero.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace

import numpy as np

from .data import Monotone
from .errors import DataValidationError, NumericalError

_PROB_CLIP = 1e-12  # class-rate clip for the degenerate one-class fit


class Link(str, enum.Enum):
    LOGISTIC = "logistic"
    LINEARISED = "linearised"


@dataclass(frozen=True)
class AdditiveModel:
    """Bias plus a coefficient vector over (possibly transformed) features."""

    bias: float
    coefficients: np.ndarray
    column_names: tuple[str, ...]
    column_directions: tuple[Monotone, ...]
    link: Link = Link.LOGISTIC
    alpha_star: float | None = None

    def __post_init__(self) -> None:
        coef = np.asarray(self.coefficients, dtype=np.float64).reshape(-1)
        coef.setflags(write=False)
        object.__setattr__(self, "coefficients", coef)
        object.__setattr__(self, "link", Link(self.link))
        names = tuple(self.column_names)
        dirs = tuple(Monotone(d) for d in self.column_directions)
        if len(names) != coef.size or len(dirs) != coef.size:
            raise DataValidationError("column metadata must match coefficient length")
        object.__setattr__(self, "column_names", names)
        object.__setattr__(self, "column_directions", dirs)
        if self.link is Link.LINEARISED and not (
            self.alpha_star is not None and self.alpha_star > 0
        ):
            raise DataValidationError("linearised models require alpha_star > 0")

    @property
    def n_columns(self) -> int:
        return self.coefficients.size

    def predict_logit(self, x: np.ndarray) -> float | np.ndarray:
        """Linear score ``bias + <coefficients, x>`` for a row or matrix."""
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1] != self.n_columns:
            raise DataValidationError(
                f"input has {x.shape[-1]} columns, model expects {self.n_columns}"
            )
        out = self.bias + x @ self.coefficients
        return float(out) if np.isscalar(out) or out.ndim == 0 else out

    def predict_proba(self, x: np.ndarray) -> float | np.ndarray:
        """Sigmoid of the linear score. Only valid for the logistic link."""
        if self.link is not Link.LOGISTIC:
            raise DataValidationError(
                "predict_proba requires the logistic link; use lam.predict_lam "
                "for linearised models"
            )
        z = self.predict_logit(x)
        out = _expit(np.asarray(z))
        return float(out) if np.ndim(z) == 0 else out

    def to_dict(self) -> dict:
        return {
            "bias": float(self.bias),
            "coefficients": [float(c) for c in self.coefficients],
            "columns": [
                {"name": n, "direction": int(d)}
                for n, d in zip(self.column_names, self.column_directions)
            ],
            "link": self.link.value,
            "alpha_star": self.alpha_star,
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "AdditiveModel":
        return cls(
            bias=float(raw["bias"]),
            coefficients=np.asarray(raw["coefficients"], dtype=np.float64),
            column_names=tuple(c["name"] for c in raw["columns"]),
            column_directions=tuple(Monotone(c["direction"]) for c in raw["columns"]),
            link=Link(raw["link"]),
            alpha_star=raw.get("alpha_star"),
        )


def _expit(z: np.ndarray) -> np.ndarray:
    # exp(-logaddexp(0, -z)) is stable for all z and never over/underflows
    return np.exp(-np.logaddexp(0.0, -z))


def _objective(X: np.ndarray, y: np.ndarray, bias: float, coef: np.ndarray, C: float) -> float:
    # mean logistic loss written as softplus(z) - y*z, finite for all finite z
    z = bias + X @ coef
    return float(np.mean(np.logaddexp(0.0, z) - y * z) + C * np.dot(coef, coef))


def _gradient(
    X: np.ndarray, y: np.ndarray, bias: float, coef: np.ndarray, C: float
) -> tuple[float, np.ndarray]:
    z = bias + X @ coef
    r = (_expit(z) - y) / y.size
    return float(np.sum(r)), X.T @ r + 2.0 * C * coef


def _project(coef: np.ndarray, inc: np.ndarray, dec: np.ndarray) -> np.ndarray:
    out = coef.copy()
    np.maximum(out, 0.0, where=inc, out=out)
    np.minimum(out, 0.0, where=dec, out=out)
    return out


def _direction_masks(directions) -> tuple[np.ndarray, np.ndarray]:
    d = np.asarray([int(Monotone(v)) for v in directions], dtype=np.int64)
    return d == 1, d == -1


def kkt_residual(
    model: AdditiveModel, X: np.ndarray, y: np.ndarray, C: float = 0.0
) -> float:
    """Max-norm of the unit-step projected-gradient residual at the model."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    inc, dec = _direction_masks(model.column_directions)
    g0, g = _gradient(X, y, model.bias, model.coefficients, C)
    stepped = _project(model.coefficients - g, inc, dec)
    res = np.abs(model.coefficients - stepped)
    return float(max(abs(g0), res.max() if res.size else 0.0))


def train_nnlr(
    X: np.ndarray,
    y: np.ndarray,
    directions,
    C: float = 0.0,
    *,
    tol: float = 1e-7,
    max_iter: int = 50_000,
    column_names: tuple[str, ...] | None = None,
) -> AdditiveModel:
    """Fit the sign-constrained logistic regression.

    Converges when the projected-gradient max-norm drops to ``tol``. A label
    vector with a single class short-circuits to a bias-only model at the
    logit of the clipped class rate.
    """
    X = np.ascontiguousarray(np.asarray(X, dtype=np.float64))
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    if X.ndim != 2 or X.shape[0] != y.size or y.size < 1:
        raise DataValidationError("X must be (M, d) with matching label vector")
    if not np.all((y == 0) | (y == 1)):
        raise DataValidationError("labels must be 0/1")
    if C < 0:
        raise DataValidationError("regularisation strength C must be >= 0")
    d = X.shape[1]
    directions = tuple(Monotone(v) for v in directions)
    if len(directions) != d:
        raise DataValidationError("one direction per column required")
    if column_names is None:
        column_names = tuple(f"x{i}" for i in range(d))

    def build(bias: float, coef: np.ndarray) -> AdditiveModel:
        return AdditiveModel(
            bias=bias,
            coefficients=coef,
            column_names=tuple(column_names),
            column_directions=directions,
            link=Link.LOGISTIC,
        )

    rate = float(np.mean(y))
    if rate in (0.0, 1.0):
        clipped = min(max(rate, _PROB_CLIP), 1.0 - _PROB_CLIP)
        bias = float(np.log(clipped / (1.0 - clipped)))
        return build(bias, np.zeros(d))

    inc, dec = _direction_masks(directions)
    bias, coef = 0.0, np.zeros(d)
    f = _objective(X, y, bias, coef, C)
    g0, g = _gradient(X, y, bias, coef, C)
    step = 1.0
    prev: tuple[np.ndarray, np.ndarray] | None = None  # (delta_theta, delta_grad)
    for _ in range(max_iter):
        stepped = _project(coef - g, inc, dec)
        residual = max(abs(g0), float(np.max(np.abs(coef - stepped))) if d else 0.0)
        if residual <= tol:
            # snap coordinates held at an active bound to exactly zero
            coef = coef.copy()
            coef[inc & (coef <= tol) & (g > 0)] = 0.0
            coef[dec & (coef >= -tol) & (g < 0)] = 0.0
            return build(bias, coef)
        if prev is not None:
            s, dg = prev
            denom = float(s @ dg)
            if denom > 0:
                step = float(s @ s) / denom
            step = min(max(step, 1e-12), 1e12)
        # backtracking on the quadratic upper bound along the projection arc
        while True:
            nb = bias - step * g0
            nc = _project(coef - step * g, inc, dec)
            db, dc = nb - bias, nc - coef
            nf = _objective(X, y, nb, nc, C)
            bound = (
                f
                + g0 * db
                + float(g @ dc)
                + (db * db + float(dc @ dc)) / (2.0 * step)
            )
            if nf <= bound + 1e-12 * (1.0 + abs(f)):
                break
            step *= 0.5
            if step < 1e-18:
                raise NumericalError(
                    f"line search stalled; projected-gradient residual {residual:.3e}"
                )
        ng0, ng = _gradient(X, y, nb, nc, C)
        prev = (
            np.concatenate([[db], dc]),
            np.concatenate([[ng0 - g0], ng - g]),
        )
        bias, coef, f, g0, g = nb, nc, nf, ng0, ng
    stepped = _project(coef - g, inc, dec)
    residual = max(abs(g0), float(np.max(np.abs(coef - stepped))) if d else 0.0)
    raise NumericalError(
        f"no convergence in {max_iter} iterations; "
        f"projected-gradient residual {residual:.3e} > tol {tol:.1e}"
    )


def predict_logit(model: AdditiveModel, x: np.ndarray) -> float | np.ndarray:
    return model.predict_logit(x)


def predict_proba(model: AdditiveModel, x: np.ndarray) -> float | np.ndarray:
    return model.predict_proba(x)


def linearised_copy(model: AdditiveModel, alpha_star: float) -> AdditiveModel:
    """Same parameters, linearised prediction contract (used by lam.linearise)."""
    return replace(model, link=Link.LINEARISED, alpha_star=alpha_star)
