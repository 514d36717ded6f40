"""Nuisance estimation: propensity scores and pseudo-outcome regression.

Propensities are clipped to [c, 1-c] (default c = 0.05) so every radius
stays finite.  Fits are deterministic given (data, hyper, seed).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .boosting import BoostHyper, GradientBoostedTrees
from .data import Dataset
from .divergences import DivergenceSpec, conjugate_projection

__all__ = [
    "PropensityEstimate",
    "PseudoOutcomeRegressor",
    "LogisticModel",
    "ConstantModel",
    "fit_propensity",
    "fit_pseudo_outcome",
    "marginal_propensity",
    "DEFAULT_CLIP",
]

DEFAULT_CLIP = 0.05


class ConstantModel:
    def __init__(self, p1: float):
        self.p1 = float(p1)

    def predict(self, X):
        return np.full(np.atleast_2d(X).shape[0], self.p1)


class LogisticModel:
    """Plain logistic regression fit by ridge-damped Newton iterations."""

    def __init__(self, ridge: float = 1e-6, max_iter: int = 50):
        self.ridge = ridge
        self.max_iter = max_iter
        self.coef_ = None

    def fit(self, X, y):
        n, d = X.shape
        Z = np.column_stack([np.ones(n), X])
        beta = np.zeros(d + 1)
        for _ in range(self.max_iter):
            z = Z @ beta
            p = 0.5 * (1.0 + np.tanh(0.5 * z))
            W = np.maximum(p * (1.0 - p), 1e-9)
            grad = Z.T @ (p - y) / n + self.ridge * beta
            hess = (Z.T * W) @ Z / n + self.ridge * np.eye(d + 1)
            step = np.linalg.solve(hess, grad)
            beta -= step
            if np.max(np.abs(step)) < 1e-10:
                break
        self.coef_ = beta
        return self

    def predict(self, X):
        Z = np.column_stack([np.ones(X.shape[0]), X])
        return 0.5 * (1.0 + np.tanh(0.5 * (Z @ self.coef_)))


@dataclass
class PropensityEstimate:
    """Fitted e_1(x) with clipping; e_0 = 1 - e_1."""

    model: object
    clip: float = DEFAULT_CLIP

    def predict(self, X, a: int = 1) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        e1 = np.clip(np.asarray(self.model.predict(X), dtype=float), self.clip, 1.0 - self.clip)
        return e1 if a == 1 else 1.0 - e1


def fit_propensity(
    data: Dataset,
    method: str = "boosted",
    hyper: BoostHyper | None = None,
    clip: float = DEFAULT_CLIP,
    seed: int = 0,
) -> PropensityEstimate:
    if method not in ("logistic", "boosted"):
        raise ValueError(f"unknown method {method!r}")
    counts = np.bincount(data.A, minlength=2)
    if counts.min() == 0:
        raise ValueError("both treatment arms must be present")
    X, y = data.X, data.A.astype(float)
    constant_x = data.d == 0 or np.all(np.ptp(X, axis=0) == 0)
    if constant_x:
        return PropensityEstimate(ConstantModel(y.mean()), clip=clip)
    if method == "logistic":
        model = LogisticModel().fit(X, y)
    else:
        model = GradientBoostedTrees(loss="logistic", hyper=hyper or BoostHyper(), seed=seed).fit(X, y)
    return PropensityEstimate(model, clip=clip)


def marginal_propensity(data: Dataset) -> dict:
    """Exact arm frequencies n_a / n; errors on an empty arm (positivity)."""
    if data.n < 1:
        raise ValueError("need at least one observation")
    counts = np.bincount(data.A, minlength=2)
    if counts.min() == 0:
        raise ValueError("positivity violated: an arm is empty")
    return {0: counts[0] / data.n, 1: counts[1] / data.n}


@dataclass
class PseudoOutcomeRegressor:
    """Per-arm regression m(a, x) of the conjugate pseudo-outcome Z."""

    models: dict = field(default_factory=dict)  # a -> GradientBoostedTrees | float

    def predict(self, a: int, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        model = self.models[a]
        if isinstance(model, float):
            return np.full(X.shape[0], model)
        return model.predict(X)


PSEUDO_HYPER = BoostHyper(n_rounds=100, learning_rate=0.05, max_depth=3, subsample=0.8)


def fit_pseudo_outcome(
    fold: Dataset,
    duals,
    spec: DivergenceSpec,
    hyper: BoostHyper | None = None,
    seed: int = 0,
    phi_values: np.ndarray | None = None,
) -> PseudoOutcomeRegressor:
    """Regress Z_i = g*((phi(Y_i) - u(A_i,X_i)) / lambda(A_i,X_i)) on (A, X).

    ``duals`` must expose h(a, X) and u(a, X).  Conjugate arguments are
    projected just inside the finite domain by the caller's dual fit; any
    remaining infinite Z is an error naming the offending row.
    """
    hyper = hyper or PSEUDO_HYPER
    phi = fold.phi_values() if phi_values is None else np.asarray(phi_values, dtype=float)
    h = np.empty(fold.n)
    u = np.empty(fold.n)
    for a in (0, 1):
        mask = fold.A == a
        if mask.any():
            h[mask] = duals.h(a, fold.X[mask])
            u[mask] = duals.u(a, fold.X[mask])
    lam = np.exp(h)
    t = (phi - u) / lam
    t = np.minimum(t, conjugate_projection(spec))
    z = spec.conj(t)
    if not np.all(np.isfinite(z)):
        row = int(np.nonzero(~np.isfinite(z))[0][0])
        raise ValueError(f"infinite pseudo-outcome at row {row}: dual argument outside conjugate domain")
    reg = PseudoOutcomeRegressor()
    for a in (0, 1):
        mask = fold.A == a
        if not mask.any():
            raise ValueError(f"arm {a} empty in fold")
        if fold.d == 0:
            reg.models[a] = float(z[mask].mean())
        else:
            reg.models[a] = GradientBoostedTrees(loss="squared", hyper=hyper, seed=seed + a).fit(
                fold.X[mask], z[mask]
            )
    return reg
