"""Synthetic data generation, evaluation metrics, and the noise harness.

The SCM has a scalar standard-normal confounder U that enters both the
latent treatment score and the outcome, uniform covariates on (-2, 2),
a propensity clamped to [0.05, 0.95], and Student-t(3) outcome noise.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field

import numpy as np

from .data import Dataset
from .nuisance import DEFAULT_CLIP, PropensityEstimate

__all__ = [
    "SyntheticSCM",
    "EvalReport",
    "generate",
    "penalized_width",
    "inject_propensity_noise",
    "evaluate_run",
]


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


@dataclass
class SyntheticSCM:
    d: int = 5
    seed: int = 0
    confounder_outcome_coef: float = 0.7
    noise_df: float = 3.0
    w: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if self.d < 3:
            raise ValueError("the SCM formulas use the first three covariates; need d >= 3")
        if self.w is None:
            self.w = np.random.default_rng(self.seed).normal(0.0, 0.6, self.d)

    def latent(self, X, U):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return X @ self.w + 0.8 * U + 0.5 * np.sin(X[:, 0]) - 0.25 * X[:, 0] ** 2

    def latent_propensity(self, X, U):
        return 0.05 + 0.9 * _sigmoid(self.latent(X, U))

    def mu(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return 0.5 + 0.8 * np.tanh(X[:, 0]) + 0.25 * X[:, 1] ** 2 - 0.15 * np.sin(X[:, 2])

    def tau(self, X, p):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return 0.7 + 0.2 * np.sin(X[:, 0]) + 0.1 * X[:, 0] + 0.8 * (np.asarray(p) - 0.5)

    def oracle_propensity(self, X, nodes: int = 64) -> np.ndarray:
        """e_1(x) = E_U[latent_propensity(x, U)] by Gauss-Hermite quadrature."""
        gh_x, gh_w = np.polynomial.hermite.hermgauss(nodes)
        u = math.sqrt(2.0) * gh_x
        w = gh_w / math.sqrt(math.pi)
        X = np.atleast_2d(np.asarray(X, dtype=float))
        out = np.zeros(X.shape[0])
        for ui, wi in zip(u, w):
            out += wi * self.latent_propensity(X, ui)
        return out

    def oracle_propensity_estimate(self, clip: float = DEFAULT_CLIP) -> PropensityEstimate:
        scm = self

        class _Oracle:
            def predict(self, X):
                return scm.oracle_propensity(X)

        return PropensityEstimate(_Oracle(), clip=clip)


def generate(scm: SyntheticSCM, n: int, seed: int = 0, phi=None) -> Dataset:
    """Draw n rows from the SCM; fully determined by (scm.seed, seed)."""
    if n < 1:
        raise ValueError("n must be positive")
    rng = np.random.default_rng(seed)
    X = rng.uniform(-2.0, 2.0, (n, scm.d))
    U = rng.standard_normal(n)
    e = scm.latent_propensity(X, U)
    A = (rng.random(n) < e).astype(int)
    eps = rng.standard_t(scm.noise_df, n)
    Y = scm.mu(X) + scm.tau(X, e) * A + scm.confounder_outcome_coef * U + eps
    kwargs = {} if phi is None else {"phi": phi}
    return Dataset(X, A, Y, **kwargs)


def penalized_width(width: float, coverage: float, a: float = 10.0, alpha: float = 0.95) -> float:
    """width * (1 + a * max(0, (1 - alpha) - coverage)), as printed."""
    if width < 0:
        raise ValueError("width must be nonnegative")
    if not 0.0 <= coverage <= 1.0:
        raise ValueError("coverage must lie in [0, 1]")
    return width * (1.0 + a * max(0.0, (1.0 - alpha) - coverage))


class _NoisyModel:
    """Adds a deterministic per-row normal draw to the base e_1 prediction.

    The draw is keyed on the row bytes plus (n, seed), so repeated calls on
    the same point reproduce the same perturbed propensity.
    """

    def __init__(self, base: PropensityEstimate, n: int, seed: int, second_param: str):
        if second_param not in ("sd", "var"):
            raise ValueError("second_param must be 'sd' or 'var'")
        self.base = base
        self.rate = n ** (-0.25)
        self.sd = self.rate if second_param == "sd" else math.sqrt(self.rate)
        self.seed = seed
        self.n = n

    def _noise(self, X):
        out = np.empty(X.shape[0])
        tag = f"{self.n}:{self.seed}".encode()
        for i, row in enumerate(np.ascontiguousarray(X, dtype=float)):
            h = hashlib.blake2b(row.tobytes() + tag, digest_size=8).digest()
            g = np.random.default_rng(int.from_bytes(h, "little"))
            out[i] = self.rate + self.sd * g.standard_normal()
        return out

    def predict(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return self.base.predict(X, 1) + self._noise(X)


def inject_propensity_noise(
    prop: PropensityEstimate,
    n: int,
    seed: int = 0,
    second_param: str = "sd",
) -> PropensityEstimate:
    """Perturb e_1 by N(n^{-1/4}, n^{-1/4}) noise, re-clipped to [c, 1-c]."""
    if n < 2:
        raise ValueError("n must be at least 2")
    return PropensityEstimate(_NoisyModel(prop, n, seed, second_param), clip=prop.clip)


@dataclass
class EvalReport:
    coverage: float
    width: float
    p_width: float
    a: float
    alpha: float
    records: list

    def to_dict(self):
        return {
            "coverage": self.coverage,
            "width": self.width,
            "p_width": self.p_width,
            "a": self.a,
            "alpha": self.alpha,
            "records": self.records,
        }


def evaluate_run(truth, intervals, a: float = 10.0, alpha: float = 0.95) -> EvalReport:
    """Coverage of theta(1, x_i), mean width, and penalized width."""
    truth = np.asarray(truth, dtype=float)
    lo = np.asarray([iv[0] for iv in intervals], dtype=float)
    up = np.asarray([iv[1] for iv in intervals], dtype=float)
    if not (len(truth) == len(lo) == len(up)):
        raise ValueError("truth and intervals must have equal length")
    hit = (truth >= lo) & (truth <= up)
    coverage = float(hit.mean())
    width = float(np.mean(up - lo))
    records = [
        {"truth": float(t), "lo": float(l), "up": float(u), "covered": bool(h)}
        for t, l, u, h in zip(truth, lo, up, hit)
    ]
    return EvalReport(
        coverage=coverage,
        width=width,
        p_width=penalized_width(width, coverage, a=a, alpha=alpha),
        a=a,
        alpha=alpha,
        records=records,
    )
