"""Independent ground-truth generators used to certify the estimation path.

Contents: exact f-divergences for exponential-family and discrete pairs,
a convex-programming solve of the primal worst-case problem on small
discrete supports, interventional Monte Carlo for synthetic SCMs, and the
binary-confounder construction behind the divergence-bound audit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .divergences import DivergenceSpec

__all__ = [
    "ExpFamilyLaw",
    "DiscreteLaw",
    "DivergenceEstimate",
    "rn_derivative",
    "exact_divergence",
    "primal_oracle",
    "scm_ground_truth",
    "confounded_binary_laws",
]

_FAMILIES = ("bernoulli", "gaussian", "poisson", "exponential")


@dataclass(frozen=True)
class ExpFamilyLaw:
    """A one-parameter-family law; params per family:
    bernoulli (p,), gaussian (mu, var), poisson (lam,), exponential (lam,)."""

    family: str
    params: tuple

    def __post_init__(self):
        if self.family not in _FAMILIES:
            raise ValueError(f"unknown family {self.family!r}")
        p = self.params
        if self.family == "bernoulli":
            if not (0.0 < p[0] < 1.0):
                raise ValueError("bernoulli p must be in (0,1)")
        elif self.family == "gaussian":
            if p[1] <= 0:
                raise ValueError("gaussian variance must be positive")
        elif p[0] <= 0:
            raise ValueError("rate must be positive")

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        if self.family == "bernoulli":
            return (rng.random(size) < self.params[0]).astype(float)
        if self.family == "gaussian":
            mu, var = self.params
            return mu + math.sqrt(var) * rng.standard_normal(size)
        if self.family == "poisson":
            return rng.poisson(self.params[0], size).astype(float)
        return rng.exponential(1.0 / self.params[0], size)

    def in_support(self, y: np.ndarray) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        if self.family == "bernoulli":
            return np.isin(y, (0.0, 1.0))
        if self.family == "gaussian":
            return np.isfinite(y)
        if self.family == "poisson":
            return (y >= 0) & (y == np.floor(y))
        return y >= 0


@dataclass(frozen=True)
class DiscreteLaw:
    """Finite-support law; probs must sum to one."""

    support: tuple
    probs: tuple

    def __post_init__(self):
        s = np.asarray(self.support, dtype=float)
        p = np.asarray(self.probs, dtype=float)
        if len(s) != len(p):
            raise ValueError("support and probs length mismatch")
        if np.any(p < 0):
            raise ValueError("negative probability")
        if abs(p.sum() - 1.0) > 1e-12:
            raise ValueError(f"probs sum to {p.sum()}, not 1")
        object.__setattr__(self, "support", tuple(s.tolist()))
        object.__setattr__(self, "probs", tuple(p.tolist()))

    @property
    def support_arr(self) -> np.ndarray:
        return np.asarray(self.support, dtype=float)

    @property
    def probs_arr(self) -> np.ndarray:
        return np.asarray(self.probs, dtype=float)


class DivergenceEstimate(NamedTuple):
    value: float
    se: float


def rn_derivative(p: ExpFamilyLaw, q: ExpFamilyLaw, y) -> np.ndarray:
    """dP/dQ(y) via the per-family closed forms."""
    if p.family != q.family:
        raise ValueError(f"mixed families {p.family!r} vs {q.family!r}")
    y = np.asarray(y, dtype=float)
    if not p.in_support(y).all():
        raise ValueError("y outside the family support")
    if p.family == "bernoulli":
        pp, qq = p.params[0], q.params[0]
        return np.exp(y * math.log(pp * (1 - qq) / (qq * (1 - pp))) + math.log((1 - pp) / (1 - qq)))
    if p.family == "gaussian":
        mp, vp = p.params
        mq, vq = q.params
        return math.sqrt(vq / vp) * np.exp(-0.5 * (y - mp) ** 2 / vp + 0.5 * (y - mq) ** 2 / vq)
    if p.family == "poisson":
        lp, lq = p.params[0], q.params[0]
        return np.exp(y * math.log(lp / lq) - (lp - lq))
    lp, lq = p.params[0], q.params[0]
    return (lp / lq) * np.exp(-(lp - lq) * y)


def _discrete_divergence(spec: DivergenceSpec, p: DiscreteLaw, q: DiscreteLaw) -> float:
    sp, sq = p.support_arr, q.support_arr
    if len(sp) != len(sq) or not np.allclose(sp, sq):
        raise ValueError("discrete laws must share a common support listing")
    pp, qq = p.probs_arr, q.probs_arr
    if np.any((pp > 0) & (qq == 0)) or np.any((qq > 0) & (pp == 0)):
        raise ValueError("laws are not mutually absolutely continuous")
    mask = qq > 0
    ratio = np.zeros_like(pp)
    ratio[mask] = pp[mask] / qq[mask]
    vals = np.where(ratio > 0, spec.f(np.maximum(ratio, 1e-300)), spec.f_at_zero)
    return float(np.sum(qq[mask] * vals[mask]))


def exact_divergence(
    spec: DivergenceSpec,
    p,
    q,
    mc_draws: int = 1_000_000,
    seed: int = 0,
) -> DivergenceEstimate:
    """D_f(P||Q) = E_Q[f(dP/dQ)].

    Exact summation for discrete/Bernoulli/Poisson laws (se = 0); seeded
    Monte Carlo under Q otherwise, with the standard error reported.
    """
    if isinstance(p, DiscreteLaw):
        return DivergenceEstimate(_discrete_divergence(spec, p, q), 0.0)
    if p.family != q.family:
        raise ValueError("mixed families")
    if p.family == "bernoulli":
        law_p = DiscreteLaw((0.0, 1.0), (1 - p.params[0], p.params[0]))
        law_q = DiscreteLaw((0.0, 1.0), (1 - q.params[0], q.params[0]))
        return DivergenceEstimate(_discrete_divergence(spec, law_p, law_q), 0.0)
    if p.family == "poisson":
        # truncated summation far past both rates; tail mass is negligible
        lam = max(p.params[0], q.params[0])
        kmax = int(lam + 20.0 * math.sqrt(lam) + 60)
        ks = np.arange(kmax + 1, dtype=float)
        from scipy.stats import poisson as _pois

        pq = _pois.pmf(ks, q.params[0])
        vals = spec.f(rn_derivative(p, q, ks))
        return DivergenceEstimate(float(np.sum(pq * vals)), 0.0)
    if mc_draws < 100_000:
        raise ValueError("continuous families need mc_draws >= 1e5")
    rng = np.random.default_rng(seed)
    ys = q.sample(rng, mc_draws)
    vals = spec.f(rn_derivative(p, q, ys))
    return DivergenceEstimate(float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(mc_draws)))


def _cvxpy_weighted_g(spec: DivergenceSpec, s, w, cp):
    """sum_i w_i * g(s_i) with g(s) = s*f(1/s) as a DCP-convex expression."""
    name = spec.name
    if name == "KL":
        return w @ (-cp.log(s))
    if name == "Hellinger":
        return w @ (0.5 * (1.0 - 2.0 * cp.sqrt(s) + s))
    if name == "ChiSq":
        # (1-s)^2 / (2s) per atom via quad_over_lin (jointly convex)
        return cp.sum(cp.hstack([w[i] * cp.quad_over_lin(1.0 - s[i], 2.0 * s[i]) for i in range(len(w))]))
    if name == "TV":
        return w @ (0.5 * cp.abs(1.0 - s))
    if name == "JS":
        half = (1.0 + s) / 2.0
        return w @ (0.5 * (cp.rel_entr(s, half) + cp.rel_entr(np.ones(s.shape[0]), half)))
    raise KeyError(name)


def primal_oracle(
    law_P: DiscreteLaw,
    phi,
    spec: DivergenceSpec,
    eta: float,
    direction: str = "upper",
) -> float:
    """Worst-case E_Q[phi] over the divergence ball, solved in the likelihood
    ratio s on the discrete support with a conic solver.

    Independent of the dual path it certifies.  The lower direction negates
    phi and the result.
    """
    import cvxpy as cp

    if eta < 0:
        raise ValueError("eta must be nonnegative")
    if direction not in ("upper", "lower"):
        raise ValueError("direction must be 'upper' or 'lower'")
    w = law_P.probs_arr
    vals = np.asarray([phi(y) for y in law_P.support], dtype=float) if callable(phi) else np.asarray(phi, dtype=float)
    if len(vals) != len(w):
        raise ValueError("phi values must match the support")
    if len(w) > 50:
        raise ValueError("primal oracle is limited to supports of size <= 50")
    sign = 1.0 if direction == "upper" else -1.0
    target = sign * vals
    if eta == 0.0:
        return float(sign * np.dot(w, target))

    s = cp.Variable(len(w), pos=True)
    constraints = [w @ s == 1.0, _cvxpy_weighted_g(spec, s, w, cp) <= eta]
    problem = cp.Problem(cp.Maximize(w @ cp.multiply(s, target)), constraints)
    try:
        problem.solve(solver=cp.CLARABEL)
    except cp.error.SolverError:
        problem.solve(solver=cp.SCS, eps=1e-9, max_iters=200_000)
    if problem.status not in ("optimal", "optimal_inaccurate"):
        raise RuntimeError(f"primal oracle did not converge: status={problem.status}")
    return float(sign * problem.value)


def scm_ground_truth(scm, a: int, x_points, mc_draws: int = 10_000, seed: int = 0):
    """Interventional means theta(a, x) = E[phi(Y) | do(a), x] by Monte Carlo
    over the confounder and outcome noise, with standard errors.

    Returns (theta, se) arrays over x_points; phi defaults to identity via
    ``phi`` keyword on the SCM call sites (outcome itself here).
    """
    if mc_draws < 10_000:
        raise ValueError("need mc_draws >= 1e4 per point")
    X = np.atleast_2d(np.asarray(x_points, dtype=float))
    rng = np.random.default_rng(seed)
    U = rng.standard_normal(mc_draws)  # common random numbers across points
    thetas = np.empty(len(X))
    ses = np.empty(len(X))
    for i, x in enumerate(X):
        xs = np.tile(x, (mc_draws, 1))
        e = scm.latent_propensity(xs, U)
        y = scm.mu(xs) + scm.tau(xs, e) * a + scm.confounder_outcome_coef * U
        thetas[i] = y.mean()
        ses[i] = y.std(ddof=1) / math.sqrt(mc_draws)
    return thetas, ses


def confounded_binary_laws(pu: float, a1_given_u, y1_given_u, a: int):
    """Observational/interventional Bernoulli outcome laws for a binary-U,
    binary-Y SCM, plus the exact propensity of arm ``a``.

    ``a1_given_u`` = (P(A=1|U=0), P(A=1|U=1)); ``y1_given_u`` gives
    P(Y=1|A=a, U=u) for the queried arm.  Everything is an exact sum over U.
    """
    pu0, pu1 = 1.0 - pu, pu
    a1 = np.asarray(a1_given_u, dtype=float)
    pa_u = a1 if a == 1 else 1.0 - a1
    e_a = pu0 * pa_u[0] + pu1 * pa_u[1]
    if e_a <= 0:
        raise ValueError("arm has zero probability")
    w_post = np.array([pu0 * pa_u[0], pu1 * pa_u[1]]) / e_a  # P(U | A=a)
    y1 = np.asarray(y1_given_u, dtype=float)
    p_obs = float(w_post @ y1)
    p_int = float(np.array([pu0, pu1]) @ y1)
    law_obs = DiscreteLaw((0.0, 1.0), (1.0 - p_obs, p_obs))
    law_int = DiscreteLaw((0.0, 1.0), (1.0 - p_int, p_int))
    return law_obs, law_int, float(e_a)
