"""Closed-form f-divergence machinery.

Each divergence bundles its generator f, the propensity-driven radius
B(e) = e*f(1/e) + (1-e)*f(0), and the convex conjugate g*(t) of
g(s) = s*f(1/s), together with the analytic derivatives needed by the
dual optimizer.  All callables are numpy-vectorized.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.special import xlogy

__all__ = [
    "DivergenceSpec",
    "ExtendedReal",
    "POS_INF",
    "DIVERGENCES",
    "get_spec",
    "radius",
    "radius_derivative",
    "radius_generic",
    "conjugate",
    "conjugate_value",
    "conjugate_derivative",
    "conjugate_projection",
    "policy_radius",
    "ipm_mmd_bound",
]


@dataclass(frozen=True)
class ExtendedReal:
    """A real number or +infinity; +inf marks an infeasible dual direction."""

    value: float

    @property
    def finite(self) -> bool:
        return math.isfinite(self.value)

    def unwrap(self) -> float:
        if not self.finite:
            raise OverflowError("extended real is +inf")
        return self.value


POS_INF = ExtendedReal(math.inf)


@dataclass(frozen=True)
class DivergenceSpec:
    """A named f-generator with radius map and conjugate machinery.

    ``conj`` returns IEEE +inf outside the finite domain; ``conj_deriv``
    is only valid strictly inside it.  ``domain_closed`` says whether the
    conjugate is finite at ``conjugate_domain_sup`` itself.
    """

    name: str
    f: Callable[[np.ndarray], np.ndarray]
    f_at_zero: float
    radius_fn: Callable[[np.ndarray], np.ndarray]
    radius_deriv_fn: Callable[[np.ndarray], np.ndarray]
    conj: Callable[[np.ndarray], np.ndarray]
    conj_deriv: Callable[[np.ndarray], np.ndarray]
    conjugate_domain_sup: float
    domain_closed: bool

    def __repr__(self) -> str:  # keep reports compact
        return f"DivergenceSpec({self.name})"


def _kl_f(t):
    return xlogy(t, t)


def _kl_conj(t):
    t = np.asarray(t, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(t < 0.0, -1.0 - np.log(-t), np.inf)
    return out


def _kl_conj_deriv(t):
    return -1.0 / np.asarray(t, dtype=float)


def _hell_f(t):
    return 0.5 * (np.sqrt(t) - 1.0) ** 2


def _hell_conj(t):
    t = np.asarray(t, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(t < 0.5, t / (1.0 - 2.0 * t), np.inf)
    return out


def _hell_conj_deriv(t):
    return 1.0 / (1.0 - 2.0 * np.asarray(t, dtype=float)) ** 2


def _chi2_f(t):
    return 0.5 * (t - 1.0) ** 2


def _chi2_conj(t):
    t = np.asarray(t, dtype=float)
    with np.errstate(invalid="ignore"):
        out = np.where(t <= 0.5, 1.0 - np.sqrt(np.maximum(1.0 - 2.0 * t, 0.0)), np.inf)
    return out


def _chi2_conj_deriv(t):
    return 1.0 / np.sqrt(1.0 - 2.0 * np.asarray(t, dtype=float))


def _tv_f(t):
    return 0.5 * np.abs(t - 1.0)


def _tv_conj(t):
    t = np.asarray(t, dtype=float)
    out = np.where(t <= -0.5, -0.5, np.where(t <= 0.5, t, np.inf))
    return out


def _tv_conj_deriv(t):
    # subgradient choice at the kink t = -1/2: take the right limit
    t = np.asarray(t, dtype=float)
    return np.where(t <= -0.5, 0.0, 1.0)


def _js_f(t):
    t = np.asarray(t, dtype=float)
    return 0.5 * (xlogy(t, t) - (t + 1.0) * np.log((t + 1.0) / 2.0))


_LOG4 = math.log(4.0)
_JS_SUP = 0.5 * math.log(2.0)


def _js_radius(e):
    e = np.asarray(e, dtype=float)
    return 0.5 * (_LOG4 + xlogy(e, e) - (1.0 + e) * np.log1p(e))


def _js_conj(t):
    t = np.asarray(t, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(t < _JS_SUP, -0.5 * np.log(2.0 - np.exp(2.0 * np.minimum(t, _JS_SUP))), np.inf)
    return out


def _js_conj_deriv(t):
    e2t = np.exp(2.0 * np.asarray(t, dtype=float))
    return e2t / (2.0 - e2t)


DIVERGENCES: dict[str, DivergenceSpec] = {
    "KL": DivergenceSpec(
        name="KL",
        f=_kl_f,
        f_at_zero=0.0,
        radius_fn=lambda e: -np.log(e),
        radius_deriv_fn=lambda e: -1.0 / np.asarray(e, dtype=float),
        conj=_kl_conj,
        conj_deriv=_kl_conj_deriv,
        conjugate_domain_sup=0.0,
        domain_closed=False,
    ),
    "Hellinger": DivergenceSpec(
        name="Hellinger",
        f=_hell_f,
        f_at_zero=0.5,
        radius_fn=lambda e: 1.0 - np.sqrt(e),
        radius_deriv_fn=lambda e: -0.5 / np.sqrt(e),
        conj=_hell_conj,
        conj_deriv=_hell_conj_deriv,
        conjugate_domain_sup=0.5,
        domain_closed=False,
    ),
    "ChiSq": DivergenceSpec(
        name="ChiSq",
        f=_chi2_f,
        f_at_zero=0.5,
        radius_fn=lambda e: (1.0 - np.asarray(e, dtype=float)) / (2.0 * np.asarray(e, dtype=float)),
        radius_deriv_fn=lambda e: -1.0 / (2.0 * np.asarray(e, dtype=float) ** 2),
        conj=_chi2_conj,
        conj_deriv=_chi2_conj_deriv,
        conjugate_domain_sup=0.5,
        domain_closed=True,
    ),
    "TV": DivergenceSpec(
        name="TV",
        f=_tv_f,
        f_at_zero=0.5,
        radius_fn=lambda e: 1.0 - np.asarray(e, dtype=float),
        radius_deriv_fn=lambda e: np.full_like(np.asarray(e, dtype=float), -1.0),
        conj=_tv_conj,
        conj_deriv=_tv_conj_deriv,
        conjugate_domain_sup=0.5,
        domain_closed=True,
    ),
    "JS": DivergenceSpec(
        name="JS",
        f=_js_f,
        f_at_zero=0.5 * math.log(2.0),
        radius_fn=_js_radius,
        radius_deriv_fn=lambda e: 0.5 * np.log(np.asarray(e, dtype=float) / (1.0 + np.asarray(e, dtype=float))),
        conj=_js_conj,
        conj_deriv=_js_conj_deriv,
        conjugate_domain_sup=_JS_SUP,
        domain_closed=False,
    ),
}

ALL_NAMES = tuple(DIVERGENCES)


def get_spec(name: str) -> DivergenceSpec:
    try:
        return DIVERGENCES[name]
    except KeyError:
        raise KeyError(f"unknown divergence {name!r}; choose from {sorted(DIVERGENCES)}") from None


def _check_propensity(e: float) -> float:
    e = float(e)
    if not (0.0 < e <= 1.0):
        raise ValueError(f"propensity must lie in (0, 1], got {e}")
    return e


def radius(spec: DivergenceSpec, e: float) -> float:
    """Divergence radius B(e) driven by a propensity score e in (0, 1]."""
    e = _check_propensity(e)
    return float(spec.radius_fn(e))


def radius_derivative(spec: DivergenceSpec, e: float) -> float:
    """dB/de, needed by the error-correction term of the debiased loss."""
    e = _check_propensity(e)
    return float(spec.radius_deriv_fn(e))


def radius_generic(spec: DivergenceSpec, e: float) -> float:
    """Radius via the generic formula e*f(1/e) + (1-e)*f(0); cross-check only."""
    e = _check_propensity(e)
    return float(e * spec.f(1.0 / e) + (1.0 - e) * spec.f_at_zero)


def conjugate(spec: DivergenceSpec, t: float) -> ExtendedReal:
    """Convex conjugate g*(t); POS_INF signals an infeasible dual direction."""
    return ExtendedReal(float(spec.conj(float(t))))


def conjugate_value(spec: DivergenceSpec, t: float) -> float:
    """Like :func:`conjugate` but returns IEEE +inf; for numeric callers."""
    return float(spec.conj(float(t)))


def conjugate_derivative(spec: DivergenceSpec, t: float) -> float:
    """d/dt g*(t), valid strictly inside the finite domain."""
    t = float(t)
    if t >= spec.conjugate_domain_sup:
        raise ValueError(
            f"{spec.name}: conjugate derivative undefined at t={t} "
            f"(domain sup {spec.conjugate_domain_sup})"
        )
    return float(spec.conj_deriv(t))


_PROJ_CACHE: dict = {}


def conjugate_projection(spec: DivergenceSpec, slope_cap: float = 1e3) -> float:
    """Largest t with (g*)'(t) <= slope_cap, found by bisection.

    Estimators project conjugate arguments here rather than at the raw
    domain sup, where g* (and its slope) can blow up numerically.
    """
    key = (spec.name, slope_cap)
    if key in _PROJ_CACHE:
        return _PROJ_CACHE[key]
    dom = spec.conjugate_domain_sup
    lo = dom - 8.0
    while float(spec.conj_deriv(lo)) > slope_cap:
        lo -= 8.0
    hi = dom - 1e-12
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        d_hi = float(spec.conj_deriv(hi))
    if math.isfinite(d_hi) and d_hi <= slope_cap:
        _PROJ_CACHE[key] = hi
        return hi
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
            d = float(spec.conj_deriv(mid))
        if math.isfinite(d) and d <= slope_cap:
            lo = mid
        else:
            hi = mid
    _PROJ_CACHE[key] = lo
    return lo


def policy_radius(policy, propensity, spec: DivergenceSpec, sample) -> float:
    """Monte Carlo estimate of E_X[sum_a policy(a|X) * B(e_a(X))].

    ``policy`` is a callable (a, X) -> weights; ``propensity`` is either a
    fitted estimate with ``predict(X, a)`` or a callable (a, X) -> e.
    With policy(a|x) = e_a(x) this is the global divergence bound.
    """
    X = sample.X if hasattr(sample, "X") else np.asarray(sample)
    if len(X) == 0:
        raise ValueError("empty sample")
    total = np.zeros(len(X))
    weight_sum = np.zeros(len(X))
    for a in (0, 1):
        w = np.asarray(policy(a, X), dtype=float)
        if hasattr(propensity, "predict"):
            e = np.asarray(propensity.predict(X, a), dtype=float)
        else:
            e = np.asarray(propensity(a, X), dtype=float)
        if np.any(e <= 0.0) or np.any(e > 1.0):
            raise ValueError("propensities must lie in (0, 1]")
        weight_sum += w
        total += w * spec.radius_fn(e)
    if not np.allclose(weight_sum, 1.0, atol=1e-8):
        raise ValueError("policy weights must sum to 1 over arms")
    return float(np.mean(total))


def ipm_mmd_bound(e: float, scale: float, kind: str = "IPM") -> float:
    """Bound 2*scale*min{1-e, sqrt(-log(e)/2)} on the IPM (scale = sup-norm
    bound) or MMD (scale = sqrt of the kernel sup)."""
    e = _check_propensity(e)
    if kind not in ("IPM", "MMD"):
        raise ValueError(f"kind must be IPM or MMD, got {kind!r}")
    if scale <= 0:
        raise ValueError("scale must be positive")
    return 2.0 * scale * min(1.0 - e, math.sqrt(max(-0.5 * math.log(e), 0.0)))
