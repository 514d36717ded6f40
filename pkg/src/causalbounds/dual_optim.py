"""Dual estimation core.

Implements the robust dual objective over (lambda, u) for discrete laws,
the marginal per-arm estimator, and the cross-fitted conditional estimator
with a hand-written dual network, optional debiasing correction, and the
orthogonality probe that checks it numerically.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, asdict

import numpy as np

from .data import Dataset
from .divergences import DivergenceSpec, conjugate_projection
from .network import MLP, Adam, HIDDEN_WIDTH
from .nuisance import (
    PropensityEstimate,
    PseudoOutcomeRegressor,
    fit_propensity,
    fit_pseudo_outcome,
    marginal_propensity,
)

__all__ = [
    "OptimConfig",
    "DualParamsMarginal",
    "DualNetwork",
    "BoundEstimate",
    "ConditionalBoundFit",
    "dual_value_minimize",
    "fit_marginal",
    "fit_conditional",
    "evaluate_bound",
    "debiased_loss",
    "orthogonality_probe",
]

_GOLD = (math.sqrt(5.0) - 1.0) / 2.0
_H_RANGE = 35.0


@dataclass
class OptimConfig:
    lr: float = 5e-4
    weight_decay: float = 1e-4
    epochs: int = 256
    patience: int = 10
    val_frac: float = 0.2
    clip_h: float = 20.0
    barrier_weight: float = 2.0
    barrier_margin: float = 0.01
    batch_size: int = 256

    def to_dict(self):
        return asdict(self)


# ---------------------------------------------------------------------------
# scalar dual program
# ---------------------------------------------------------------------------

def _golden_section(fn, lo, hi, iters):
    # returns the best evaluated point, never an unevaluated midpoint: the
    # objective can be +inf arbitrarily close to the feasibility boundary
    a, b = lo, hi
    c = b - _GOLD * (b - a)
    d = a + _GOLD * (b - a)
    fc, fd = fn(c), fn(d)
    best_x, best_f = (c, fc) if fc <= fd else (d, fd)
    for _ in range(iters):
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - _GOLD * (b - a)
            fc = fn(c)
        else:
            a, c, fc = c, d, fd
            d = a + _GOLD * (b - a)
            fd = fn(d)
        if fc < best_f:
            best_x, best_f = c, fc
        if fd < best_f:
            best_x, best_f = d, fd
    return best_x, best_f


def _empirical_dual_minimize(values, weights, spec: DivergenceSpec, eta: float,
                             outer_iters=90, inner_iters=74):
    """min over (lambda>0, u) of lambda*eta + u + lambda*E[g*((v-u)/lambda)].

    Jointly convex, solved by nested golden-section over (u, log lambda).
    Returns (value, lambda, u).
    """
    v = np.asarray(values, dtype=float)
    w = np.asarray(weights, dtype=float)
    if eta < 0:
        raise ValueError("eta must be nonnegative")
    vmin, vmax = float(v.min()), float(v.max())
    scale = max(vmax - vmin, 1.0)

    def inner(u):
        def obj(h):
            lam = math.exp(h)
            g = spec.conj((v - u) / lam)
            if not np.all(np.isfinite(g)):
                return math.inf
            return lam * eta + u + lam * float(w @ g)

        return _golden_section(obj, -_H_RANGE, _H_RANGE, inner_iters)

    if spec.name == "KL":
        u_lo, u_hi = vmax + 1e-9 * scale, vmax + 50.0 * scale
    else:
        u_lo, u_hi = vmin - 50.0 * scale, vmax + 50.0 * scale
    u_star, _ = _golden_section(lambda u: inner(u)[1], u_lo, u_hi, outer_iters)
    h_star, val = inner(u_star)
    if not math.isfinite(val):
        raise RuntimeError(f"{spec.name}: dual minimization found no feasible direction")
    return val, math.exp(h_star), u_star


def dual_value_minimize(law_P, phi, spec: DivergenceSpec, eta: float):
    """Dual solve of the worst-case expectation on a discrete law.

    Returns (value, lambda, u); certified against the primal oracle in tests.
    """
    support = law_P.support_arr
    vals = np.asarray([phi(y) for y in support], dtype=float) if callable(phi) else np.asarray(phi, dtype=float)
    return _empirical_dual_minimize(vals, law_P.probs_arr, spec, eta)


# ---------------------------------------------------------------------------
# marginal (covariate-free) estimator
# ---------------------------------------------------------------------------

@dataclass
class BoundEstimate:
    value: float
    direction: str
    divergence: str
    diagnostics: dict = field(default_factory=dict)


@dataclass
class DualParamsMarginal:
    """Per-arm scalar duals on the (possibly negated) functional scale."""

    h_by_arm: dict
    u_by_arm: dict

    @property
    def lambdas(self):
        return {a: math.exp(h) for a, h in self.h_by_arm.items()}

    def h(self, a, X):
        return np.full(np.atleast_2d(X).shape[0], self.h_by_arm[a])

    def u(self, a, X):
        return np.full(np.atleast_2d(X).shape[0], self.u_by_arm[a])


def fit_marginal(
    data: Dataset,
    spec: DivergenceSpec,
    direction: str = "upper",
    seed: int = 0,
    eta_override=None,
):
    """Per-arm marginal bound: exact propensity counts, scalar dual solve,
    conjugate pseudo-outcomes, arm means.  The lower direction runs the
    identical pipeline on -phi and negates."""
    if direction not in ("upper", "lower"):
        raise ValueError("direction must be 'upper' or 'lower'")
    sign = 1.0 if direction == "upper" else -1.0
    e_hat = marginal_propensity(data)
    phi_all = data.phi_values() * sign
    h_by_arm, u_by_arm, bounds = {}, {}, {}
    for a in (0, 1):
        v = phi_all[data.A == a]
        eta = _resolve_eta_scalar(eta_override, a, spec, e_hat[a])
        val, lam, u = _empirical_dual_minimize(v, np.full(len(v), 1.0 / len(v)), spec, eta)
        t = np.minimum((v - u) / lam, conjugate_projection(spec))
        m = float(np.mean(spec.conj(t)))
        theta = lam * (eta + m) + u
        h_by_arm[a] = math.log(lam)
        u_by_arm[a] = u
        bounds[a] = BoundEstimate(
            value=sign * theta,
            direction=direction,
            divergence=spec.name,
            diagnostics={
                "eta": eta,
                "lambda": lam,
                "u": u,
                "m": m,
                "e_hat": e_hat[a],
                "n_arm": int(len(v)),
                "solver_value": val,
            },
        )
    return DualParamsMarginal(h_by_arm, u_by_arm), bounds


def _resolve_eta_scalar(eta_override, a, spec, e_a):
    if eta_override is None:
        return float(spec.radius_fn(e_a))
    if isinstance(eta_override, dict):
        return float(eta_override[a])
    return float(eta_override)


# ---------------------------------------------------------------------------
# dual network
# ---------------------------------------------------------------------------

class DualNetwork:
    """Two-head dual parameterization: h(a, x) (clipped) and u(a, x)."""

    def __init__(self, dim_x: int, rng: np.random.Generator, clip_h: float = 20.0, u_init: float = 0.0):
        dims = [dim_x + 1, HIDDEN_WIDTH, HIDDEN_WIDTH, 1]
        self.dim_x = dim_x
        self.clip_h = clip_h
        self.net_h = MLP(dims, rng)
        self.net_u = MLP(dims, rng, out_bias=u_init)

    @staticmethod
    def _feat(a, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        a_col = np.full(X.shape[0], float(a)) if np.isscalar(a) else np.asarray(a, dtype=float)
        return np.column_stack([a_col, X])

    def h(self, a, X):
        raw = self.net_h.predict(self._feat(a, X))
        return np.clip(raw, -self.clip_h, self.clip_h)

    def u(self, a, X):
        return self.net_u.predict(self._feat(a, X))

    def to_dict(self):
        return {
            "format": "causalbounds-dual-network/1",
            "dim_x": self.dim_x,
            "clip_h": self.clip_h,
            "net_h": self.net_h.to_dict(),
            "net_u": self.net_u.to_dict(),
        }

    @classmethod
    def from_dict(cls, d):
        net = cls(d["dim_x"], np.random.default_rng(0), clip_h=d["clip_h"])
        net.net_h = MLP.from_dict(d["net_h"])
        net.net_u = MLP.from_dict(d["net_u"])
        return net


def _softplus(v):
    return np.logaddexp(0.0, v)


def _sigmoid(v):
    return 0.5 * (1.0 + np.tanh(0.5 * v))


def _loss_pieces(spec, phi, h_obs, u_obs, eta_obs, barrier_weight, margin):
    """Per-sample loss value plus partials w.r.t. (h_obs, u_obs).

    The conjugate is projected onto its finite domain and a lambda-scaled
    softplus barrier replaces the +inf branch; the barrier slope (in t)
    exceeds 1 so that driving u down through the boundary is never a
    descent direction of the surrogate.
    """
    lam = np.exp(h_obs)
    t = (phi - u_obs) / lam
    tcap = conjugate_projection(spec)
    tproj = np.minimum(t, tcap)
    active = t < tcap
    g = spec.conj(tproj)
    gp = spec.conj_deriv(tproj) * active
    # quadratic-beyond-boundary barrier: lam * B(t) diverges as lam -> 0
    # whenever phi > u, matching the +inf branch it stands in for
    v = (t - tcap) / margin + 1.0
    sp = _softplus(v)
    bval = barrier_weight * margin * sp**2
    bslope = 2.0 * barrier_weight * sp * _sigmoid(v)
    loss = lam * (eta_obs + g + bval) + u_obs
    dh = lam * (eta_obs + g + bval) + lam * (gp + bslope) * (-t)
    du = 1.0 - gp - bslope
    return loss, dh, du


def _debias_terms(spec, e1, h0, h1, A):
    """Correction sum_a e_a * exp(h_a) * B'(e_a) * (1{A=a} - e_a) and its
    partials w.r.t. (h0, h1)."""
    e0 = 1.0 - e1
    c0 = e0 * np.exp(h0) * spec.radius_deriv_fn(e0) * ((A == 0) - e0)
    c1 = e1 * np.exp(h1) * spec.radius_deriv_fn(e1) * ((A == 1) - e1)
    return c0 + c1, c0, c1


def _network_risk(spec, net: DualNetwork, X, A, phi, e1, debias, eta_override=None):
    """Projected (barrier-free) empirical risk; used for validation/probes."""
    h0 = net.h(0, X)
    h1 = net.h(1, X)
    h_obs = np.where(A == 1, h1, h0)
    u_obs = np.empty(len(A))
    for a in (0, 1):
        mask = A == a
        if mask.any():
            u_obs[mask] = net.u(a, X[mask])
    e_obs = np.where(A == 1, e1, 1.0 - e1)
    eta_obs = _eta_values(spec, eta_override, e_obs, A, X)
    lam = np.exp(h_obs)
    t = np.minimum((phi - u_obs) / lam, conjugate_projection(spec))
    base = lam * (eta_obs + spec.conj(t)) + u_obs
    if debias:
        corr, _, _ = _debias_terms(spec, e1, h0, h1, A)
        base = base + corr
    return float(base.mean())


def _eta_values(spec, eta_override, e_obs, A, X):
    if eta_override is None:
        return spec.radius_fn(e_obs)
    if callable(eta_override):
        return np.asarray(eta_override(A, X), dtype=float)
    return np.full(len(A), float(eta_override))


def _val_risk(spec, net: DualNetwork, X, A, phi, e1, debias, eta_override, bw, margin):
    """Barrier-augmented risk used for early stopping: stays finite on
    infeasible duals yet penalizes them, unlike the projected risk which
    rewards infeasibility."""
    h0 = net.h(0, X)
    h1 = net.h(1, X)
    h_obs = np.where(A == 1, h1, h0)
    u_obs = np.empty(len(A))
    for a in (0, 1):
        mask = A == a
        if mask.any():
            u_obs[mask] = net.u(a, X[mask])
    e_obs = np.where(A == 1, e1, 1.0 - e1)
    eta_obs = _eta_values(spec, eta_override, e_obs, A, X)
    loss, _, _ = _loss_pieces(spec, phi, h_obs, u_obs, eta_obs, bw, margin)
    if debias:
        corr, _, _ = _debias_terms(spec, e1, h0, h1, A)
        loss = loss + corr
    return float(loss.mean())


def _train_network(spec, X, A, phi, e1, cfg: OptimConfig, debias, seed, eta_override=None):
    n, d = X.shape
    rng = np.random.default_rng(seed)
    # start (essentially) feasible: t = phi - u0 <= 0 for most rows, with
    # the barrier mopping up the heavy-tail stragglers
    u0 = float(np.quantile(phi, 0.95))
    if spec.name == "KL":
        u0 = float(phi.max() + 0.05 * phi.std() + 1e-6)
    net = DualNetwork(d, rng, clip_h=cfg.clip_h, u_init=u0)

    n_val = max(1, int(round(cfg.val_frac * n))) if n >= 10 else 0
    perm = rng.permutation(n)
    val_idx, tr_idx = perm[:n_val], perm[n_val:]
    Xt, At, pt, et = X[tr_idx], A[tr_idx], phi[tr_idx], e1[tr_idx]
    e_obs_t = np.where(At == 1, et, 1.0 - et)
    eta_t = _eta_values(spec, eta_override, e_obs_t, At, Xt)

    params = net.net_h.params() + net.net_u.params()
    opt = Adam(params, lr=cfg.lr, weight_decay=cfg.weight_decay)
    n_h = len(net.net_h.params())

    best_val, best_flat, patience_left = math.inf, None, cfg.patience
    history = []
    nt = len(tr_idx)
    bw = cfg.barrier_weight
    for epoch in range(cfg.epochs):
        order = rng.permutation(nt)
        for start in range(0, nt, cfg.batch_size):
            bidx = order[start : start + cfg.batch_size]
            nb = len(bidx)
            Xb, Ab, pb, eb, etab = Xt[bidx], At[bidx], pt[bidx], et[bidx], eta_t[bidx]
            f0, f1 = DualNetwork._feat(0, Xb), DualNetwork._feat(1, Xb)
            h0_raw, c0 = net.net_h.forward(f0)
            h1_raw, c1 = net.net_h.forward(f1)
            m0 = np.abs(h0_raw) < cfg.clip_h
            m1 = np.abs(h1_raw) < cfg.clip_h
            h0 = np.clip(h0_raw, -cfg.clip_h, cfg.clip_h)
            h1 = np.clip(h1_raw, -cfg.clip_h, cfg.clip_h)
            fA = DualNetwork._feat(Ab, Xb)
            uA, cu = net.net_u.forward(fA)
            h_obs = np.where(Ab == 1, h1, h0)
            _, dh_obs, du = _loss_pieces(spec, pb, h_obs, uA, etab, bw, cfg.barrier_margin)
            dh0 = np.where(Ab == 0, dh_obs, 0.0)
            dh1 = np.where(Ab == 1, dh_obs, 0.0)
            if debias:
                _, dc0, dc1 = _debias_terms(spec, eb, h0, h1, Ab)
                dh0 = dh0 + dc0
                dh1 = dh1 + dc1
            dW0, db0 = net.net_h.backward(c0, dh0 * m0 / nb)
            dW1, db1 = net.net_h.backward(c1, dh1 * m1 / nb)
            gh = [a + b for a, b in zip(dW0 + db0, dW1 + db1)]
            dWu, dbu = net.net_u.backward(cu, du / nb)
            opt.step(params, gh + dWu + dbu)
        if n_val:
            val = _val_risk(spec, net, X[val_idx], A[val_idx], phi[val_idx], e1[val_idx],
                            debias, eta_override, bw, cfg.barrier_margin)
        else:
            val = _val_risk(spec, net, Xt, At, pt, et, debias, eta_override,
                            bw, cfg.barrier_margin)
        history.append(val)
        if val < best_val - 1e-12:
            best_val = val
            best_flat = (net.net_h.flat(), net.net_u.flat())
            patience_left = cfg.patience
        else:
            patience_left -= 1
            if patience_left <= 0:
                break
    if best_flat is not None:
        net.net_h.set_flat(best_flat[0])
        net.net_u.set_flat(best_flat[1])
    return net, {"val_risk": history, "best_val": best_val, "epochs_run": len(history)}


# ---------------------------------------------------------------------------
# cross-fitted conditional estimator
# ---------------------------------------------------------------------------

@dataclass
class FoldFit:
    network: DualNetwork
    propensity: PropensityEstimate
    pseudo: PseudoOutcomeRegressor
    history: dict


@dataclass
class ConditionalBoundFit:
    spec: DivergenceSpec
    direction: str
    folds: list
    hull_lo: np.ndarray
    hull_hi: np.ndarray
    eta_override: object = None
    seed: int = 0
    debias: bool = True

    @property
    def sign(self):
        return 1.0 if self.direction == "upper" else -1.0

    def evaluate(self, a, X, eta_override="fit"):
        """Per-point bound at arm ``a``: fold average of
        lambda_k * (eta_k + m_k) + u_k, sign-adjusted for direction."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        override = self.eta_override if eta_override == "fit" else eta_override
        fold_vals = []
        diag = {"lambda": [], "u": [], "eta": [], "m": []}
        for ff in self.folds:
            h = ff.network.h(a, X)
            lam = np.exp(h)
            u = ff.network.u(a, X)
            e = ff.propensity.predict(X, a)
            if override is None:
                eta = self.spec.radius_fn(e)
            elif callable(override):
                eta = np.asarray(override(np.full(X.shape[0], a), X), dtype=float)
            else:
                eta = np.full(X.shape[0], float(override))
            m = ff.pseudo.predict(a, X)
            fold_vals.append(lam * (eta + m) + u)
            diag["lambda"].append(lam)
            diag["u"].append(u)
            diag["eta"].append(eta)
            diag["m"].append(m)
        fold_vals = np.asarray(fold_vals)
        values = self.sign * fold_vals.mean(axis=0)
        return {
            "value": values,
            "fold_values": self.sign * fold_vals,
            "diagnostics": diag,
        }

    def to_dict(self):
        return {
            "format": "causalbounds-conditional-fit/1",
            "divergence": self.spec.name,
            "direction": self.direction,
            "seed": self.seed,
            "debias": self.debias,
            "networks": [ff.network.to_dict() for ff in self.folds],
        }


def fit_conditional(
    data: Dataset,
    spec: DivergenceSpec,
    direction: str = "upper",
    K: int = 2,
    optim: OptimConfig | None = None,
    debias: bool = True,
    seed: int = 0,
    propensity_method: str = "boosted",
    propensity=None,
    prop_hyper=None,
    pseudo_hyper=None,
    eta_override=None,
    clip: float = 0.05,
) -> ConditionalBoundFit:
    """Cross-fit estimation: per fold, propensity on the complement,
    dual network and pseudo-outcome regressor on the fold itself."""
    if direction not in ("upper", "lower"):
        raise ValueError("direction must be 'upper' or 'lower'")
    if data.n < 200:
        raise ValueError("need n >= 200 for cross-fitting")
    if K < 2:
        raise ValueError("need K >= 2 folds")
    cfg = optim or OptimConfig()
    sign = 1.0 if direction == "upper" else -1.0
    rng = np.random.default_rng(seed)
    perm = rng.permutation(data.n)
    fold_idx = np.array_split(perm, K)
    phi_all = data.phi_values() * sign

    folds = []
    for k, idx in enumerate(fold_idx):
        A_k = data.A[idx]
        if len(np.unique(A_k)) < 2:
            raise ValueError(f"fold {k} has a single treatment arm; resplit with a different seed")
        if propensity is not None:
            prop_k = propensity
        else:
            rest = np.concatenate([f for j, f in enumerate(fold_idx) if j != k])
            prop_k = fit_propensity(data.subset(rest), method=propensity_method,
                                    hyper=prop_hyper, clip=clip, seed=seed + 101 * k)
        X_k = data.X[idx]
        e1_k = prop_k.predict(X_k, 1)
        net, history = _train_network(spec, X_k, A_k, phi_all[idx], e1_k, cfg, debias,
                                      seed=seed + 31 * k + 1, eta_override=eta_override)
        pseudo = fit_pseudo_outcome(data.subset(idx), net, spec, hyper=pseudo_hyper,
                                    seed=seed + 7 * k, phi_values=phi_all[idx])
        folds.append(FoldFit(network=net, propensity=prop_k, pseudo=pseudo, history=history))
    hull_lo = data.X.min(axis=0) if data.d else np.zeros(0)
    hull_hi = data.X.max(axis=0) if data.d else np.zeros(0)
    return ConditionalBoundFit(spec=spec, direction=direction, folds=folds,
                               hull_lo=hull_lo, hull_hi=hull_hi,
                               eta_override=eta_override, seed=seed, debias=debias)


def evaluate_bound(fitted: ConditionalBoundFit, query) -> BoundEstimate:
    """Evaluate a fitted conditional bound at a single (a, x) query."""
    a, x = query
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if fitted.hull_lo.size and (np.any(x < fitted.hull_lo) or np.any(x > fitted.hull_hi)):
        warnings.warn("query point lies outside the training covariate hull", stacklevel=2)
    res = fitted.evaluate(a, x)
    return BoundEstimate(
        value=float(res["value"][0]),
        direction=fitted.direction,
        divergence=fitted.spec.name,
        diagnostics={
            "fold_values": [float(v[0]) for v in res["fold_values"]],
            "lambda": [float(v[0]) for v in res["diagnostics"]["lambda"]],
            "u": [float(v[0]) for v in res["diagnostics"]["u"]],
            "eta": [float(v[0]) for v in res["diagnostics"]["eta"]],
            "m": [float(v[0]) for v in res["diagnostics"]["m"]],
        },
    )


# ---------------------------------------------------------------------------
# debiased loss and the orthogonality probe
# ---------------------------------------------------------------------------

def debiased_loss(row, duals, prop, spec: DivergenceSpec, direction: str = "upper",
                  phi=None) -> float:
    """Single-row debiased loss: base dual loss plus the mean-zero
    propensity-error correction."""
    x, a, y = row
    X = np.atleast_2d(np.asarray(x, dtype=float))
    A = np.array([int(a)])
    val = float(y) if phi is None else float(phi(np.asarray([y]))[0])
    sign = 1.0 if direction == "upper" else -1.0
    e1 = prop.predict(X, 1)
    return _network_risk(spec, _DualsAdapter(duals), X, A, np.array([sign * val]), e1, debias=True)


class _DualsAdapter:
    """Duck-types marginal or network duals to the h/u interface."""

    def __init__(self, duals):
        self._d = duals

    def h(self, a, X):
        return np.asarray(self._d.h(a, X), dtype=float)

    def u(self, a, X):
        return np.asarray(self._d.u(a, X), dtype=float)


def orthogonality_probe(
    data: Dataset,
    duals,
    prop,
    spec: DivergenceSpec,
    perturbation,
    delta: float = 1e-3,
    direction: str = "upper",
):
    """Central finite-difference directional derivatives of the empirical
    debiased and plain risks along the propensity path e + t*s at t = 0."""
    sign = 1.0 if direction == "upper" else -1.0
    phi = data.phi_values() * sign
    X, A = data.X, data.A
    e1 = np.asarray(prop.predict(X, 1), dtype=float)
    s = np.asarray(perturbation(X), dtype=float) if callable(perturbation) else np.asarray(perturbation, dtype=float)
    adapter = _DualsAdapter(duals)

    def risks(t):
        e1_t = e1 + t * s
        if np.any(e1_t <= 0.0) or np.any(e1_t >= 1.0):
            raise ValueError("perturbed propensities leave (0, 1)")
        plain = _network_risk(spec, adapter, X, A, phi, e1_t, debias=False)
        db = _network_risk(spec, adapter, X, A, phi, e1_t, debias=True)
        return plain, db

    p_plus, d_plus = risks(delta)
    p_minus, d_minus = risks(-delta)
    return (d_plus - d_minus) / (2.0 * delta), (p_plus - p_minus) / (2.0 * delta)
