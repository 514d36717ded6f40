"""End-to-end acceptance suite.

Each test exercises one advertised guarantee of the library at its stated
tolerance, against independently computed references (closed forms, the
convex-programming primal oracle, or interventional Monte Carlo).
"""

from itertools import product

import numpy as np
import pytest
from scipy.stats import binomtest

from causalbounds.boosting import BoostHyper, GradientBoostedTrees
from causalbounds.cli import _audit_duality, _audit_divergence_bound
from causalbounds.data import Dataset, indicator_phi
from causalbounds.divergences import (
    DIVERGENCES,
    conjugate_projection,
    conjugate_value,
    get_spec,
    radius,
)
from causalbounds.dual_optim import (
    _loss_pieces,
    dual_value_minimize,
    fit_conditional,
    fit_marginal,
    orthogonality_probe,
)
from causalbounds.network import MLP
from causalbounds.nuisance import fit_propensity
from causalbounds.oracles import DiscreteLaw, scm_ground_truth
from causalbounds.simulate import (
    SyntheticSCM,
    evaluate_run,
    generate,
    inject_propensity_noise,
)

ALL = sorted(DIVERGENCES)
SCM = SyntheticSCM(d=5, seed=0)


# -- 1: divergence bound audit ----------------------------------------------

def test_acceptance_01_divergence_bound_audit():
    grid = [0.05, 0.25, 0.5, 0.75, 0.95]
    out = _audit_divergence_bound(grid, tamper=False)
    assert out["scms"] >= 500
    assert out["max_violation"] <= 1e-9
    assert out["violations"] == []


# -- 2: duality gap -----------------------------------------------------------

def test_acceptance_02_duality_gap():
    out = _audit_duality(100, seed=0)
    assert out["instances"] >= 100
    assert out["max_gap"] <= 1e-4
    # closed-form two-point chi-square instance
    law = DiscreteLaw((0.0, 1.0), (0.5, 0.5))
    val, _, _ = dual_value_minimize(law, lambda y: y, get_spec("ChiSq"), 0.5)
    assert val == pytest.approx(0.8535534, abs=1e-4)


# -- 3: conjugate golden values ----------------------------------------------

def test_acceptance_03_conjugate_goldens():
    cases = [
        ("ChiSq", 0.0, 0.0),
        ("ChiSq", 0.5, 1.0),
        ("TV", 0.25, 0.25),
        ("TV", -1.0, -0.5),
        ("KL", -1.0, -1.0),
        ("JS", 0.0, 0.0),
    ]
    for name, t, want in cases:
        assert abs(conjugate_value(get_spec(name), t) - want) <= 1e-10, (name, t)


# -- 4: gradient checks --------------------------------------------------------

def _loss_probes(spec, rng, n_probes):
    tcap = conjugate_projection(spec)
    t = np.array([])
    while len(t) < n_probes:
        cand = tcap - rng.normal(0.3, 0.8, 3 * n_probes)
        keep = np.abs(cand - tcap) > 5e-3
        if spec.name == "TV":
            keep &= np.abs(cand + 0.5) > 5e-3
        t = np.concatenate([t, cand[keep]])
    t = t[:n_probes]
    h = rng.normal(0.0, 0.5, n_probes)
    u = rng.normal(1.0, 1.0, n_probes)
    phi = u + t * np.exp(h)
    eta = rng.uniform(0.01, 1.0, n_probes)
    return phi, h, u, eta


def test_acceptance_04_loss_gradient_checks():
    eps = 1e-6
    bw, margin = 2.0, 0.01
    for i, name in enumerate(ALL):
        spec = get_spec(name)
        rng = np.random.default_rng(100 + i)
        phi, h, u, eta = _loss_probes(spec, rng, 100)
        _, dh, du = _loss_pieces(spec, phi, h, u, eta, bw, margin)
        lp = _loss_pieces(spec, phi, h + eps, u, eta, bw, margin)[0]
        lm = _loss_pieces(spec, phi, h - eps, u, eta, bw, margin)[0]
        fd_h = (lp - lm) / (2 * eps)
        lp = _loss_pieces(spec, phi, h, u + eps, eta, bw, margin)[0]
        lm = _loss_pieces(spec, phi, h, u - eps, eta, bw, margin)[0]
        fd_u = (lp - lm) / (2 * eps)
        rel_h = np.abs(fd_h - dh) / np.maximum(np.maximum(np.abs(fd_h), np.abs(dh)), 1e-3)
        rel_u = np.abs(fd_u - du) / np.maximum(np.maximum(np.abs(fd_u), np.abs(du)), 1e-3)
        assert float(rel_h.max()) < 1e-4, name
        assert float(rel_u.max()) < 1e-4, name


def test_acceptance_04_network_gradient_check():
    rng = np.random.default_rng(7)
    net = MLP([6, 16, 16, 1], rng, zero_last=False)
    net.set_flat(0.4 * rng.standard_normal(net.flat().size))  # move off ReLU kinks
    X = rng.normal(size=(32, 6))
    dout = rng.normal(size=32)
    _, cache = net.forward(X)
    dW, db = net.backward(cache, dout)
    grads = dW + db
    params = net.params()
    eps = 1e-6
    probe_rng = np.random.default_rng(8)
    worst = 0.0
    for _ in range(100):
        i = int(probe_rng.integers(len(params)))
        j = int(probe_rng.integers(params[i].size))
        orig = params[i].flat[j]
        params[i].flat[j] = orig + eps
        up = float(net.predict(X) @ dout)
        params[i].flat[j] = orig - eps
        dn = float(net.predict(X) @ dout)
        params[i].flat[j] = orig
        fd = (up - dn) / (2 * eps)
        ana = grads[i].flat[j]
        worst = max(worst, abs(fd - ana) / max(abs(fd), abs(ana), 1e-6))
    assert worst < 1e-4


# -- 5: orthogonality ----------------------------------------------------------

class _AnalyticDuals:
    """Smooth fixed duals with a lambda contrast between arms, so the plain
    risk is genuinely propensity-sensitive."""

    def __init__(self, u0):
        self.u0 = u0

    def h(self, a, X):
        return 0.8 * float(a) - 0.4 + 0.1 * np.tanh(X[:, 0])

    def u(self, a, X):
        return np.full(X.shape[0], self.u0 + 0.3 * float(a))


def test_acceptance_05_orthogonality():
    data = generate(SCM, 100_000, seed=31)
    prop = SCM.oracle_propensity_estimate()
    duals = _AnalyticDuals(float(np.quantile(data.Y, 0.95)))
    rng = np.random.default_rng(41)
    for name in ALL:
        spec = get_spec(name)
        for _ in range(10):
            w = rng.normal(0.0, 0.5, SCM.d)
            b = rng.normal()
            sigmoid = lambda z: 0.5 * (1.0 + np.tanh(0.5 * z))
            pert = lambda X: 0.02 + 0.03 * sigmoid(X @ w + b)
            d_db, d_plain = orthogonality_probe(data, duals, prop, spec, pert)
            assert abs(d_plain) > 1e-3, name
            assert abs(d_db) < 0.05 * abs(d_plain), (name, d_db, d_plain)


# -- 6 & 7: coverage and observational-mean inclusion --------------------------

@pytest.fixture(scope="module")
def coverage_run():
    data = generate(SCM, 5000, seed=11)
    eval_X = np.random.default_rng(21).uniform(-2.0, 2.0, (200, SCM.d))
    bounds = {}
    for name in ALL:
        spec = get_spec(name)
        lo = fit_conditional(data, spec, "lower", seed=5).evaluate(1, eval_X)["value"]
        up = fit_conditional(data, spec, "upper", seed=5).evaluate(1, eval_X)["value"]
        bounds[name] = (lo, up)
    truth, _ = scm_ground_truth(SCM, 1, eval_X, mc_draws=10_000, seed=13)
    arm1 = data.arm(1)
    reg = GradientBoostedTrees(
        loss="squared", hyper=BoostHyper(n_rounds=200, learning_rate=0.05), seed=17
    ).fit(arm1.X, arm1.Y)
    return bounds, truth, reg.predict(eval_X)


def test_acceptance_06_coverage(coverage_run):
    bounds, truth, _ = coverage_run
    # widest-envelope aggregate (k = number of divergences)
    lo = np.min([bounds[n][0] for n in ALL], axis=0)
    up = np.max([bounds[n][1] for n in ALL], axis=0)
    coverage = float(np.mean((truth >= lo) & (truth <= up)))
    assert coverage >= 0.95


def test_acceptance_07_observational_mean_inclusion(coverage_run):
    bounds, _, obs_mean = coverage_run
    for name in ALL:
        lo, up = bounds[name]
        frac = float(np.mean((obs_mean >= lo) & (obs_mean <= up)))
        assert frac >= 0.99, (name, frac)


# -- 8: radius collapse ---------------------------------------------------------

def test_acceptance_08_radius_collapse():
    # bounded functional: with an (essentially) vanishing radius the worst
    # case over the ball collapses onto the observational arm mean
    data = generate(SCM, 100_000, seed=51, phi=indicator_phi(1.0))
    spec = get_spec("TV")
    eta = radius(spec, 0.999)
    _, up = fit_marginal(data, spec, "upper", eta_override=eta)
    phi = data.phi_values()
    sd = float(np.std(phi))
    for a in (0, 1):
        arm_mean = float(phi[data.A == a].mean())
        assert abs(up[a].value - arm_mean) < 0.01 * sd, a


# -- 9: debiasing benefit under propensity noise -------------------------------

def _penalized_widths(data, prop, spec, eval_X, truth, seed):
    out = {}
    for label, debias in (("debiased", True), ("plain", False)):
        lo = fit_conditional(
            data, spec, "lower", propensity=prop, debias=debias, seed=seed
        ).evaluate(1, eval_X)["value"]
        up = fit_conditional(
            data, spec, "upper", propensity=prop, debias=debias, seed=seed
        ).evaluate(1, eval_X)["value"]
        out[label] = evaluate_run(truth, list(zip(lo, up))).p_width
    return out


def test_acceptance_09_debiasing_benefit():
    spec = get_spec("ChiSq")
    eval_X = np.random.default_rng(61).uniform(-2.0, 2.0, (50, SCM.d))
    truth, _ = scm_ground_truth(SCM, 1, eval_X, mc_draws=10_000, seed=62)
    reps = 20
    stats = {}
    for n in (4000, 16000):
        pairs = []
        for r in range(reps):
            seed = 100 + 1000 * r
            data = generate(SCM, n, seed=seed)
            prop = inject_propensity_noise(
                fit_propensity(data, seed=seed), n, seed=seed
            )
            pw = _penalized_widths(data, prop, spec, eval_X, truth, seed)
            pairs.append((pw["debiased"], pw["plain"]))
        deb = np.array([p[0] for p in pairs])
        pla = np.array([p[1] for p in pairs])
        wins = int(np.sum(pla - deb > 0))
        ties = int(np.sum(pla == deb))
        pval = float(binomtest(wins, reps - ties, alternative="greater").pvalue)
        stats[n] = {
            "mean_debiased": float(deb.mean()),
            "mean_plain": float(pla.mean()),
            "wins": wins,
            "pval": pval,
        }
    for n, s in stats.items():
        assert s["mean_debiased"] <= s["mean_plain"] and s["pval"] < 0.05, stats


# -- 10: order-statistics aggregation characterization -------------------------

def test_acceptance_10_kagg_characterization():
    values = (1, 2, 3, 4, 5)
    for m in range(1, 6):
        for lst in product(values, repeat=m):
            desc = sorted(lst, reverse=True)
            asc = sorted(lst)
            for k in range(1, m + 1):
                kth_lo = desc[k - 1]  # k-th largest: the aggregate lower bound
                kth_up = asc[k - 1]  # k-th smallest: the aggregate upper bound
                for theta in values:
                    n_le = sum(v <= theta for v in lst)
                    n_ge = sum(v >= theta for v in lst)
                    assert (kth_lo <= theta) == (n_le >= m - k + 1)
                    assert (kth_up >= theta) == (n_ge >= m - k + 1)


# -- 11: marginal-case rate shape ----------------------------------------------

def _binary_confounded(n, seed):
    rng = np.random.default_rng(seed)
    U = (rng.random(n) < 0.4).astype(int)
    A = (rng.random(n) < np.where(U == 1, 0.8, 0.3)).astype(int)
    py = np.where(U == 1, 0.75, 0.35) * (0.5 + 0.5 * A)
    Y = (rng.random(n) < py).astype(float)
    return Dataset(np.zeros((n, 0)), A, Y)


def test_acceptance_11_marginal_rate_shape():
    spec = get_spec("KL")
    # population observational law of arm 1 and its exact worst-case value
    p_obs = (0.6 * 0.3 * 0.35 + 0.4 * 0.8 * 0.75) / 0.5
    law = DiscreteLaw((0.0, 1.0), (1.0 - p_obs, p_obs))
    ref, _, _ = dual_value_minimize(law, lambda y: y, spec, radius(spec, 0.5))
    ns = (1_000, 10_000, 100_000)
    errs = []
    for n in ns:
        per_seed = []
        for s in range(10):
            data = _binary_confounded(n, seed=1000 * s + n)
            _, up = fit_marginal(data, spec, "upper")
            per_seed.append(abs(up[1].value - ref))
        errs.append(float(np.mean(per_seed)))
    slope = float(np.polyfit(np.log(ns), np.log(errs), 1)[0])
    assert errs[0] > errs[-1]
    assert slope <= -0.2, (errs, slope)
