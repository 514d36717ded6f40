import math

import numpy as np
import pytest

from causalbounds.data import Dataset
from causalbounds.divergences import conjugate_projection, get_spec
from causalbounds.dual_optim import DualParamsMarginal
from causalbounds.nuisance import (
    DEFAULT_CLIP,
    LogisticModel,
    fit_propensity,
    fit_pseudo_outcome,
    marginal_propensity,
)


def test_marginal_propensity_counts_and_errors():
    data = Dataset(np.zeros((5, 0)), [1, 0, 1, 1, 0], np.arange(5.0))
    e = marginal_propensity(data)
    assert e[1] == pytest.approx(0.6) and e[0] == pytest.approx(0.4)
    one_arm = Dataset(np.zeros((3, 0)), [1, 1, 1], np.arange(3.0))
    with pytest.raises(ValueError, match="positivity"):
        marginal_propensity(one_arm)


def test_fit_propensity_independence_near_half():
    rng = np.random.default_rng(0)
    n = 10_000
    X = rng.uniform(-2, 2, (n, 3))
    A = (rng.random(n) < 0.5).astype(int)
    data = Dataset(X, A, rng.normal(size=n))
    for method in ("logistic", "boosted"):
        prop = fit_propensity(data, method=method, seed=1)
        e1 = prop.predict(X, 1)
        assert float(np.mean(np.abs(e1 - 0.5))) < 0.02, method
        assert float(np.max(np.abs(e1 - 0.5))) < 0.1, method
        assert np.allclose(prop.predict(X, 0) + e1, 1.0)


def test_fit_propensity_deterministic_assignment_clips():
    rng = np.random.default_rng(2)
    n = 4000
    X = rng.uniform(-2, 2, (n, 2))
    A = (X[:, 0] > 0).astype(int)
    data = Dataset(X, A, rng.normal(size=n))
    prop = fit_propensity(data, method="boosted", seed=3)
    e1 = prop.predict(X, 1)
    assert np.all((e1 >= DEFAULT_CLIP) & (e1 <= 1 - DEFAULT_CLIP))
    far = np.abs(X[:, 0]) > 0.5
    # far from the boundary the fit should sit at the clip levels
    agree = np.mean((e1[far] > 0.5) == (X[far, 0] > 0))
    assert agree > 0.95


def test_fit_propensity_guards():
    rng = np.random.default_rng(4)
    data = Dataset(rng.normal(size=(20, 1)), np.ones(20, dtype=int), rng.normal(size=20))
    with pytest.raises(ValueError, match="both treatment arms"):
        fit_propensity(data)
    both = Dataset(rng.normal(size=(20, 1)), [0, 1] * 10, rng.normal(size=20))
    with pytest.raises(ValueError, match="unknown method"):
        fit_propensity(both, method="forest")


def test_fit_propensity_constant_covariates():
    data = Dataset(np.ones((40, 2)), [0, 1] * 20, np.zeros(40))
    prop = fit_propensity(data, method="boosted")
    assert np.allclose(prop.predict(np.ones((3, 2)), 1), 0.5)


def test_logistic_model_recovers_coefficients():
    rng = np.random.default_rng(5)
    X = rng.normal(size=(20_000, 2))
    z = 0.5 + 1.2 * X[:, 0] - 0.7 * X[:, 1]
    y = (rng.random(20_000) < 0.5 * (1 + np.tanh(0.5 * z))).astype(float)
    model = LogisticModel().fit(X, y)
    assert np.allclose(model.coef_, [0.5, 1.2, -0.7], atol=0.08)


def test_fit_pseudo_outcome_marginal_matches_manual_mean():
    spec = get_spec("ChiSq")
    y = np.array([0.0, 1.0, 0.5, 2.0, 1.5, 0.2])
    data = Dataset(np.zeros((6, 0)), [0, 1, 0, 1, 1, 0], y)
    duals = DualParamsMarginal(h_by_arm={0: 0.0, 1: math.log(2.0)}, u_by_arm={0: 3.0, 1: 2.5})
    reg = fit_pseudo_outcome(data, duals, spec)
    for a, lam, u in ((0, 1.0, 3.0), (1, 2.0, 2.5)):
        mask = data.A == a
        t = np.minimum((y[mask] - u) / lam, conjugate_projection(spec))
        want = float(np.mean(spec.conj(t)))
        assert reg.predict(a, np.zeros((1, 0)))[0] == pytest.approx(want)


def test_fit_pseudo_outcome_empty_arm_errors():
    spec = get_spec("TV")
    data = Dataset(np.zeros((4, 0)), [1, 1, 1, 1], np.arange(4.0))
    duals = DualParamsMarginal(h_by_arm={0: 0.0, 1: 0.0}, u_by_arm={0: 5.0, 1: 5.0})
    with pytest.raises(ValueError, match="arm 0 empty"):
        fit_pseudo_outcome(data, duals, spec)
