"""Histogram gradient boosting with shallow trees, written on numpy.

Supports logistic (binary) and squared-error objectives with Newton leaf
values, shrinkage, and row subsampling.  Trees are depth-limited (<= 3);
splits are searched over quantile bins per feature.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = ["BoostHyper", "GradientBoostedTrees"]


@dataclass(frozen=True)
class BoostHyper:
    n_rounds: int = 300
    learning_rate: float = 0.005
    max_depth: int = 3
    subsample: float = 0.8
    n_bins: int = 64
    reg_lambda: float = 1.0
    min_child_weight: float = 1.0


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


class _Node:
    __slots__ = ("feature", "threshold_bin", "left", "right", "value")

    def __init__(self, value=None, feature=None, threshold_bin=None, left=None, right=None):
        self.value = value
        self.feature = feature
        self.threshold_bin = threshold_bin
        self.left = left
        self.right = right

    def to_dict(self):
        if self.value is not None:
            return {"value": self.value}
        return {
            "feature": self.feature,
            "bin": self.threshold_bin,
            "left": self.left.to_dict(),
            "right": self.right.to_dict(),
        }

    @classmethod
    def from_dict(cls, d):
        if "value" in d:
            return cls(value=d["value"])
        return cls(
            feature=d["feature"],
            threshold_bin=d["bin"],
            left=cls.from_dict(d["left"]),
            right=cls.from_dict(d["right"]),
        )


class GradientBoostedTrees:
    """loss: 'logistic' for binary targets, 'squared' for regression."""

    def __init__(self, loss: str = "squared", hyper: BoostHyper | None = None, seed: int = 0):
        if loss not in ("logistic", "squared"):
            raise ValueError(f"unknown loss {loss!r}")
        self.loss = loss
        self.hyper = hyper or BoostHyper()
        self.seed = seed
        self.trees_: list[_Node] = []
        self.bin_edges_: list[np.ndarray] = []
        self.base_score_: float = 0.0
        self.train_losses_: list[float] = []

    # -- binning ---------------------------------------------------------
    def _fit_bins(self, X):
        nb = self.hyper.n_bins
        self.bin_edges_ = []
        for j in range(X.shape[1]):
            qs = np.quantile(X[:, j], np.linspace(0, 1, nb + 1)[1:-1])
            self.bin_edges_.append(np.unique(qs))

    def _bin(self, X):
        n, d = X.shape
        out = np.empty((n, d), dtype=np.int32)
        for j in range(d):
            out[:, j] = np.searchsorted(self.bin_edges_[j], X[:, j], side="right")
        return out

    # -- tree growing ----------------------------------------------------
    def _grow(self, bins, g, h, idx, depth):
        lam = self.hyper.reg_lambda
        G, H = g[idx].sum(), h[idx].sum()
        if depth >= self.hyper.max_depth or len(idx) < 2:
            return _Node(value=-G / (H + lam))
        best_gain, best = 1e-12, None
        parent = G * G / (H + lam)
        for j in range(bins.shape[1]):
            nb = len(self.bin_edges_[j]) + 1
            if nb < 2:
                continue
            b = bins[idx, j]
            Gb = np.bincount(b, weights=g[idx], minlength=nb)
            Hb = np.bincount(b, weights=h[idx], minlength=nb)
            GL = np.cumsum(Gb)[:-1]
            HL = np.cumsum(Hb)[:-1]
            GR, HR = G - GL, H - HL
            ok = (HL >= self.hyper.min_child_weight) & (HR >= self.hyper.min_child_weight)
            if not ok.any():
                continue
            gains = np.where(ok, GL**2 / (HL + lam) + GR**2 / (HR + lam) - parent, -np.inf)
            b_star = int(np.argmax(gains))
            if gains[b_star] > best_gain:
                best_gain, best = gains[b_star], (j, b_star)
        if best is None:
            return _Node(value=-G / (H + lam))
        j, b_star = best
        mask = bins[idx, j] <= b_star
        left = self._grow(bins, g, h, idx[mask], depth + 1)
        right = self._grow(bins, g, h, idx[~mask], depth + 1)
        return _Node(feature=j, threshold_bin=b_star, left=left, right=right)

    def _tree_predict(self, node, bins, idx, out):
        if node.value is not None:
            out[idx] = node.value
            return
        mask = bins[idx, node.feature] <= node.threshold_bin
        self._tree_predict(node.left, bins, idx[mask], out)
        self._tree_predict(node.right, bins, idx[~mask], out)

    def _predict_tree(self, node, bins):
        out = np.empty(bins.shape[0])
        self._tree_predict(node, bins, np.arange(bins.shape[0]), out)
        return out

    # -- training --------------------------------------------------------
    def _grad_hess(self, F, y):
        if self.loss == "logistic":
            p = _sigmoid(F)
            return p - y, np.maximum(p * (1.0 - p), 1e-9)
        return F - y, np.ones_like(F)

    def _loss_value(self, F, y):
        if self.loss == "logistic":
            return float(np.mean(np.logaddexp(0.0, F) - y * F))
        return float(0.5 * np.mean((F - y) ** 2))

    def fit(self, X, y):
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=float)
        if X.ndim != 2:
            raise ValueError("X must be 2-D")
        n = len(y)
        rng = np.random.default_rng(self.seed)
        if self.loss == "logistic":
            p0 = min(max(y.mean(), 1e-6), 1 - 1e-6)
            self.base_score_ = math.log(p0 / (1.0 - p0))
        else:
            self.base_score_ = float(y.mean())
        self.trees_ = []
        self.train_losses_ = []
        if X.shape[1] == 0:
            self.train_losses_.append(self._loss_value(np.full(n, self.base_score_), y))
            return self
        self._fit_bins(X)
        bins = self._bin(X)
        F = np.full(n, self.base_score_)
        for _ in range(self.hyper.n_rounds):
            g, h = self._grad_hess(F, y)
            if self.hyper.subsample < 1.0:
                m = max(1, int(round(self.hyper.subsample * n)))
                idx = rng.choice(n, size=m, replace=False)
            else:
                idx = np.arange(n)
            tree = self._grow(bins, g, h, idx, depth=0)
            self.trees_.append(tree)
            F += self.hyper.learning_rate * self._predict_tree(tree, bins)
            self.train_losses_.append(self._loss_value(F, y))
        return self

    # -- inference -------------------------------------------------------
    def predict_raw(self, X):
        X = np.asarray(X, dtype=float)
        F = np.full(X.shape[0], self.base_score_)
        if not self.trees_ or X.shape[1] == 0:
            return F
        bins = self._bin(X)
        for tree in self.trees_:
            F += self.hyper.learning_rate * self._predict_tree(tree, bins)
        return F

    def predict(self, X):
        F = self.predict_raw(X)
        return _sigmoid(F) if self.loss == "logistic" else F

    # -- serialization ---------------------------------------------------
    def to_dict(self):
        return {
            "loss": self.loss,
            "hyper": self.hyper.__dict__,
            "seed": self.seed,
            "base_score": self.base_score_,
            "bin_edges": [e.tolist() for e in self.bin_edges_],
            "trees": [t.to_dict() for t in self.trees_],
        }

    @classmethod
    def from_dict(cls, d):
        model = cls(loss=d["loss"], hyper=BoostHyper(**d["hyper"]), seed=d["seed"])
        model.base_score_ = d["base_score"]
        model.bin_edges_ = [np.asarray(e, dtype=float) for e in d["bin_edges"]]
        model.trees_ = [_Node.from_dict(t) for t in d["trees"]]
        return model
