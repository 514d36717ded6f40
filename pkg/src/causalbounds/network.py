"""Small perceptron with hand-written reverse-mode gradients, plus Adam.

The dual heads h(a, x) and u(a, x) are each a two-hidden-layer MLP with
64 ReLU units; gradients are checked against central differences in the
test suite, so the backward pass must match the forward exactly.
"""

from __future__ import annotations

import numpy as np

__all__ = ["MLP", "Adam", "HIDDEN_WIDTH"]

HIDDEN_WIDTH = 64


class MLP:
    """dims = [in, h1, ..., 1]; ReLU between layers, linear output."""

    def __init__(self, dims, rng: np.random.Generator, out_bias: float = 0.0, zero_last: bool = True):
        self.dims = list(dims)
        self.W = []
        self.b = []
        for i in range(len(dims) - 1):
            fan_in = dims[i]
            W = rng.standard_normal((dims[i], dims[i + 1])) * np.sqrt(2.0 / max(fan_in, 1))
            b = np.zeros(dims[i + 1])
            self.W.append(W)
            self.b.append(b)
        if zero_last:
            self.W[-1][:] = 0.0
        self.b[-1][:] = out_bias

    # -- forward / backward ------------------------------------------------
    def forward(self, X):
        """Returns (out, cache); out has shape (n,)."""
        acts = [np.asarray(X, dtype=float)]
        for i in range(len(self.W) - 1):
            z = acts[-1] @ self.W[i] + self.b[i]
            acts.append(np.maximum(z, 0.0))
        out = acts[-1] @ self.W[-1] + self.b[-1]
        return out[:, 0], acts

    def predict(self, X):
        return self.forward(X)[0]

    def backward(self, cache, dout):
        """dout shape (n,); returns grads as ([dW...], [db...])."""
        acts = cache
        delta = np.asarray(dout, dtype=float)[:, None]
        dW = [None] * len(self.W)
        db = [None] * len(self.b)
        for i in range(len(self.W) - 1, -1, -1):
            dW[i] = acts[i].T @ delta
            db[i] = delta.sum(axis=0)
            if i > 0:
                delta = (delta @ self.W[i].T) * (acts[i] > 0.0)
        return dW, db

    # -- parameter plumbing --------------------------------------------------
    def params(self):
        return self.W + self.b

    def set_params(self, params):
        k = len(self.W)
        for i in range(k):
            self.W[i] = params[i].copy()
            self.b[i] = params[k + i].copy()

    def flat(self):
        return np.concatenate([p.ravel() for p in self.params()])

    def set_flat(self, vec):
        out = []
        pos = 0
        for p in self.params():
            out.append(np.asarray(vec[pos : pos + p.size]).reshape(p.shape))
            pos += p.size
        self.set_params(out)

    def to_dict(self):
        return {"dims": self.dims, "weights": self.flat().tolist()}

    @classmethod
    def from_dict(cls, d):
        net = cls(d["dims"], np.random.default_rng(0))
        net.set_flat(np.asarray(d["weights"], dtype=float))
        return net


class Adam:
    """Adam with L2 weight decay folded into the gradient."""

    def __init__(self, params, lr=5e-4, weight_decay=1e-4, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = lr
        self.weight_decay = weight_decay
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, params, grads):
        self.t += 1
        b1t = 1.0 - self.beta1**self.t
        b2t = 1.0 - self.beta2**self.t
        for i, (p, g) in enumerate(zip(params, grads)):
            g = g + self.weight_decay * p
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g
            p -= self.lr * (self.m[i] / b1t) / (np.sqrt(self.v[i] / b2t) + self.eps)
