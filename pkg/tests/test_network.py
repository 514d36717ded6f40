import numpy as np

from causalbounds.network import MLP, Adam


def _objective(net, X, dout):
    # scalar objective sum(out * dout); its parameter gradient is exactly
    # what backward(cache, dout) returns
    out, _ = net.forward(X)
    return float(out @ dout)


def test_backward_matches_central_differences():
    rng = np.random.default_rng(0)
    net = MLP([4, 8, 8, 1], rng, zero_last=False)
    # zero-init biases put ReLU pre-activations exactly on the kink, where
    # central differences straddle the subgradient; randomize all parameters
    net.set_flat(0.4 * rng.standard_normal(net.flat().size))
    X = rng.normal(size=(16, 4))
    dout = rng.normal(size=16)
    out, cache = net.forward(X)
    dW, db = net.backward(cache, dout)
    grads = dW + db
    params = net.params()
    eps = 1e-6
    probe_rng = np.random.default_rng(1)
    worst = 0.0
    for _ in range(120):
        i = int(probe_rng.integers(len(params)))
        p = params[i]
        j = int(probe_rng.integers(p.size))
        orig = p.flat[j]
        p.flat[j] = orig + eps
        up = _objective(net, X, dout)
        p.flat[j] = orig - eps
        dn = _objective(net, X, dout)
        p.flat[j] = orig
        fd = (up - dn) / (2 * eps)
        ana = grads[i].flat[j]
        worst = max(worst, abs(fd - ana) / max(abs(fd), abs(ana), 1e-6))
    assert worst < 1e-4


def test_flat_round_trip_and_serialization():
    rng = np.random.default_rng(2)
    net = MLP([3, 8, 1], rng, zero_last=False)
    X = rng.normal(size=(10, 3))
    ref = net.predict(X)
    vec = net.flat()
    net.set_flat(np.zeros_like(vec))
    assert np.allclose(net.predict(X), 0.0)
    net.set_flat(vec)
    assert np.allclose(net.predict(X), ref)
    back = MLP.from_dict(net.to_dict())
    assert np.allclose(back.predict(X), ref)


def test_out_bias_initialization():
    rng = np.random.default_rng(3)
    net = MLP([2, 8, 1], rng, out_bias=4.5)  # zero_last leaves only the bias
    assert np.allclose(net.predict(rng.normal(size=(5, 2))), 4.5)


def test_adam_minimizes_quadratic():
    target = np.array([1.0, -2.0, 0.5])
    p = np.zeros(3)
    opt = Adam([p], lr=0.05, weight_decay=0.0)
    for _ in range(2000):
        opt.step([p], [2.0 * (p - target)])
    assert np.allclose(p, target, atol=1e-3)
