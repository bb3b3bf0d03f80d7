import numpy as np
import pytest

from aclnet import network
from aclnet.builder import NetworkConfig, build, init_weights
from aclnet.errors import ShapeError, StateError
from oracles import NetworkLoss, rel_error

TINY = NetworkConfig(width_multiplier=1 / 32, num_classes=3)


def generic_point(graph, seed, dtype=np.float64):
    """Init weights, then move BN affine terms and the head bias off their init values."""
    rng = np.random.default_rng(seed)
    w = init_weights(graph, seed, dtype)
    for k, v in w.params.items():
        if k.endswith("gamma"):
            v[:] = rng.uniform(0.5, 1.5, v.shape)
        elif k.endswith(("beta", "bias")):
            v[:] = rng.normal(0, 0.5, v.shape)
    return w


@pytest.mark.parametrize("conv_type", ["SC", "DWSC"])
def test_gradient_spot_check(conv_type):
    g = build(TINY.replace(conv_type=conv_type), 1600)
    w = generic_point(g, 0)
    rng = np.random.default_rng(1)
    x = rng.standard_normal((3, 1600))
    oracle = NetworkLoss(g, w, x, np.eye(3))
    grads, _ = oracle.analytic()
    for name in ("Conv1.weight", "Conv3.bn.beta", "Conv12.weight", "Conv12.bias"):
        idx = rng.choice(w.params[name].size, min(4, w.params[name].size), replace=False)
        fd = oracle.fd_entries(name, idx)
        assert rel_error(grads[name].ravel()[idx], fd) < 1e-6, name


def test_input_gradient():
    g = build(TINY, 800)
    w = generic_point(g, 2)
    x = np.random.default_rng(3).standard_normal((2, 800))
    oracle = NetworkLoss(g, w, x, np.eye(3)[:2])
    _, dx = oracle.analytic()
    assert dx.shape == x.shape
    base = oracle.run()[0]
    h = 1e-6
    for i in (0, 400, 799):
        xp = x.copy()
        xp[1, i] += h
        xm = x.copy()
        xm[1, i] -= h
        fd = (oracle.run(x=xp)[0] - oracle.run(x=xm)[0]) / (2 * h)
        assert abs(fd - dx[1, i]) <= 1e-5 * max(1.0, abs(fd)), (i, fd, dx[1, i], base)


def test_running_stats_update_only_in_train():
    g = build(TINY, 1600)
    w = init_weights(g)
    x = np.random.default_rng(0).standard_normal((2, 1600))
    before = {k: v.copy() for k, v in w.buffers.items()}
    network.forward(g, w, x, "infer")
    assert all(np.array_equal(before[k], v) for k, v in w.buffers.items())
    network.forward(g, w, x, "train", np.random.default_rng(0), update_stats=False)
    assert all(np.array_equal(before[k], v) for k, v in w.buffers.items())
    network.forward(g, w, x, "train", np.random.default_rng(0))
    assert not np.array_equal(before["Conv1.bn.running_mean"], w.buffers["Conv1.bn.running_mean"])
    assert w.buffers["Conv1.bn.running_mean"].dtype == np.float32


def test_train_mode_needs_rng_only_with_dropout():
    g = build(TINY, 1600)
    w = init_weights(g)
    with pytest.raises((ValueError, TypeError)):
        network.forward(g, w, np.zeros((2, 1600)), "train")
    g0 = build(TINY.replace(dropout_p=0.0), 1600)
    network.forward(g0, init_weights(g0), np.random.default_rng(0).standard_normal((2, 1600)), "train")


def test_one_graph_serves_any_length():
    g = build(TINY, 160)
    w = init_weights(g)
    rng = np.random.default_rng(0)
    for n in (160, 999, 16000, 33333):
        p = network.predict(g, w, rng.standard_normal(n))
        assert p.shape == (3,) and abs(p.sum() - 1) < 1e-6
    with pytest.raises(ShapeError):
        network.predict(g, w, np.zeros(159))
    with pytest.raises(ShapeError):
        network.predict(g, w, np.zeros((1, 2, 160)))


def test_batched_equals_single():
    g = build(TINY, 1600)
    w = init_weights(g, 4)
    x = np.random.default_rng(1).standard_normal((3, 1600)).astype(np.float32)
    _, pb, _ = network.forward(g, w, x)
    for i in range(3):
        _, pi, _ = network.forward(g, w, x[i])
        np.testing.assert_allclose(pi[0], pb[i], rtol=1e-5, atol=1e-7)


def test_backward_needs_tape():
    with pytest.raises(StateError):
        network.backward(None, np.zeros((1, 3)))


def test_check_finite_names_layer():
    g = build(TINY, 1600)
    w = init_weights(g)
    w.params["Conv7.dw.weight"][:] = np.inf
    with np.errstate(all="ignore"), pytest.raises(FloatingPointError, match="Conv7"):
        network.forward(g, w, np.random.default_rng(0).standard_normal(1600), check_finite=True)
