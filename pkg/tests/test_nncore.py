import io

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from samo.errors import ConfigError
from samo.nncore import (AdamState, DenseNet, adam_step, backward, forward, param_count,
                         read_net, write_net)


def scalar_forward(net, x):
    """Layer arithmetic one scalar at a time."""
    h = list(map(float, x))
    for li, (w, b) in enumerate(net.layers):
        out = []
        for j in range(w.shape[1]):
            z = float(b[j])
            for i in range(w.shape[0]):
                z += h[i] * float(w[i, j])
            if li < len(net.layers) - 1:
                z = np.tanh(z) if net.activation == "tanh" else max(z, 0.0)
            out.append(z)
        h = out
    return np.array(h)


def finite_diff(net, x, upstream, eps=1e-5):
    g = np.zeros_like(net.params)
    base = net.params.copy()
    for i in range(len(base)):
        net.params[i] = base[i] + eps
        up = float(upstream @ net.forward(x))
        net.params[i] = base[i] - eps
        dn = float(upstream @ net.forward(x))
        net.params[i] = base[i]
        g[i] = (up - dn) / (2 * eps)
    return g


def test_param_count_formula():
    net = DenseNet((3, 5, 2))
    assert len(net.params) == param_count((3, 5, 2)) == 4 * 5 + 6 * 2


def test_zero_weights_give_bias():
    net = DenseNet((3, 2))
    net.layers[0][1][...] = [0.5, -2.0]
    np.testing.assert_array_equal(forward(net, np.array([1.0, 2.0, 3.0])), [0.5, -2.0])


def test_identity_layer():
    net = DenseNet((2, 2))
    net.layers[0][0][...] = np.eye(2)
    np.testing.assert_array_equal(net.forward(np.array([1.0, -1.0])), [1.0, -1.0])


@pytest.mark.parametrize("act", ["tanh", "relu"])
def test_forward_matches_scalar_oracle(act):
    rng = np.random.default_rng(3)
    net = DenseNet.init((4, 6, 5, 3), act, rng)
    x = rng.normal(size=4)
    np.testing.assert_allclose(net.forward(x), scalar_forward(net, x), rtol=1e-12, atol=1e-14)


def test_forward_dimension_mismatch():
    net = DenseNet((3, 2))
    with pytest.raises(ConfigError):
        net.forward(np.zeros(4))


def test_linear_backward_by_hand():
    net = DenseNet((1, 1), params=np.array([2.0, 0.5]))
    gp, gx = backward(net, np.array([3.0]), np.array([1.0]))
    np.testing.assert_array_equal(gp, [3.0, 1.0])
    np.testing.assert_array_equal(gx, [2.0])


def test_zero_upstream_zero_grads():
    rng = np.random.default_rng(0)
    net = DenseNet.init((3, 4, 2), "tanh", rng)
    gp, gx = backward(net, rng.normal(size=3), np.zeros(2))
    assert not gp.any() and not gx.any()


def test_backward_shape_mismatch():
    net = DenseNet((3, 2))
    with pytest.raises(ConfigError):
        backward(net, np.zeros(3), np.zeros(3))


@pytest.mark.parametrize("act", ["tanh", "relu"])
def test_backward_matches_finite_differences(act):
    rng = np.random.default_rng(11)
    net = DenseNet.init((3, 7, 4, 2), act, rng)
    x = rng.normal(size=3)
    up = rng.normal(size=2)
    gp, _ = backward(net, x, up)
    fd = finite_diff(net, x, up)
    np.testing.assert_allclose(gp, fd, rtol=1e-4, atol=1e-8)


def test_input_gradient_matches_finite_differences():
    rng = np.random.default_rng(5)
    net = DenseNet.init((4, 8, 3), "tanh", rng)
    x = rng.normal(size=4)
    up = rng.normal(size=3)
    _, gx = backward(net, x, up)
    fd = np.array([(up @ net.forward(x + e) - up @ net.forward(x - e)) / 2e-5
                   for e in np.eye(4) * 1e-5])
    np.testing.assert_allclose(gx, fd, rtol=1e-5, atol=1e-9)


def test_batch_backward_sums_items():
    rng = np.random.default_rng(2)
    net = DenseNet.init((3, 5, 2), "relu", rng)
    xs = rng.normal(size=(4, 3))
    ups = rng.normal(size=(4, 2))
    gp, _ = backward(net, xs, ups)
    total = sum(backward(net, x, u)[0] for x, u in zip(xs, ups))
    np.testing.assert_allclose(gp, total, rtol=1e-12, atol=1e-13)


def test_forward_backward_are_pure():
    rng = np.random.default_rng(4)
    net = DenseNet.init((3, 5, 2), "tanh", rng)
    before = net.params.copy()
    x = rng.normal(size=3)
    net.forward(x)
    backward(net, x, np.ones(2))
    np.testing.assert_array_equal(net.params, before)


def test_determinism_bit_identical():
    a = DenseNet.init((3, 5, 2), "tanh", np.random.default_rng(9))
    b = DenseNet.init((3, 5, 2), "tanh", np.random.default_rng(9))
    x = np.linspace(-1, 1, 3)
    assert a.forward(x).tobytes() == b.forward(x).tobytes()
    assert backward(a, x, np.ones(2))[0].tobytes() == backward(b, x, np.ones(2))[0].tobytes()


def test_adam_first_step_magnitude():
    p = np.zeros(1)
    adam_step(p, np.array([5.0]), AdamState.like(p), 1e-3)
    assert p[0] < 0
    assert abs(abs(p[0]) - 1e-3) < 1e-5


def test_adam_zero_grad_no_change():
    p = np.array([1.0, -2.0])
    adam_step(p, np.zeros(2), AdamState.like(p), 1e-3)
    np.testing.assert_array_equal(p, [1.0, -2.0])


def test_adam_matches_scalar_recurrence():
    lr, g, b1, b2, eps = 1e-2, 0.7, 0.9, 0.999, 1e-8
    th, m, v = 0.3, 0.0, 0.0
    for t in (1, 2):
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        th -= lr * (m / (1 - b1 ** t)) / (np.sqrt(v / (1 - b2 ** t)) + eps)
    p = np.array([0.3])
    st_ = AdamState.like(p)
    adam_step(p, np.array([g]), st_, lr)
    adam_step(p, np.array([g]), st_, lr)
    assert p[0] == pytest.approx(th, rel=1e-14)
    assert st_.t == 2


def test_adam_rejects_nonfinite():
    p = np.zeros(2)
    st_ = AdamState.like(p)
    with pytest.raises(FloatingPointError):
        adam_step(p, np.array([np.nan, 0.0]), st_, 1e-3)
    assert st_.t == 0 and not p.any()


def test_adam_rejects_bad_lr_and_shape():
    p = np.zeros(2)
    with pytest.raises(ConfigError):
        adam_step(p, np.zeros(2), AdamState.like(p), 0.0)
    with pytest.raises(ConfigError):
        adam_step(p, np.zeros(3), AdamState.like(p), 1e-3)


def test_fragment_round_trip_and_layout():
    net = DenseNet.init((3, 4, 2), "tanh", np.random.default_rng(0))
    buf = io.BytesIO()
    write_net(buf, net)
    raw = buf.getvalue()
    assert raw[:4] == (3).to_bytes(4, "little")
    assert raw[4:16] == b"".join(n.to_bytes(4, "little") for n in (3, 4, 2))
    back = read_net(io.BytesIO(raw), "tanh")
    assert back.layer_sizes == net.layer_sizes
    assert back.params.tobytes() == net.params.tobytes()
    with pytest.raises(ConfigError):
        read_net(io.BytesIO(raw[:-3]), "tanh")


@settings(max_examples=40, deadline=None)
@given(st.lists(st.integers(1, 6), min_size=2, max_size=4), st.integers(0, 2**31 - 1),
       st.sampled_from(["tanh", "relu"]))
def test_property_shapes_and_finiteness(sizes, seed, act):
    rng = np.random.default_rng(seed)
    net = DenseNet.init(sizes, act, rng)
    assert len(net.params) == param_count(sizes)
    x = rng.normal(size=sizes[0])
    y = net.forward(x)
    assert y.shape == (sizes[-1],) and np.all(np.isfinite(y))
    gp, gx = backward(net, x, np.ones(sizes[-1]))
    assert gp.shape == net.params.shape and gx.shape == x.shape


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31 - 1), st.integers(1, 20))
def test_property_adam_counter_increases(seed, n):
    rng = np.random.default_rng(seed)
    p = rng.normal(size=5)
    st_ = AdamState.like(p)
    for i in range(n):
        adam_step(p, rng.normal(size=5), st_, 1e-3)
        assert st_.t == i + 1
    assert np.all(np.isfinite(st_.m)) and np.all(np.isfinite(st_.v))
