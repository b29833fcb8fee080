import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cloudgan.tensor import (
    BatchNorm, ConcatInput, Conv3D, Dense, Flatten, LeakyReLU, Network, NonFiniteError, ReLU,
    Reshape, ShapeError, Sigmoid, Tanh, conv3d_forward, evaluate, finite_diff_gradients,
    from_text, gradients, max_relative_error, round_to_bfloat16, to_text,
)
from cloudgan.tensor.ops import same_padding

from oracles import bf16_bits, conv3d_nested

# Denominator floor for relative error: central differences at h=1e-5 carry
# roundoff up to ~1e-8 (amplified by batchnorm), so exactly-zero true
# gradients need an absolute floor.
GRAD_FLOOR = 1e-4


# -- conv3d -----------------------------------------------------------------

def test_conv3d_identity_kernel():
    x = np.arange(8.0).reshape(1, 1, 2, 2, 2)
    k = np.ones((1, 1, 1, 1, 1))
    np.testing.assert_array_equal(conv3d_forward(x, k), x)


def test_conv3d_all_ones():
    out = conv3d_forward(np.ones((1, 1, 2, 2, 2)), np.ones((1, 1, 2, 2, 2)))
    assert out.shape == (1, 1, 1, 1, 1)
    assert out.item() == 8.0


def test_conv3d_matches_nested_loops():
    rng = np.random.default_rng(0)
    x = rng.uniform(-1, 1, (1, 2, 3, 3, 3))
    k = rng.uniform(-1, 1, (2, 2, 2, 2, 2))
    np.testing.assert_allclose(conv3d_forward(x, k), conv3d_nested(x, k), rtol=0, atol=1e-12)


@settings(max_examples=60, deadline=None)
@given(
    n=st.integers(1, 2), c=st.integers(1, 3), kf=st.integers(1, 3),
    d=st.integers(1, 5), h=st.integers(1, 5), w=st.integers(1, 5),
    kd=st.integers(1, 3), kh=st.integers(1, 3), kw=st.integers(1, 3),
    stride=st.integers(1, 3), padding=st.sampled_from(["valid", "same"]), seed=st.integers(0, 2**16),
)
def test_conv3d_oracle_property(n, c, kf, d, h, w, kd, kh, kw, stride, padding, seed):
    rng = np.random.default_rng(seed)
    x = rng.uniform(-1, 1, (n, c, d, h, w))
    k = rng.uniform(-1, 1, (kf, c, kd, kh, kw))
    if padding == "same":
        pads = tuple(same_padding(s, kk, stride) for s, kk in zip((d, h, w), (kd, kh, kw)))
    else:
        pads = ((0, 0),) * 3
    if any(s + lo + hi < kk for s, (lo, hi), kk in zip((d, h, w), pads, (kd, kh, kw))):
        with pytest.raises(ValueError):
            conv3d_forward(x, k, stride, padding)
        return
    expected = conv3d_nested(x, k, stride, pads)
    if expected.size > 1000:
        return
    np.testing.assert_allclose(conv3d_forward(x, k, stride, padding), expected, rtol=0, atol=1e-12)


def test_conv3d_errors():
    with pytest.raises(ValueError, match="channel"):
        conv3d_forward(np.ones((1, 2, 3, 3, 3)), np.ones((1, 3, 1, 1, 1)))
    with pytest.raises(ValueError, match="exceeds"):
        conv3d_forward(np.ones((1, 1, 2, 2, 2)), np.ones((1, 1, 3, 3, 3)))
    with pytest.raises(ValueError):
        conv3d_forward(np.ones((1, 1, 2, 2, 2)), np.ones((1, 1, 1, 1, 1)), stride=0)


def test_same_padding_puts_extra_cell_high():
    assert same_padding(4, 2, 1) == (0, 1)
    assert same_padding(5, 3, 1) == (1, 1)
    assert conv3d_forward(np.ones((1, 1, 4, 4, 4)), np.ones((1, 1, 2, 2, 2)), padding="same").shape == (1, 1, 4, 4, 4)


# -- bfloat16 -------------------------------------------------------------

def test_bf16_examples():
    assert round_to_bfloat16(np.array([1.0]))[0] == 1.0
    z = round_to_bfloat16(np.array([-0.0, np.inf, -np.inf, np.nan]))
    assert z[0] == 0.0 and math.copysign(1.0, z[0]) == -1.0
    assert z[1] == np.inf and z[2] == -np.inf and np.isnan(z[3])
    assert round_to_bfloat16(np.array([0.3]))[0] == 0.30078125


def test_bf16_special_float32_patterns():
    patterns = np.array([
        0x00000000, 0x80000000, 0x00000001, 0x80000001, 0x00008000, 0x00018000, 0x007FFFFF,
        0x00800000, 0x3F808000, 0x3F818000, 0x7F7FFFFF, 0x7F7F7FFF, 0x7F7F8000, 0xFF7FFFFF,
        0x7F800000, 0xFF800000, 0x7FC00000,
    ], dtype=np.uint32)
    f = patterns.view(np.float32)
    got = round_to_bfloat16(f.astype(np.float64))
    want = bf16_bits(f)
    np.testing.assert_array_equal(np.signbit(got[~np.isnan(want)]), np.signbit(want[~np.isnan(want)]))
    np.testing.assert_array_equal(got, want)


@settings(max_examples=300, deadline=None)
@given(st.floats(allow_nan=True, allow_infinity=True, width=32))
def test_bf16_idempotent_and_matches_bits(v):
    x = np.array([v], dtype=np.float64)
    once = round_to_bfloat16(x)
    np.testing.assert_array_equal(round_to_bfloat16(once), once)
    np.testing.assert_array_equal(once, bf16_bits(np.array([v], dtype=np.float32)))


def test_bf16_idempotent_on_float64():
    rng = np.random.default_rng(3)
    x = rng.standard_normal(10000) * 10.0 ** rng.integers(-45, 40, 10000)
    once = round_to_bfloat16(x)
    np.testing.assert_array_equal(round_to_bfloat16(once), once)


# -- networks -------------------------------------------------------------

def test_empty_network_is_identity():
    net = Network((3,), [])
    x = np.array([[1.0, 2.0, 3.0]])
    np.testing.assert_array_equal(evaluate(net, x).output, x)


def test_sigmoid_of_zero():
    net = Network((1,), [Sigmoid()])
    assert evaluate(net, np.zeros((1, 1))).output.item() == 0.5


def test_eval_mode_is_pure_and_deterministic():
    net = Network((4,), [Dense(5), BatchNorm(), Tanh(), Dense(2)], seed=1)
    x = np.random.default_rng(0).uniform(-1, 1, (6, 4))
    before = to_text(net)
    a = evaluate(net, x, mode="eval").output
    b = evaluate(net, x, mode="eval").output
    assert a.tobytes() == b.tobytes()
    assert to_text(net) == before


def test_train_mode_updates_running_stats_only_in_train():
    net = Network((3,), [BatchNorm()])
    x = np.random.default_rng(0).normal(2.0, 3.0, (8, 3))
    evaluate(net, x, mode="eval")
    np.testing.assert_array_equal(net.layers[0].state["running_mean"], 0.0)
    evaluate(net, x, mode="train")
    np.testing.assert_allclose(net.layers[0].state["running_mean"], 0.01 * x.mean(axis=0))


def test_shape_chain_errors():
    with pytest.raises(ShapeError):
        Network((4,), [Reshape((3, 2))])
    with pytest.raises(ShapeError):
        Network((4,), [Conv3D(2)])
    net = Network((4,), [Dense(2)])
    with pytest.raises(ShapeError):
        evaluate(net, np.zeros((1, 5)))


def test_non_finite_detected():
    net = Network((1,), [Dense(1)])
    net.layers[0].params["W"][:] = np.inf
    with pytest.raises(NonFiniteError):
        evaluate(net, np.ones((1, 1)))


def test_gradient_of_linear_form_is_input():
    net = Network((3,), [Dense(1)])
    x = np.array([[0.5, -2.0, 3.0]])
    trace = evaluate(net, x)
    grads, _ = gradients(net, trace, np.ones((1, 1)))
    np.testing.assert_array_equal(grads[0][:, 0], x[0])


def test_zero_loss_grad_gives_zero_gradients():
    net = Network((2, 3, 3, 3), [Conv3D(2), BatchNorm(), ReLU(), Flatten(), Dense(2)], seed=4)
    x = np.random.default_rng(1).uniform(-1, 1, (3, 2, 3, 3, 3))
    trace = evaluate(net, x)
    grads, gx = gradients(net, trace, np.zeros((3, 2)))
    assert all(np.all(g == 0) for g in grads)
    assert np.all(gx == 0)


def test_trace_mismatch_is_rejected():
    a = Network((2,), [Dense(2)])
    b = Network((2,), [Dense(2)])
    with pytest.raises(ShapeError):
        gradients(b, evaluate(a, np.ones((1, 2))), np.ones((1, 2)))


def test_finite_diff_quadratic():
    # f(w) = w^2 at w = 3 through a 1x1 dense layer with input 1.
    net = Network((1,), [Dense(1)])
    net.layers[0].params["W"][:] = 3.0
    g = finite_diff_gradients(net, np.ones((1, 1)), lambda y: float(y[0, 0] ** 2), h=1e-5)
    assert abs(g[0][0, 0] - 6.0) < 1e-6


def test_finite_diff_zero_when_output_ignores_weights():
    net = Network((2,), [Dense(2)])
    g = finite_diff_gradients(net, np.ones((1, 2)), lambda y: 1.0)
    assert all(np.all(t == 0) for t in g)


def _check(net, x, seed, side=None, tol=1e-4):
    rng = np.random.default_rng(seed + 1000)
    for p in net.parameters():
        p[...] = rng.uniform(-1, 1, p.shape)
    out = evaluate(net.copy(), x, side=side).output
    r = rng.uniform(-1, 1, out.shape)
    trace = evaluate(net, x, side=side)
    analytic, _ = gradients(net, trace, r)
    numeric = finite_diff_gradients(net, x, lambda y: float(np.sum(y * r)), h=1e-5, side=side)
    err = max_relative_error(analytic, numeric, floor=GRAD_FLOOR)
    assert err < tol, err
    return err


LAYER_CASES = {
    "dense": (lambda: [Dense(3)], (4,)),
    "conv3d_same": (lambda: [Conv3D(2, kernel=2, padding="same")], (2, 3, 3, 3)),
    "conv3d_valid_stride2": (lambda: [Conv3D(2, kernel=2, stride=2, padding="valid")], (1, 4, 4, 3)),
    "batchnorm_dense": (lambda: [Dense(3), BatchNorm()], (2,)),
    "batchnorm_conv": (lambda: [Conv3D(2, kernel=1), BatchNorm()], (1, 2, 2, 2)),
    "leaky_relu": (lambda: [Dense(4), LeakyReLU()], (3,)),
    "relu": (lambda: [Dense(4), ReLU()], (3,)),
    "sigmoid": (lambda: [Dense(3), Sigmoid()], (3,)),
    "tanh": (lambda: [Dense(3), Tanh()], (3,)),
    "flatten": (lambda: [Conv3D(2, kernel=1), Flatten(), Dense(2)], (1, 2, 2, 1)),
    "reshape": (lambda: [Dense(8), Reshape((1, 2, 2, 2)), Conv3D(1, kernel=2)], (3,)),
    "concat_input": (lambda: [Dense(2), ConcatInput(2), Dense(2)], (3,)),
}


@pytest.mark.parametrize("case", sorted(LAYER_CASES))
def test_layer_gradients_match_finite_differences(case):
    make, shape = LAYER_CASES[case]
    for seed in range(100):
        rng = np.random.default_rng(seed)
        net = Network(shape, make(), seed=seed)
        x = rng.uniform(-1, 1, (3,) + shape)
        side = rng.uniform(-1, 1, (3, 2)) if case == "concat_input" else None
        _check(net, x, seed, side=side)


def test_three_layer_dense_net_gradient():
    net = Network((3,), [Dense(8), LeakyReLU(), Dense(2)], seed=7)
    assert net.n_params == 50
    x = np.random.default_rng(7).uniform(-1, 1, (4, 3))
    _check(net, x, 7)


def test_batchnorm_normalises_train_batch():
    rng = np.random.default_rng(0)
    for batch in (2, 3, 16):
        x = rng.normal(5.0, 7.0, (batch, 4, 2, 2, 2))
        net = Network(x.shape[1:], [BatchNorm()])
        trace = evaluate(net, x, mode="train")
        xhat = trace.caches[0][1]
        axes = (0, 2, 3, 4)
        assert np.max(np.abs(xhat.mean(axis=axes))) < 1e-9
        var = x.var(axis=axes)
        # exact identity under epsilon: var(xhat) = v / (v + eps)
        np.testing.assert_allclose(xhat.var(axis=axes), var / (var + 1e-5), rtol=0, atol=1e-9)
        big = var >= 10.0
        assert np.all(np.abs(xhat.var(axis=axes)[big] - 1.0) < 1e-6)


def test_bfloat16_mode_rounds_multiply_inputs():
    net = Network((2,), [Dense(1)])
    net.layers[0].params["W"][:] = [[0.3], [1.0]]
    y = evaluate(net, np.array([[1.0, 0.3]]), precision="bfloat16").output.item()
    assert y == 0.30078125 * 2


def test_checkpoint_round_trip_is_value_exact():
    net = Network((1, 4, 4, 4), [Conv3D(2), BatchNorm(), LeakyReLU(), Flatten(), Dense(3), Sigmoid()], seed=9)
    evaluate(net, np.random.default_rng(0).uniform(size=(2, 1, 4, 4, 4)))
    back = from_text(to_text(net))
    for a, b in zip(net.parameters(), back.parameters()):
        assert a.tobytes() == b.tobytes()
    for la, lb in zip(net.layers, back.layers):
        for k in la.state:
            assert la.state[k].tobytes() == lb.state[k].tobytes()
    assert to_text(back) == to_text(net)
