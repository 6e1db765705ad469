import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

import emmixformer.numerics as nx
from emmixformer.numerics import Tensor

from conftest import probe_loss


def param(rng, *shape, scale=1.0):
    return Tensor(rng.standard_normal(shape) * scale, requires_grad=True)


# ------------------------------------------------------------------ matmul
def test_matmul_identity():
    a = Tensor([[1.0, 2.0], [3.0, 4.0]])
    np.testing.assert_array_equal((Tensor(np.eye(2)) @ a).data, a.data)


def test_matmul_unit_selector():
    assert (Tensor([[1.0, 0.0]]) @ Tensor([[2.0], [3.0]])).data.tolist() == [[2.0]]


def test_matmul_matches_triple_loop(rng):
    a, b = rng.standard_normal((3, 4)), rng.standard_normal((4, 2))
    expected = np.zeros((3, 2))
    for i in range(3):
        for j in range(2):
            for k in range(4):
                expected[i, j] += a[i, k] * b[k, j]
    np.testing.assert_allclose((Tensor(a) @ Tensor(b)).data, expected, atol=1e-12, rtol=0)


def test_matmul_shape_error_names_both_shapes():
    with pytest.raises(nx.ShapeError, match=r"\(2, 3\).*\(2, 3\)"):
        Tensor(np.ones((2, 3))) @ Tensor(np.ones((2, 3)))


@pytest.mark.parametrize("sa,sb", [((4,), (4, 3)), ((2, 4), (4,)), ((4,), (4,)), ((2, 5, 4), (4,))])
def test_matmul_vector_operands_follow_numpy(rng, sa, sb):
    a, b = param(rng, *sa), param(rng, *sb)
    out = a @ b
    np.testing.assert_allclose(out.data, a.data @ b.data, atol=1e-14)
    errs = nx.check_gradients(lambda: probe_loss(a @ b) if out.ndim else (a @ b) * 1.0, {"a": a, "b": b})
    assert max(errs.values()) < 1e-7


# ------------------------------------------------------------------ softmax
def test_softmax_examples():
    np.testing.assert_allclose(nx.softmax_rows(Tensor([[0.0, 0.0]])).data, [[0.5, 0.5]])
    np.testing.assert_allclose(nx.softmax_rows(Tensor([[1000.0, 1000.0]])).data, [[0.5, 0.5]])
    np.testing.assert_allclose(nx.softmax_rows(Tensor([[0.0, np.log(3.0)]])).data, [[0.25, 0.75]], atol=1e-15)


@settings(max_examples=60, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 8), st.integers(1, 8)),
              elements=st.floats(-50, 50)))
def test_softmax_rows_sum_to_one(x):
    out = nx.softmax_rows(Tensor(x)).data
    assert np.all(out >= 0)
    np.testing.assert_allclose(out.sum(axis=1), 1.0, atol=1e-12, rtol=0)


# ------------------------------------------------------------------ layer norm
def test_layer_norm_constant_row_is_zero():
    out = nx.layer_norm(Tensor(np.full((1, 5), 3.0)), Tensor(np.ones(5)), Tensor(np.zeros(5)))
    np.testing.assert_array_equal(out.data, np.zeros((1, 5)))


def test_layer_norm_two_points():
    out = nx.layer_norm(Tensor([[1.0, 3.0]]), Tensor(np.ones(2)), Tensor(np.zeros(2))).data
    # mean 2, population variance 1 -> (x - 2) / sqrt(1 + 1e-5)
    expected = np.array([[-1.0, 1.0]]) / np.sqrt(1.0 + 1e-5)
    np.testing.assert_allclose(out, expected, rtol=1e-14)
    assert np.all(np.abs(np.abs(out) - 1.0) < 1e-4)


def test_layer_norm_zero_gain_returns_bias(rng):
    bias = rng.standard_normal(4)
    out = nx.layer_norm(Tensor(rng.standard_normal((3, 4))), Tensor(np.zeros(4)), Tensor(bias))
    np.testing.assert_array_equal(out.data, np.broadcast_to(bias, (3, 4)))


# ------------------------------------------------------------------ dft
def direct_dft(x):
    n = len(x)
    t = np.arange(n)
    return np.array([np.sum(x * np.exp(-2j * np.pi * k * t / n)) for k in range(n)]) / np.sqrt(n)


def test_dft_dc_signal():
    f = nx.dft(Tensor([1.0, 1.0, 1.0, 1.0]))
    np.testing.assert_array_equal(f.re.data, [2.0, 0.0, 0.0, 0.0])
    np.testing.assert_array_equal(f.im.data, [0.0, 0.0, 0.0, 0.0])


def test_dft_impulse():
    f = nx.dft(Tensor([1.0, 0.0, 0.0, 0.0]))
    np.testing.assert_array_equal(f.re.data, [0.5] * 4)
    np.testing.assert_array_equal(f.im.data, [0.0] * 4)


def test_dft_matches_direct_summation_and_parseval(rng):
    x = rng.standard_normal(8)
    f = nx.dft(Tensor(x))
    np.testing.assert_allclose(f.to_numpy(), direct_dft(x), atol=1e-12)
    assert abs(np.sum(x**2) - np.sum(f.re.data**2 + f.im.data**2)) < 1e-10


@pytest.mark.parametrize("n", [1, 2, 3, 5, 8, 16, 33])
def test_dft_round_trip(rng, n):
    x = rng.standard_normal(n)
    back = nx.idft_complex(nx.dft(Tensor(x)))
    np.testing.assert_allclose(back.re.data, x, atol=1e-10)
    assert np.max(np.abs(back.im.data)) < 1e-10


def test_dft_along_time_axis_of_matrix(rng):
    x = rng.standard_normal((6, 3))
    f = nx.dft(Tensor(x), axis=0).to_numpy()
    for j in range(3):
        np.testing.assert_allclose(f[:, j], direct_dft(x[:, j]), atol=1e-12)


def test_nyquist_bin_is_exactly_real(rng):
    x = rng.standard_normal(8)
    f = nx.dft(Tensor(x))
    assert f.im.data[0] == 0.0 and f.im.data[4] == 0.0


# ------------------------------------------------------------------ backward
def test_backward_sum_gives_ones(rng):
    w = param(rng, 3, 2)
    w.sum().backward()
    np.testing.assert_array_equal(w.grad, np.ones((3, 2)))


def test_backward_square(rng):
    w = param(rng, 4)
    (w * w).sum().backward()
    np.testing.assert_allclose(w.grad, 2 * w.data)


def test_backward_accumulates(rng):
    w = param(rng, 4)
    w.sum().backward()
    w.sum().backward()
    np.testing.assert_array_equal(w.grad, 2 * np.ones(4))
    w.zero_grad()
    assert w.grad is None


def test_backward_rejects_non_scalar(rng):
    with pytest.raises(ValueError, match="scalar"):
        param(rng, 2, 2).backward()


def test_shared_subexpression_gradient(rng):
    w = param(rng, 3)
    y = nx.tanh(w)
    (y * y + y).sum().backward()
    t = np.tanh(w.data)
    np.testing.assert_allclose(w.grad, (2 * t + 1) * (1 - t**2))


def test_composite_graph_gradcheck(rng):
    a, b = param(rng, 3, 4), param(rng, 4, 5)
    c = param(rng, 5)

    def loss():
        h = nx.tanh(a @ b + c)
        return probe_loss(nx.softmax(h) * nx.sigmoid(h))

    errs = nx.check_gradients(loss, {"a": a, "b": b, "c": c})
    assert max(errs.values()) < 1e-4


def test_non_finite_results_raise():
    with pytest.raises(nx.NumericalError):
        nx.exp(Tensor([1000.0]))


def test_no_grad_skips_graph(rng):
    w = param(rng, 3)
    with nx.no_grad():
        y = w * 2.0
    assert not y.requires_grad


# ------------------------------------------------------------------ per-primitive gradchecks
def _shape(rng, ndim):
    return tuple(int(n) for n in rng.integers(1, 9, size=ndim))


PRIMITIVES = {
    "add": (lambda a, b: a + b, 2),
    "sub": (lambda a, b: a - b, 2),
    "mul": (lambda a, b: a * b, 2),
    "div": (lambda a, b: a / (b * b + 1.0), 2),
    "sigmoid": (nx.sigmoid, 1),
    "tanh": (nx.tanh, 1),
    "relu": (nx.relu, 1),
    "sin": (nx.sin, 1),
    "cos": (nx.cos, 1),
    "exp": (nx.exp, 1),
    "sqrt": (lambda a: nx.sqrt(a * a + 0.5), 1),
    "atan2": (nx.atan2, 2),
    "sum_axis": (lambda a: a.sum(axis=-1), 1),
    "mean_axis": (lambda a: a.mean(axis=0, keepdims=True), 1),
    "reshape": (lambda a: a.reshape(-1), 1),
    "transpose": (lambda a: a.transpose(), 1),
    "concat": (lambda a, b: nx.concat([a, b], axis=0), 2),
    "stack": (lambda a, b: nx.stack([a, b], axis=1), 2),
    "slice": (lambda a: a[..., ::2], 1),
    "softmax": (nx.softmax, 1),
    "log_softmax": (nx.log_softmax, 1),
}


@pytest.mark.parametrize("name", sorted(PRIMITIVES))
@pytest.mark.parametrize("seed", [0, 1, 2])
def test_primitive_gradcheck(name, seed):
    fn, arity = PRIMITIVES[name]
    rng = np.random.default_rng(seed)
    shape = _shape(rng, 2)
    args = [param(rng, *shape) for _ in range(arity)]
    errs = nx.check_gradients(lambda: probe_loss(fn(*args)), {f"x{i}": a for i, a in enumerate(args)})
    assert max(errs.values()) < 1e-4, errs


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_matmul_gradcheck_batched(seed):
    rng = np.random.default_rng(seed)
    m, k, n = _shape(rng, 3)
    a, b = param(rng, 2, m, k), param(rng, k, n)
    errs = nx.check_gradients(lambda: probe_loss(a @ b), {"a": a, "b": b})
    assert max(errs.values()) < 1e-4


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_layer_norm_gradcheck(seed):
    rng = np.random.default_rng(seed)
    shape = _shape(rng, 2)
    x, g, b = param(rng, *shape), param(rng, shape[-1]), param(rng, shape[-1])
    errs = nx.check_gradients(lambda: probe_loss(nx.layer_norm(x, g, b)), {"x": x, "g": g, "b": b})
    assert max(errs.values()) < 1e-4


@pytest.mark.parametrize("seed", [0, 1, 2])
@pytest.mark.parametrize("training", [True, False])
def test_batch_norm_gradcheck(seed, training):
    rng = np.random.default_rng(seed)
    B, C, W = _shape(rng, 3)
    B = max(B, 2)
    x, g, b = param(rng, B, C, W), param(rng, C), param(rng, C)
    rm, rv = rng.standard_normal(C), rng.uniform(0.5, 2.0, C)

    def loss():
        return probe_loss(nx.batch_norm(x, g, b, rm.copy(), rv.copy(), training))

    errs = nx.check_gradients(loss, {"x": x, "g": g, "b": b})
    assert max(errs.values()) < 1e-4


@pytest.mark.parametrize("seed", [0, 1, 2])
@pytest.mark.parametrize("K", [1, 3, 4, 5])
def test_conv1d_gradcheck(seed, K):
    rng = np.random.default_rng(seed)
    B, C_in, W = _shape(rng, 3)
    C_out = int(rng.integers(1, 9))
    x, w, b = param(rng, B, C_in, W), param(rng, C_out, C_in, K), param(rng, C_out)
    errs = nx.check_gradients(lambda: probe_loss(nx.conv1d(x, w, b)), {"x": x, "w": w, "b": b})
    assert max(errs.values()) < 1e-4


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_avg_pool_gradcheck(seed):
    rng = np.random.default_rng(seed)
    x = param(rng, 2, 3, 2 * int(rng.integers(1, 5)))
    errs = nx.check_gradients(lambda: probe_loss(nx.avg_pool1d(x)), {"x": x})
    assert max(errs.values()) < 1e-4


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_dft_gradcheck(seed):
    rng = np.random.default_rng(seed)
    x = param(rng, int(rng.integers(1, 9)), 3)

    def loss():
        f = nx.dft(x, axis=0)
        g = nx.ComplexTensor(f.re * f.im, f.re + f.im)
        return probe_loss(nx.idft(g, axis=0))

    errs = nx.check_gradients(loss, {"x": x})
    assert max(errs.values()) < 1e-4


def test_cross_entropy_gradcheck(rng):
    logits = param(rng, 5, 4)
    labels = np.array([0, 3, 1, 1, 2])
    errs = nx.check_gradients(lambda: nx.cross_entropy(logits, labels), {"l": logits})
    assert max(errs.values()) < 1e-4


# ------------------------------------------------------------------ conv / pool / bn semantics
def conv_oracle(x, w, b):
    B, C_in, W = x.shape
    C_out, _, K = w.shape
    left = (K - 1) // 2
    out = np.zeros((B, C_out, W))
    for n in range(B):
        for o in range(C_out):
            for i in range(W):
                acc = b[o]
                for c in range(C_in):
                    for k in range(K):
                        j = i + k - left
                        if 0 <= j < W:
                            acc += w[o, c, k] * x[n, c, j]
                out[n, o, i] = acc
    return out


@pytest.mark.parametrize("K", [1, 3, 4, 7])
def test_conv1d_matches_loop_oracle(rng, K):
    x, w, b = rng.standard_normal((2, 3, 11)), rng.standard_normal((4, 3, K)), rng.standard_normal(4)
    np.testing.assert_allclose(nx.conv1d(Tensor(x), Tensor(w), Tensor(b)).data, conv_oracle(x, w, b), atol=1e-12)


def test_conv1d_impulse_reproduces_reversed_kernel():
    x = np.zeros((1, 1, 11))
    x[0, 0, 5] = 1.0
    w = np.arange(1.0, 6.0).reshape(1, 1, 5)
    out = nx.conv1d(Tensor(x), Tensor(w)).data[0, 0]
    np.testing.assert_array_equal(out[3:8], w[0, 0, ::-1])
    assert np.all(out[:3] == 0) and np.all(out[8:] == 0)


def test_avg_pool_halves_width(rng):
    x = rng.standard_normal((2, 3, 8))
    out = nx.avg_pool1d(Tensor(x)).data
    np.testing.assert_allclose(out, 0.5 * (x[..., ::2] + x[..., 1::2]))


def test_batch_norm_running_stats_momentum(rng):
    x = rng.standard_normal((4, 2, 5)) * 3 + 1
    rm, rv = np.zeros(2), np.ones(2)
    nx.batch_norm(Tensor(x), Tensor(np.ones(2)), Tensor(np.zeros(2)), rm, rv, training=True)
    n = 20
    np.testing.assert_allclose(rm, 0.1 * x.mean(axis=(0, 2)))
    np.testing.assert_allclose(rv, 0.9 + 0.1 * x.var(axis=(0, 2)) * n / (n - 1))


def test_batch_norm_train_output_is_standardised(rng):
    x = rng.standard_normal((6, 3, 4)) * 5 - 2
    out = nx.batch_norm(Tensor(x), Tensor(np.ones(3)), Tensor(np.zeros(3)), np.zeros(3), np.ones(3), True).data
    np.testing.assert_allclose(out.mean(axis=(0, 2)), 0, atol=1e-12)
    np.testing.assert_allclose(out.var(axis=(0, 2)), 1, atol=1e-5)


def test_atan2_axis_cases():
    out = nx.atan2(Tensor([1.0, 0.0, -0.0, 0.0]), Tensor([0.0, -1.0, -1.0, 0.0])).data
    np.testing.assert_array_equal(out, [np.pi / 2, np.pi, np.pi, 0.0])


def test_sqrt_and_atan2_zero_subgradient():
    a = Tensor([0.0], requires_grad=True)
    nx.sqrt(a).sum().backward()
    assert a.grad[0] == 0.0
    y, x = Tensor([0.0], requires_grad=True), Tensor([0.0], requires_grad=True)
    nx.atan2(y, x).sum().backward()
    assert y.grad[0] == 0.0 and x.grad[0] == 0.0


def test_kink_margin_records_closest_relu_input():
    with nx.kink_margin() as margin:
        nx.relu(Tensor([-0.5, 0.25, 3.0]))
        nx.relu(Tensor([0.1]))
    assert margin[0] == 0.1
    with nx.kink_margin() as inner:
        pass
    assert inner[0] == np.inf


def test_relative_error_ignores_differences_below_resolution():
    assert nx.relative_error(np.array([0.0]), np.array([1e-10])) == pytest.approx(1e-4)
    assert nx.relative_error(np.array([0.0]), np.array([1e-10]), resolution=1e-9) == 0.0
    assert nx.difference_resolution(1.0, 1e-5) == pytest.approx(10 * np.finfo(float).eps / 1e-5)
