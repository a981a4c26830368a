"""Engine tests: forward definitions, backward oracle, structural errors."""

import numpy as np
import pytest
from gradcheck import REL_TOL, check_op, max_relative_error, numeric_gradient

from tabgate import autodiff as ad
from tabgate.autodiff import ShapeError, Tensor


def rand_shape(rng, ndim_max=3, size_max=5):
    ndim = rng.integers(1, ndim_max + 1)
    return tuple(int(s) for s in rng.integers(1, size_max + 1, size=ndim))


# forward definitions -------------------------------------------------------

def test_matmul_identity():
    x = Tensor([[1.0, 2.0], [3.0, 4.0]])
    out = ad.matmul(x, Tensor(np.eye(2)))
    assert np.array_equal(out.data, x.data)


def test_leaky_relu_definition():
    out = ad.leaky_relu(Tensor([-1.0, 0.0, 2.0]), 0.01)
    assert out.data.tolist() == [-0.01, 0.0, 2.0]


def test_softmax_symmetry():
    out = ad.softmax(Tensor([0.0, 0.0, 0.0]))
    assert np.allclose(out.data, [1 / 3] * 3, atol=1e-15)


def test_softmax_rows_sum_to_one():
    rng = np.random.default_rng(7)
    x = Tensor(rng.standard_normal((13, 9)) * 30)
    out = ad.softmax(x, axis=-1)
    assert np.all(np.abs(out.data.sum(axis=-1) - 1.0) < 1e-12)


def test_leaky_relu_preserves_sign():
    rng = np.random.default_rng(8)
    x = rng.standard_normal(2000)
    out = ad.leaky_relu(Tensor(x), 0.01)
    assert np.array_equal(np.sign(out.data), np.sign(x))


def test_shape_error_names_op_and_shapes():
    with pytest.raises(ShapeError) as err:
        ad.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((4, 2))))
    assert "matmul" in str(err.value)
    assert "(2, 3)" in str(err.value) and "(4, 2)" in str(err.value)
    with pytest.raises(ShapeError):
        ad.add(Tensor(np.ones((2, 3))), Tensor(np.ones((4,))))


def test_nan_propagates_and_is_detectable():
    x = Tensor([1.0, -1.0])
    out = ad.log(x)
    assert not out.all_finite()
    assert x.all_finite()


# backward basics ------------------------------------------------------------

def test_backward_sum_gives_ones():
    x = Tensor([1.0, 5.0, -2.0], requires_grad=True)
    ad.sum_(x).backward()
    assert x.grad.tolist() == [1.0, 1.0, 1.0]


def test_backward_quadratic():
    x = Tensor([1.0, 2.0], requires_grad=True)
    ad.sum_(ad.mul(x, x)).backward()
    assert x.grad.tolist() == [2.0, 4.0]


def test_backward_requires_scalar():
    x = Tensor([1.0, 2.0], requires_grad=True)
    with pytest.raises(ValueError):
        ad.mul(x, x).backward()


def test_backward_accumulates_and_zeroes():
    x = Tensor([3.0], requires_grad=True)
    loss = ad.sum_(ad.mul(x, x))
    loss.backward()
    loss.backward()
    assert x.grad.tolist() == [12.0]  # two accumulated passes of 6
    x.zero_grad()
    assert x.grad.tolist() == [0.0]


def test_unreachable_tensor_keeps_zero_grad():
    x = Tensor([1.0], requires_grad=True)
    y = Tensor([2.0], requires_grad=True)
    ad.sum_(ad.mul(x, x)).backward()
    assert y.grad.tolist() == [0.0]


def test_composed_graph_matches_finite_differences():
    rng = np.random.default_rng(42)
    a = rng.standard_normal((3, 4))
    b = rng.standard_normal((4, 2))

    def f(arrays):
        x, w = arrays
        h = ad.leaky_relu(ad.matmul(Tensor(x) if not isinstance(x, Tensor) else x,
                                    Tensor(w) if not isinstance(w, Tensor) else w), 0.01)
        return ad.sigmoid(h)

    def op(tensors):
        return f(tensors)

    err = check_op(op, [a, b], rng)
    assert err < REL_TOL


# dropout --------------------------------------------------------------------

def test_dropout_eval_is_identity():
    x = Tensor(np.arange(12.0).reshape(3, 4))
    out = ad.dropout(x, 0.5, np.random.default_rng(0), training=False)
    assert out is x


def test_dropout_train_expectation_matches_input():
    rng = np.random.default_rng(123)
    x = Tensor(np.full((10_000,), 2.0))
    total = np.zeros(10_000)
    reps = 4
    for _ in range(reps):
        total += ad.dropout(x, 0.3, rng, training=True).data
    mean = total.mean() / reps
    assert abs(mean - 2.0) / 2.0 < 0.02


def test_dropout_rate_bounds():
    with pytest.raises(ValueError):
        ad.dropout(Tensor([1.0]), 1.0, np.random.default_rng(0), training=True)


def test_dropout_gradient_is_mask_over_keep():
    rng = np.random.default_rng(5)
    x = Tensor(rng.standard_normal(50), requires_grad=True)
    out = ad.dropout(x, 0.4, np.random.default_rng(9), training=True)
    ad.sum_(out).backward()
    mask = (out.data != 0) | (x.data == 0)
    expected = np.where(out.data != 0, 1.0 / 0.6, 0.0)
    keep = out.data != 0
    assert np.allclose(x.grad[keep], expected[keep])
    assert np.all(x.grad[~mask] == 0)


# cross entropy ---------------------------------------------------------------

def test_cross_entropy_uniform_logits():
    loss = ad.cross_entropy(Tensor([[0.0, 0.0]]), [0])
    assert abs(loss.item() - np.log(2.0)) < 1e-12


def test_cross_entropy_saturated():
    loss = ad.cross_entropy(Tensor([[10.0, -10.0]]), [0])
    assert loss.item() < 1e-4


def test_cross_entropy_matches_logsumexp_oracle():
    rng = np.random.default_rng(77)
    logits = rng.standard_normal((40, 2)) * 5
    labels = rng.integers(0, 2, size=40)
    loss = ad.cross_entropy(Tensor(logits), labels)
    # independent evaluation: mean of logsumexp(row) - row[label]
    lse = np.log(np.exp(logits).sum(axis=1))
    expected = float(np.mean(lse - logits[np.arange(40), labels]))
    assert abs(loss.item() - expected) < 1e-10


def test_cross_entropy_label_out_of_range_names_row():
    with pytest.raises(ValueError) as err:
        ad.cross_entropy(Tensor([[0.0, 0.0], [0.0, 0.0]]), [0, 5])
    assert "row 1" in str(err.value)


# finite-difference oracle over every differentiable op ----------------------

def fd_suite(n_cases: int = 20) -> dict[str, float]:
    """Worst relative FD error per op over n_cases random shapes each."""
    rng = np.random.default_rng(20210)
    worst: dict[str, float] = {}

    def run(name, op, arrays_fn):
        err = worst.get(name, 0.0)
        for _ in range(n_cases):
            err = max(err, check_op(op, arrays_fn(), rng))
        worst[name] = err

    def away_from_kink(shape):
        x = rng.standard_normal(shape)
        return np.where(np.abs(x) < 1e-3, 0.1, x)

    run("add", lambda ts: ad.add(*ts), lambda: _pair(rng))
    run("sub", lambda ts: ad.sub(*ts), lambda: _pair(rng))
    run("mul", lambda ts: ad.mul(*ts), lambda: _pair(rng))
    run("div", lambda ts: ad.div(*ts), lambda: _pair(rng, denom=True))
    run("affine", lambda ts: ad.affine(ts[0], 1.7, -0.3), lambda: [rng.standard_normal(rand_shape(rng))])
    run("matmul", lambda ts: ad.matmul(*ts), lambda: _matmul_pair(rng))
    run(
        "transpose",
        lambda ts: ad.transpose(ts[0], (1, 0)),
        lambda: [rng.standard_normal((rng.integers(1, 5), rng.integers(1, 5)))],
    )
    run(
        "reshape",
        lambda ts: ad.reshape(ts[0], (-1,)),
        lambda: [rng.standard_normal(rand_shape(rng))],
    )
    run(
        "concat",
        lambda ts: ad.concat(ts, axis=0),
        lambda: [rng.standard_normal((rng.integers(1, 4), 3)) for _ in range(3)],
    )
    run(
        "slice",
        lambda ts: ts[0][1:3, :2],
        lambda: [rng.standard_normal((4, 3))],
    )
    run(
        "take_columns",
        lambda ts: ad.take_columns(ts[0], [2, 0]),
        lambda: [rng.standard_normal((3, 4))],
    )
    run(
        "embedding_lookup",
        lambda ts: ad.embedding_lookup(ts[0], np.array([0, 2, 2, 1])),
        lambda: [rng.standard_normal((3, 4))],
    )
    run("leaky_relu", lambda ts: ad.leaky_relu(ts[0], 0.01), lambda: [away_from_kink(rand_shape(rng))])
    run("sigmoid", lambda ts: ad.sigmoid(ts[0]), lambda: [rng.standard_normal(rand_shape(rng))])
    run("softmax", lambda ts: ad.softmax(ts[0], axis=-1), lambda: [rng.standard_normal(rand_shape(rng))])
    run(
        "log_softmax",
        lambda ts: ad.log_softmax(ts[0], axis=-1),
        lambda: [rng.standard_normal(rand_shape(rng))],
    )
    run("exp", lambda ts: ad.exp(ts[0]), lambda: [rng.standard_normal(rand_shape(rng))])
    run("log", lambda ts: ad.log(ts[0]), lambda: [rng.uniform(0.2, 3.0, rand_shape(rng))])
    run("sqrt", lambda ts: ad.sqrt(ts[0]), lambda: [rng.uniform(0.2, 3.0, rand_shape(rng))])
    run("sum", lambda ts: ad.sum_(ts[0], axis=-1), lambda: [rng.standard_normal(rand_shape(rng))])
    run(
        "mean",
        lambda ts: ad.mean(ts[0], axis=0, keepdims=True),
        lambda: [rng.standard_normal(rand_shape(rng))],
    )
    run(
        "batch_moments",
        lambda ts: ad.mul(*ad.batch_moments(ts[0], axis=0)),
        lambda: [rng.standard_normal((rng.integers(2, 6), rng.integers(1, 4)))],
    )

    # dropout with a replayed mask so the function is deterministic
    class Replay:
        def __init__(self, seed):
            self.seed = seed

        def random(self, shape):
            return np.random.default_rng(self.seed).random(shape)

    run(
        "dropout",
        lambda ts: ad.dropout(ts[0], 0.35, Replay(99), training=True),
        lambda: [rng.standard_normal(rand_shape(rng))],
    )
    return worst


def _pair(rng, denom=False):
    shape = rand_shape(rng)
    a = rng.standard_normal(shape)
    # sometimes broadcast the second operand
    b_shape = shape if rng.random() < 0.5 else shape[-1:]
    b = rng.standard_normal(b_shape)
    if denom:
        b = np.where(np.abs(b) < 0.2, 0.7, b)
    return [a, b]


def _matmul_pair(rng):
    i, k, j = (int(v) for v in rng.integers(1, 5, size=3))
    if rng.random() < 0.5:
        return [rng.standard_normal((i, k)), rng.standard_normal((k, j))]
    batch = int(rng.integers(1, 4))
    if rng.random() < 0.5:
        return [rng.standard_normal((batch, i, k)), rng.standard_normal((batch, k, j))]
    return [rng.standard_normal((batch, i, k)), rng.standard_normal((k, j))]


def test_every_op_passes_finite_difference_oracle():
    worst = fd_suite(n_cases=20)
    failures = {k: v for k, v in worst.items() if v >= REL_TOL}
    assert not failures, f"ops over tolerance: {failures}"


def test_numeric_gradient_helper_sanity():
    # d/dx sum(x^2) = 2x, checked on the oracle itself
    x = np.array([1.0, -2.0])
    (g,) = numeric_gradient(lambda arrs: float((arrs[0] ** 2).sum()), [x])
    assert max_relative_error(2 * x, g) < 1e-6
