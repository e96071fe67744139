import numpy as np
import pytest

from vadiff import Rng, Var, affine, backward, silu, vsum
from vadiff.autodiff import add, matmul, mul, sub


def matmul_loop_oracle(a, b):
    n, k = a.shape
    k2, m = b.shape
    out = np.zeros((n, m))
    for i in range(n):
        for j in range(m):
            for l in range(k):
                out[i, j] += a[i, l] * b[l, j]
    return out


def test_matmul_matches_triple_loop_oracle():
    rng = Rng(0)
    for rows, inner, cols in [(3, 4, 2), (8, 8, 8), (32, 32, 32), (1, 7, 5)]:
        a = rng.standard_normal((rows, inner))
        b = rng.standard_normal((inner, cols))
        got = matmul(a, b)
        want = matmul_loop_oracle(a, b)
        assert np.abs(got - want).max() <= 1e-12


def test_affine_identity():
    y = affine(np.array([[1.0, 2.0]]), np.eye(2), np.zeros(2))
    assert np.array_equal(y, [[1.0, 2.0]])


def test_affine_hand_arithmetic():
    y = affine(np.array([[1.0, 1.0]]), np.array([[2.0], [3.0]]), np.array([1.0]))
    assert np.array_equal(y, [[6.0]])


def test_affine_dimension_mismatch():
    with pytest.raises(ValueError):
        affine(np.ones((2, 3)), np.ones((4, 2)), np.zeros(2))


def test_square_gradient():
    x = Var(np.array(3.0), requires_grad=True)
    y = mul(x, x)
    backward(y)
    assert x.grad == 6.0


def test_affine_mse_gradient_matches_closed_form():
    rng = Rng(4)
    x = rng.standard_normal((6, 3))
    y = rng.standard_normal((6, 2))
    w = Var(rng.standard_normal((3, 2)), requires_grad=True)
    pred = matmul(x, w)
    err = sub(pred, y)
    loss = mul(vsum(mul(err, err)), 1.0 / (6 * 2))
    backward(loss)
    closed = 2.0 * x.T @ (x @ w.value - y) / (6 * 2)
    assert np.abs(w.grad - closed).max() <= 1e-12


def _fd_grad(f, x, eps=1e-6):
    g = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        ix = it.multi_index
        old = x[ix]
        x[ix] = old + eps
        hi = f()
        x[ix] = old - eps
        lo = f()
        x[ix] = old
        g[ix] = (hi - lo) / (2 * eps)
    return g


def test_silu_gradient_matches_finite_differences():
    x0 = Rng(1).standard_normal((4, 3))

    def value():
        return float(np.sum(np.asarray(silu(x0))))

    xv = Var(x0, requires_grad=True)
    out = vsum(silu(xv))
    backward(out)
    fd = _fd_grad(value, x0)
    assert np.abs(xv.grad - fd).max() <= 1e-8


def test_silu_on_plain_arrays():
    x = np.array([0.0, 1.0, -1.0])
    got = silu(x)
    want = x / (1.0 + np.exp(-x))
    assert np.allclose(got, want, atol=1e-15)
    assert got[0] == 0.0


def test_vsum_axis_none_and_axis1():
    x = Var(np.arange(6.0).reshape(2, 3), requires_grad=True)
    total = vsum(x)
    assert total.value == 15.0
    backward(total)
    assert np.array_equal(x.grad, np.ones((2, 3)))

    x2 = Var(np.arange(6.0).reshape(2, 3), requires_grad=True)
    rows = vsum(x2, axis=1)
    assert np.array_equal(rows.value, [3.0, 12.0])
    backward(vsum(mul(rows, np.array([2.0, 5.0]))))
    assert np.array_equal(x2.grad, [[2.0, 2.0, 2.0], [5.0, 5.0, 5.0]])


def test_broadcast_bias_gradient_sums_over_rows():
    x = Rng(2).standard_normal((5, 3))
    b = Var(np.zeros(3), requires_grad=True)
    out = vsum(add(x, b))
    backward(out)
    assert np.array_equal(b.grad, np.full(3, 5.0))


def test_gradient_accumulates_across_uses():
    x = Var(np.array(2.0), requires_grad=True)
    y = add(mul(x, x), x)  # x^2 + x
    backward(y)
    assert x.grad == 5.0


def test_backward_on_empty_tape_is_an_error():
    with pytest.raises(ValueError):
        backward(Var(np.array(1.0), requires_grad=True))


def test_constants_get_no_gradient():
    c = Var(np.array(4.0))
    x = Var(np.array(2.0), requires_grad=True)
    backward(mul(c, x))
    assert x.grad == 4.0
    assert c.grad is None
