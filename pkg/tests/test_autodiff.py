"""Engine-level checks: primitives against finite differences, determinism,
and the documented edge conventions."""
from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from motionforge import autodiff as ad
from motionforge.autodiff import ShapeError, Tensor
from motionforge.params import RandomSource

from conftest import assert_grads_match, finite_diff, max_rel_err


def test_identity_add_zero():
    x = Tensor([1.0, 2.0])
    y = x + Tensor([0.0, 0.0])
    assert np.array_equal(y.data, [1.0, 2.0])


def test_sigmoid_at_zero():
    y = ad.sigmoid(Tensor([0.0]))
    assert y.data[0] == 0.5


def test_two_layer_perceptron_hand_oracle():
    # hand-evaluate two affine+tanh layers with fixed small weights
    w1 = np.array([[0.1, -0.2], [0.3, 0.05]])
    b1 = np.array([0.01, -0.02])
    w2 = np.array([[0.5], [-0.4]])
    b2 = np.array([0.2])
    x = np.array([[0.7, -0.3]])
    h = np.tanh(x @ w1 + b1)
    expected = np.tanh(h @ w2 + b2)

    out = ad.tanh(ad.matmul(ad.tanh(ad.matmul(Tensor(x), Tensor(w1)) + Tensor(b1)),
                            Tensor(w2)) + Tensor(b2))
    assert np.max(np.abs(out.data - expected)) < 1e-12


def test_grad_square():
    x = Tensor(3.0)
    (g,) = ad.grad(ad.mul(x, x), [x])
    assert g.data == 6.0


def test_grad_abs_negative_and_zero():
    x = Tensor(-2.0)
    (g,) = ad.grad(ad.abs_(x), [x])
    assert g.data == -1.0
    x0 = Tensor(0.0)
    (g0,) = ad.grad(ad.abs_(x0), [x0])
    assert g0.data == 0.0  # subgradient convention at 0


def test_grad_requires_scalar_output():
    x = Tensor([1.0, 2.0])
    with pytest.raises(ShapeError):
        ad.grad(x + x, [x])


def test_unreachable_leaf_gets_zero_gradient():
    x, y = Tensor(2.0), Tensor(5.0)
    (gy,) = ad.grad(ad.mul(x, x), [y])
    assert gy.data == 0.0


def test_random_graph_matches_finite_differences():
    rng = RandomSource(11)
    params = [Tensor(rng.normal((2, 3))), Tensor(rng.normal((3,))),
              Tensor(rng.normal((3, 1))), Tensor(rng.normal((1,)))]
    x = Tensor(rng.normal((4, 2)))

    def loss():
        h = ad.tanh(ad.matmul(x, params[0]) + params[1])
        out = ad.sigmoid(ad.matmul(h, params[2]) + params[3])
        return ad.mean(ad.square(out)) + ad.mean_abs(h)

    grads = ad.grad(loss(), params)
    assert_grads_match(loss, params, grads)


@pytest.mark.parametrize("op", [ad.tanh, ad.sigmoid, ad.exp, ad.square, ad.abs_])
def test_elementwise_primitive_gradients(op):
    rng = RandomSource(5)
    x = Tensor(rng.normal((3, 4)) + 0.1)
    grads = ad.grad(ad.mean(op(x)), [x])
    assert_grads_match(lambda: ad.mean(op(x)), [x], grads)


@pytest.mark.parametrize("op", [ad.log, ad.sqrt, ad.reciprocal])
def test_positive_domain_primitive_gradients(op):
    rng = RandomSource(6)
    x = Tensor(np.abs(rng.normal((3, 4))) + 0.5)
    grads = ad.grad(ad.mean(op(x)), [x])
    assert_grads_match(lambda: ad.mean(op(x)), [x], grads)


def test_concat_slice_gradients():
    rng = RandomSource(8)
    a, b = Tensor(rng.normal((2, 3))), Tensor(rng.normal((2, 2)))

    def loss():
        joined = ad.concat([a, b], axis=1)
        mid = ad.slice_axis(joined, 1, 1, 4)
        return ad.mean(ad.square(mid))

    grads = ad.grad(loss(), [a, b])
    assert_grads_match(loss, [a, b], grads)


def test_matmul_broadcast_add_gradients():
    rng = RandomSource(9)
    w = Tensor(rng.normal((3, 2)))
    b = Tensor(rng.normal((2,)))
    x = Tensor(rng.normal((4, 3)))

    def loss():
        return ad.mean_abs(ad.matmul(x, w) + b)

    grads = ad.grad(loss(), [w, b, x])
    assert_grads_match(loss, [w, b, x], grads)


def test_forward_is_pure_and_repeatable():
    rng = RandomSource(10)
    x = Tensor(rng.normal((5, 5)))
    w = Tensor(rng.normal((5, 5)))
    one = ad.tanh(ad.matmul(x, w)).data
    two = ad.tanh(ad.matmul(x, w)).data
    assert np.array_equal(one, two)


def test_shape_mismatch_names_offending_op():
    with pytest.raises(ShapeError, match="matmul"):
        ad.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))))
    with pytest.raises(ShapeError, match="add"):
        ad.add(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 4))))


def test_second_order_gradient_through_backward():
    # d/dw of (||dy/dx|| - 1)^2 for y = x @ w has the closed form
    # 2(||w|| - 1) w / ||w||
    w = Tensor(np.array([[0.5], [2.0]]))
    x = Tensor(np.array([[1.0, 2.0]]))
    (gx,) = ad.grad(ad.sum_all(ad.matmul(x, w)), [x], create_graph=True)
    penalty = ad.square(ad.sqrt(ad.sum_all(ad.square(gx))) - 1.0)
    (gw,) = ad.grad(penalty, [w])
    n = np.linalg.norm(w.data)
    expected = 2.0 * (n - 1.0) * w.data / n
    assert max_rel_err(gw.data, expected) < 1e-10


def test_no_grad_blocks_recording():
    x = Tensor(2.0)
    with ad.no_grad():
        y = ad.mul(x, x)
    assert y._parents == ()
    (g,) = ad.grad(ad.mul(y, Tensor(1.0)), [x])
    assert g.data == 0.0


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-5, 5), min_size=1, max_size=8))
def test_mean_abs_nonnegative_and_exact(values):
    x = Tensor(np.array(values))
    got = ad.mean_abs(x).item()
    assert got >= 0.0
    assert got == pytest.approx(np.mean(np.abs(values)), rel=1e-12, abs=1e-12)


def test_finite_diff_oracle_self_check():
    # the oracle itself on an analytic case: d/dx mean(x^2) = 2x/n
    x = Tensor(np.array([1.0, -2.0, 0.5]))
    (fd,) = finite_diff(lambda: ad.mean(ad.square(x)), [x])
    assert max_rel_err(fd, 2.0 * x.data / 3.0) < 1e-7
