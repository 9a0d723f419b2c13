"""Finite-difference verification of every backward pass, run in 64-bit."""

import numpy as np
import pytest

from ktedge import ops
from ktedge.gradcheck import finite_diff_check
from ktedge.layers import Dense, Fire
from ktedge.rng import RngState

N_INSTANCES = 20
TOL = 1e-4
SEEDS = list(range(N_INSTANCES))


def randn(rng, *shape):
    return np.array(rng.normal(int(np.prod(shape)))).reshape(shape)


def separated(rng, *shape):
    """Values with pairwise gaps far above eps, for kink-free max-pool checks."""
    n = int(np.prod(shape))
    vals = list(np.linspace(-1.0, 1.0, n))
    rng.shuffle(vals)
    return np.array(vals).reshape(shape)


def param_scalar_fn(param, compute):
    """Scalar function of a layer parameter: writes the candidate value in,
    evaluates, restores."""
    def f(v):
        old = param.copy()
        param[...] = v
        try:
            return compute()
        finally:
            param[...] = old
    return f


def test_linear_function_is_exact():
    rng = RngState(0)
    x = randn(rng, 10)
    err = finite_diff_check(lambda v: float(np.sum(3.0 * v + 1.0)), np.full(10, 3.0), x)
    assert err < 1e-10


@pytest.mark.parametrize("seed", SEEDS)
def test_mish_gradient(seed):
    rng = RngState(seed)
    x = randn(rng, 40)
    w = randn(rng, 40)
    analytic = ops.mish_backward(w, x)
    err = finite_diff_check(lambda v: float(np.sum(ops.mish(v) * w)), analytic, x)
    assert err < 1e-6


@pytest.mark.parametrize("seed", SEEDS)
def test_scc_loss_gradient(seed):
    rng = RngState(seed)
    z = randn(rng, 7)
    idx = seed % 7
    analytic = ops.scc_loss_backward(z, idx)
    err = finite_diff_check(lambda v: ops.scc_loss(v, idx), analytic, z)
    assert err < TOL


@pytest.mark.parametrize("seed", SEEDS)
@pytest.mark.parametrize("stride,padding", [(1, "valid"), (2, "valid"), (1, "same")])
def test_conv2d_gradients(seed, stride, padding):
    rng = RngState(1000 * stride + seed)
    x = randn(rng, 5, 5, 2)
    k = randn(rng, 3, 3, 2, 3)
    b = randn(rng, 3)
    y = ops.conv2d(x, k, b, stride, padding)
    w = randn(rng, *y.shape)
    dx, dk, db = ops.conv2d_backward(w, x, k, stride, padding)

    err_x = finite_diff_check(lambda v: float(np.sum(ops.conv2d(v, k, b, stride, padding) * w)),
                              dx, x)
    err_k = finite_diff_check(lambda v: float(np.sum(ops.conv2d(x, v, b, stride, padding) * w)),
                              dk, k)
    err_b = finite_diff_check(lambda v: float(np.sum(ops.conv2d(x, k, v, stride, padding) * w)),
                              db, b)
    assert max(err_x, err_k, err_b) < TOL


@pytest.mark.parametrize("seed", SEEDS)
def test_maxpool_gradient(seed):
    rng = RngState(seed)
    x = separated(rng, 7, 7, 2)
    y = ops.maxpool2d(x, 3, 2)
    w = randn(rng, *y.shape)
    dx = ops.maxpool2d_backward(w, x, 3, 2)
    err = finite_diff_check(lambda v: float(np.sum(ops.maxpool2d(v, 3, 2) * w)), dx, x)
    assert err < TOL


@pytest.mark.parametrize("seed", SEEDS)
def test_global_avg_pool_gradient(seed):
    rng = RngState(seed)
    x = randn(rng, 4, 5, 3)
    w = randn(rng, 3)
    dx = ops.global_avg_pool_backward(w, x.shape)
    err = finite_diff_check(lambda v: float(np.sum(ops.global_avg_pool(v) * w)), dx, x)
    assert err < 1e-8  # linear op


@pytest.mark.parametrize("seed", SEEDS)
def test_dropout_gradient_with_frozen_mask(seed):
    rng = RngState(seed)
    x = randn(rng, 30)
    mask = ops.dropout_mask(x.shape, 0.5, RngState(seed + 999), dtype=np.float64)
    w = randn(rng, 30)
    # with the mask frozen, dropout is elementwise linear
    err = finite_diff_check(lambda v: float(np.sum(v * mask * w)), mask * w, x)
    assert err < 1e-8


@pytest.mark.parametrize("seed", SEEDS)
def test_dense_gradients(seed):
    rng = RngState(seed)
    layer = Dense(6, 4, rng=rng, dtype=np.float64)
    x = randn(rng, 6)
    w = randn(rng, 4)

    layer.forward(x, train=True)
    dx = layer.backward(w)
    dW, db = layer.grads

    def value():
        return float(np.sum(layer.forward(x, train=False) * w))

    err_x = finite_diff_check(lambda v: float(np.sum(layer.forward(v, train=False) * w)), dx, x)
    err_W = finite_diff_check(param_scalar_fn(layer.weights, value), dW, layer.weights.copy())
    err_b = finite_diff_check(param_scalar_fn(layer.bias, value), db, layer.bias.copy())
    assert max(err_x, err_W, err_b) < TOL


@pytest.mark.parametrize("seed", SEEDS)
def test_fire_module_composite_gradients(seed):
    rng = RngState(seed)
    fire = Fire(3, 2, 3, rng=rng, dtype=np.float64)
    x = randn(rng, 6, 6, 3)
    y = fire.forward(x, train=True)
    w = randn(rng, *y.shape)
    dx = fire.backward(w)
    param_grads = list(fire.grads)

    def value():
        return float(np.sum(fire.forward(x, train=False) * w))

    err = finite_diff_check(lambda v: float(np.sum(fire.forward(v, train=False) * w)), dx, x)
    for p, g in zip(fire.params, param_grads):
        err = max(err, finite_diff_check(param_scalar_fn(p, value), g, p.copy()))
    assert err < TOL
