"""Central-difference verification of every differentiable op, plus the
optimizer contracts."""

import numpy as np
import pytest

from ssmdenoise.blocks import (Conv3dWeights, conv3d, init_residual_block,
                               instance_norm, residual_block, upsample_spatial)
from ssmdenoise.model import forward, init_model, parameters
from ssmdenoise.optim import Adam, clip_grad_norm, grad_check, grad_check_sampled
from ssmdenoise.rng import Rng
from ssmdenoise.scan import build_permutation
from ssmdenoise.ssm import (bidirectional_ssm_layer, causal_conv1d,
                            init_bidirectional_layer, init_selective_ssm,
                            layer_norm, selective_scan)
from ssmdenoise.tensor import Tensor, gather, linear, scatter
from tests.test_model import tiny_config

SEEDS = range(5)
TOL = 1e-4


def t64(rng, shape, scale=1.0):
    return Tensor(rng.normal(size=shape) * scale, requires_grad=True)


@pytest.mark.parametrize("seed", SEEDS)
def test_grad_elementwise_and_reductions(seed):
    rng = Rng(seed)

    def fn(ts):
        a, b = ts
        return ((a * b + a / (b * b + 2.0) - b).square().sum()
                + (a + b).mean() + a.amax())

    err = grad_check(fn, [t64(rng, (3, 4)), t64(rng, (3, 4))])
    assert err < TOL


@pytest.mark.parametrize("seed", SEEDS)
def test_grad_activations(seed):
    rng = Rng(seed + 10)

    def fn(ts):
        (x,) = ts
        return (x.sigmoid().sum() + x.silu().sum() + x.softplus().sum()
                + x.exp().mean() + (x.square() + 0.5).sqrt().sum())

    err = grad_check(fn, [t64(rng, (2, 5), 0.8)])
    assert err < TOL


@pytest.mark.parametrize("seed", SEEDS)
def test_grad_leaky_relu_away_from_kink(seed):
    rng = Rng(seed + 20)
    x = rng.normal(size=(3, 3))
    x = np.where(np.abs(x) < 0.05, 0.5, x)  # resample policy: keep off the kink

    def fn(ts):
        return ts[0].leaky_relu(0.01).square().sum()

    err = grad_check(fn, [Tensor(x, requires_grad=True)], kink_margin=1e-3)
    assert err < TOL


@pytest.mark.parametrize("seed", SEEDS)
def test_grad_linear_matmul(seed):
    rng = Rng(seed + 30)

    def fn(ts):
        x, w, b = ts
        return linear(x, w, b).silu().square().sum()

    err = grad_check(fn, [t64(rng, (2, 4, 3)), t64(rng, (3, 5)), t64(rng, (5,))])
    assert err < TOL


@pytest.mark.parametrize("seed", SEEDS)
def test_grad_gather_scatter(seed):
    rng = Rng(seed + 40)
    perm = np.arange(12)
    rng.shuffle(perm)

    def fn(ts):
        x, v = ts
        g = gather(x, perm)
        s = scatter(x, perm, v)
        return (g * g).sum() + s.square().sum()

    err = grad_check(fn, [t64(rng, (3, 4)), t64(rng, (12,))])
    assert err < TOL


def test_gather_scatter_gradient_is_permutation_transpose():
    # against the dense Jacobian on a 6-element permutation
    perm = np.array([3, 0, 5, 1, 4, 2])
    x = Tensor(Rng(0).normal(size=6), requires_grad=True)
    y = gather(x, perm)
    seedv = Rng(1).normal(size=6)
    y.backward(seed=seedv)
    J = np.zeros((6, 6))
    for i, p in enumerate(perm):
        J[i, p] = 1.0
    assert np.max(np.abs(x.grad - J.T @ seedv)) == 0.0


@pytest.mark.parametrize("seed", SEEDS)
def test_grad_conv3d(seed):
    rng = Rng(seed + 50)
    x = t64(rng, (2, 2, 3, 4, 4), 0.5)
    k = t64(rng, (2, 2, 3, 3, 3), 0.3)
    b = t64(rng, (2,))

    def fn(ts):
        xx, kk, bb = ts
        w = Conv3dWeights(kernel=kk, bias=bb, stride=(1, 1, 1))
        return conv3d(w, xx).square().sum()

    err = grad_check_sampled(fn, [x, k, b], Rng(seed), n_samples=40)
    assert err < TOL


@pytest.mark.parametrize("seed", SEEDS)
def test_grad_strided_conv3d(seed):
    rng = Rng(seed + 60)
    x = t64(rng, (1, 2, 3, 4, 4), 0.5)
    k = t64(rng, (3, 2, 3, 3, 3), 0.3)
    b = t64(rng, (3,))

    def fn(ts):
        xx, kk, bb = ts
        w = Conv3dWeights(kernel=kk, bias=bb, stride=(1, 2, 2))
        return conv3d(w, xx).square().sum()

    err = grad_check_sampled(fn, [x, k, b], Rng(seed), n_samples=40)
    assert err < TOL


@pytest.mark.parametrize("seed", SEEDS)
def test_grad_instance_norm(seed):
    rng = Rng(seed + 70)
    # project onto a fixed random tensor: a plain sum of squares of a
    # normalized tensor is nearly independent of the input, which makes
    # finite differences uninformative
    c = Tensor(rng.normal(size=(2, 2, 3, 3, 1)))

    def fn(ts):
        x, w, b = ts
        return (instance_norm(x, w, b) * c).square().sum()

    err = grad_check(fn, [t64(rng, (2, 2, 3, 3, 1)), t64(rng, (2,)), t64(rng, (2,))])
    assert err < TOL


@pytest.mark.parametrize("seed", SEEDS)
def test_grad_layer_norm(seed):
    rng = Rng(seed + 80)

    def fn(ts):
        x, w, b = ts
        return layer_norm(x, w, b).square().sum()

    err = grad_check(fn, [t64(rng, (2, 3, 4)), t64(rng, (4,)), t64(rng, (4,))])
    assert err < TOL


@pytest.mark.parametrize("seed", SEEDS)
def test_grad_upsample(seed):
    rng = Rng(seed + 90)

    def fn(ts):
        return upsample_spatial(ts[0]).square().sum()

    err = grad_check(fn, [t64(rng, (1, 2, 2, 3, 3))])
    assert err < TOL


@pytest.mark.parametrize("seed", SEEDS)
def test_grad_causal_conv1d(seed):
    rng = Rng(seed + 100)

    def fn(ts):
        x, w, b = ts
        return causal_conv1d(x, w, b).square().sum()

    err = grad_check(fn, [t64(rng, (2, 5, 3)), t64(rng, (3, 4)), t64(rng, (3,))])
    assert err < TOL


@pytest.mark.parametrize("seed", SEEDS)
def test_grad_selective_scan(seed):
    rng = Rng(seed + 110)
    w = init_selective_ssm(3, 4, rng, dtype=np.float64)
    x = t64(rng, (1, 6, 3), 0.7)
    params = [x, w.A_log, w.B_w, w.B_b, w.C_w, w.C_b, w.dt_w, w.dt_b]

    def fn(ts):
        return selective_scan(w, ts[0]).square().sum()

    err = grad_check(fn, params)
    assert err < TOL


@pytest.mark.parametrize("seed", SEEDS)
def test_grad_residual_block(seed):
    rng = Rng(seed + 120)
    w = init_residual_block(2, rng, dtype=np.float64)
    x = t64(rng, (1, 2, 2, 3, 3), 0.6)

    def fn(ts):
        return residual_block(w, ts[0]).square().sum()

    err = grad_check_sampled(fn, [x, w.conv.kernel, w.conv.bias, w.norm_w, w.norm_b],
                             Rng(seed), n_samples=40)
    assert err < TOL


@pytest.mark.parametrize("seed", SEEDS)
def test_grad_bidirectional_layer(seed):
    rng = Rng(seed + 130)
    w = init_bidirectional_layer(2, 3, rng, dtype=np.float64)
    w.out_w.data = rng.normal(size=w.out_w.shape) * 0.3  # un-zero for a live path
    p = build_permutation("RCB", (2, 2, 3))
    x = t64(rng, (1, 2, 2, 2, 3), 0.6)
    all_params = [x, w.norm_w, w.norm_b, w.gate_w, w.gate_b, w.val_w, w.val_b,
                  w.conv_f_w, w.conv_f_b, w.conv_b_w, w.conv_b_b, w.out_w, w.out_b,
                  w.ssm_f.A_log, w.ssm_f.B_w, w.ssm_f.C_w, w.ssm_f.dt_b,
                  w.ssm_b.A_log, w.ssm_b.B_w, w.ssm_b.C_w, w.ssm_b.dt_b]

    def fn(ts):
        return bidirectional_ssm_layer(w, ts[0], p).square().sum()

    err = grad_check_sampled(fn, all_params, Rng(seed), n_samples=50)
    assert err < TOL


def test_grad_full_tiny_network():
    cfg = tiny_config()
    mw = init_model(cfg, seed=0, dtype=np.float64)
    # give the zero-initialized maps signal so their gradients are nontrivial
    rng = Rng(77)
    mw.reconstructor.kernel.data = rng.normal(size=mw.reconstructor.kernel.shape) * 0.1
    for blk in mw.blocks:
        blk.layer.out_w.data = rng.normal(size=blk.layer.out_w.shape) * 0.1
    x = Tensor(rng.uniform(0.2, 0.8, size=(1, 1, 4, 8, 8)), requires_grad=True)

    def fn(ts):
        return forward(mw, ts[0]).square().sum()

    # eps=1e-3: the loss magnitude (~60) makes smaller steps vanish into
    # float64 cancellation noise for low-magnitude gradient coordinates
    err = grad_check_sampled(fn, [x] + parameters(mw), Rng(1), n_samples=50, eps=1e-3)
    assert err < 1e-3


# -- optimizer -----------------------------------------------------------------


def test_adam_zero_gradient_noop():
    p = Tensor(np.float64([1.0, 2.0]), requires_grad=True)
    opt = Adam([p], lr=0.01)
    p.grad = np.zeros(2)
    opt.step()
    assert np.array_equal(p.data, [1.0, 2.0])
    assert opt.step_count == 1


def test_adam_first_step_magnitude():
    p = Tensor(np.float64([0.0]), requires_grad=True)
    opt = Adam([p], lr=0.01)
    p.grad = np.float64([3.7])
    opt.step()
    # bias-corrected first step moves by ~lr regardless of gradient scale
    assert abs(abs(p.data[0]) - 0.01) < 1e-6


def test_milestone_schedule():
    opt = Adam([], lr=3e-4, milestones=(20, 35), factor=0.5)
    seq = []
    for epoch in (0, 19, 20, 34, 35, 36, 44):
        opt.set_epoch(epoch)
        seq.append(opt.lr)
    assert np.allclose(seq, [3e-4, 3e-4, 1.5e-4, 1.5e-4, 7.5e-5, 7.5e-5, 7.5e-5])


def test_adam_decreases_convex_quadratic():
    a = np.float64([1.0, -2.0, 0.5])
    p = Tensor(np.zeros(3), requires_grad=True)
    opt = Adam([p], lr=0.1)
    loss0 = 0.5 * ((p.data - a) ** 2).sum()
    p.grad = p.data - a
    opt.step()
    loss1 = 0.5 * ((p.data - a) ** 2).sum()
    assert loss1 < loss0


def test_clip_grad_norm():
    p1 = Tensor(np.float64([0.0]), requires_grad=True)
    p2 = Tensor(np.float64([0.0]), requires_grad=True)
    p1.grad = np.float64([3.0])
    p2.grad = np.float64([4.0])
    norm = clip_grad_norm([p1, p2], 1.0)
    assert abs(norm - 5.0) < 1e-12
    assert abs(np.sqrt(p1.grad[0] ** 2 + p2.grad[0] ** 2) - 1.0) < 1e-12
