import math

import numpy as np
import pytest
import torch

from conftest import fd_check
from oracles import conv2d_ref, max_pool_ref, warp_ref
from vodepth import tensor as T


def _t(a):
    return torch.as_tensor(np.asarray(a, dtype=np.float64))


@pytest.mark.parametrize("stride,pad,k", [(1, 0, 3), (1, 1, 3), (2, 1, 3), (1, 2, 5), (1, 0, 1)])
def test_conv2d_matches_loops(rng, stride, pad, k):
    x = rng.standard_normal((2, 3, 7, 6))
    w = rng.standard_normal((4, 3, k, k))
    b = rng.standard_normal(4)
    got = T.conv2d(_t(x), _t(w), _t(b), stride=stride, padding=pad).numpy()
    np.testing.assert_allclose(got, conv2d_ref(x, w, b, stride, pad), atol=1e-12)


def test_conv2d_is_cross_correlation():
    # a kernel with a single 1 in the top-left picks the up-left neighbour
    x = torch.arange(16, dtype=torch.float64).view(1, 1, 4, 4)
    w = torch.zeros(1, 1, 3, 3, dtype=torch.float64)
    w[0, 0, 0, 0] = 1
    y = T.conv2d(x, w, padding=1)
    assert y[0, 0, 2, 2] == x[0, 0, 1, 1]


def test_conv2d_channel_mismatch():
    with pytest.raises(ValueError, match="channel mismatch"):
        T.conv2d(torch.zeros(1, 2, 4, 4), torch.zeros(1, 3, 3, 3))


@pytest.mark.parametrize("k,stride,pad", [(3, 1, 1), (2, 2, 0), (5, 1, 2), (3, 2, 1), (3, 1, 2)])
def test_max_pool_matches_loops(rng, k, stride, pad):
    x = rng.standard_normal((2, 2, 7, 8))
    got = T.max_pool2d(_t(x), k, stride, pad).numpy()
    np.testing.assert_array_equal(got, max_pool_ref(x, k, stride, pad))


def test_max_pool_tie_goes_to_first_in_scan_order():
    x = torch.tensor([[[[1.0, 5.0], [5.0, 5.0]]]], dtype=torch.float64, requires_grad=True)
    T.max_pool2d(x, 2, stride=2).sum().backward()
    expected = torch.tensor([[[[0.0, 1.0], [0.0, 0.0]]]], dtype=torch.float64)
    assert torch.equal(x.grad, expected)


def test_warp_matches_loops(rng):
    src = rng.random((2, 3, 5, 9))
    disp = rng.uniform(0, 4, (2, 1, 5, 9))
    for direction in (-1, 1):
        got = T.bilinear_warp(_t(src), _t(disp), direction).numpy()
        np.testing.assert_allclose(got, warp_ref(src, disp, direction), atol=1e-12)


def test_warp_zero_disparity_is_identity(rng):
    src = _t(rng.random((1, 3, 4, 6)))
    out = T.bilinear_warp(src, torch.zeros(1, 1, 4, 6, dtype=torch.float64), -1)
    assert torch.equal(out, src)


def test_warp_clamps_to_border():
    src = torch.arange(5, dtype=torch.float64).view(1, 1, 1, 5)
    out = T.bilinear_warp(src, torch.full((1, 1, 1, 5), 100.0, dtype=torch.float64), -1)
    assert torch.equal(out, torch.zeros_like(out))


def test_warp_rejects_bad_direction():
    with pytest.raises(ValueError):
        T.bilinear_warp(torch.zeros(1, 1, 2, 2), torch.zeros(1, 1, 2, 2), 0)


def test_warp_gradients_away_from_knots(rng):
    src = _t(rng.random((1, 2, 4, 7)))
    # keep x - d inside (0, W - 1) and away from integer coordinates
    cols = torch.arange(7, dtype=torch.float64)
    d = (torch.rand(1, 1, 4, 7, dtype=torch.float64) * 0.6 + 0.2) + (cols > 2).double() * 2
    d = torch.minimum(d, cols + 0.5).clamp(min=0.2)
    d = torch.where(cols == 0, torch.full_like(d, -0.5), d)
    assert fd_check(lambda s, dd: (T.bilinear_warp(s, dd, -1) ** 2).sum(), src, d) < 1e-4


def test_upsample_and_downsample_shapes(rng):
    x = _t(rng.random((1, 2, 4, 6)))
    assert T.upsample_bilinear_x2(x).shape == (1, 2, 8, 12)
    assert T.downsample_avg_x2(x).shape == (1, 2, 2, 3)
    with pytest.raises(ValueError):
        T.downsample_avg_x2(_t(rng.random((1, 1, 3, 4))))


def test_upsample_constant_is_constant():
    x = torch.full((1, 1, 3, 3), 2.5, dtype=torch.float64)
    assert torch.allclose(T.upsample_bilinear_x2(x), torch.full((1, 1, 6, 6), 2.5, dtype=torch.float64))


def test_mean_pool3x3_counts_only_inside():
    x = torch.ones(1, 1, 4, 5, dtype=torch.float64) * 3
    assert torch.allclose(T.mean_pool3x3(x), x)
    x = torch.arange(9, dtype=torch.float64).view(1, 1, 3, 3)
    assert T.mean_pool3x3(x)[0, 0, 0, 0].item() == pytest.approx((0 + 1 + 3 + 4) / 4)


def test_concat_channels_checks_shapes():
    a, b = torch.zeros(1, 1, 2, 2), torch.zeros(1, 2, 2, 2)
    assert T.concat_channels([a, b]).shape == (1, 3, 2, 2)
    with pytest.raises(ValueError):
        T.concat_channels([a, torch.zeros(1, 1, 3, 2)])


def test_backward_needs_scalar():
    with pytest.raises(ValueError):
        T.backward(torch.zeros(2, requires_grad=True))


def test_backward_rejects_non_finite():
    x = torch.tensor([0.0], requires_grad=True)
    with pytest.raises(FloatingPointError):
        T.backward((x / 0.0).sum())


def test_finite_checks_context():
    x = torch.tensor([1e308], dtype=torch.float64)
    T.mul(x, x)  # silent by default
    with T.finite_checks():
        with pytest.raises(FloatingPointError, match="mul"):
            T.mul(x, x)
    T.mul(x, x)


def test_parameter_has_zero_grad():
    p = T.parameter(np.ones((2, 2)))
    assert torch.equal(p.grad, torch.zeros(2, 2, dtype=torch.float64))


def test_zero_grad_resets():
    p = T.parameter(torch.ones(3, dtype=torch.float64))
    (p * 2).sum().backward()
    assert p.grad.abs().sum() > 0
    T.zero_grad([p])
    assert p.grad.abs().sum() == 0


def test_internal_gradient_check_agrees(rng):
    x = _t(rng.standard_normal((1, 1, 4, 4))).requires_grad_(True)
    w = _t(rng.standard_normal((2, 1, 3, 3))).requires_grad_(True)
    err = T.gradient_check(lambda: T.conv2d(x, w, padding=1).pow(2).sum(), [x, w])
    assert err < 1e-6


ELEMENTWISE = {
    "add": lambda a, b: T.add(a, b),
    "sub": lambda a, b: T.sub(a, b),
    "mul": lambda a, b: T.mul(a, b),
}


@pytest.mark.parametrize("name", sorted(ELEMENTWISE))
def test_binary_gradients(rng, name):
    a, b = _t(rng.standard_normal((1, 2, 4, 5))), _t(rng.standard_normal((1, 2, 4, 5)))
    assert fd_check(lambda x, y: (ELEMENTWISE[name](x, y) ** 2).sum(), a, b) < 1e-4


@pytest.mark.parametrize("fn", [T.exp, T.sigmoid, T.elu, T.absolute, T.upsample_bilinear_x2,
                                T.downsample_avg_x2, T.mean_pool3x3])
def test_unary_gradients(rng, fn):
    # magnitudes bounded away from 0 keep |x| and ELU off their kinks
    x = _t(rng.uniform(0.2, 1.0, (1, 2, 4, 6)) * rng.choice([-1, 1], (1, 2, 4, 6)))
    assert fd_check(lambda t: (fn(t) ** 2).sum() + T.mean(fn(t)), x) < 1e-4


def test_conv_and_pool_gradients(rng):
    x = _t(rng.standard_normal((1, 2, 6, 6)))
    w = _t(rng.standard_normal((3, 2, 3, 3)))
    b = _t(rng.standard_normal(3))
    assert fd_check(lambda a, k, c: (T.conv2d(a, k, c, stride=2, padding=1) ** 2).sum(), x, w, b) < 1e-4
    y = _t(rng.permutation(72).reshape(1, 2, 6, 6) / 10.0)  # distinct values, no ties
    assert fd_check(lambda a: (T.max_pool2d(a, 3, 1, 1) ** 2).sum(), y) < 1e-4


def test_concat_total_gradients(rng):
    a, b = _t(rng.standard_normal((1, 1, 4, 4))), _t(rng.standard_normal((1, 2, 4, 4)))
    assert fd_check(lambda x, y: T.total(T.concat_channels([x, y]) ** 3), a, b) < 1e-4


def test_sigmoid_extremes_are_finite():
    x = torch.tensor([-800.0, 800.0], dtype=torch.float64)
    assert torch.isfinite(T.sigmoid(x)).all()
    assert math.isclose(T.sigmoid(x)[1].item(), 1.0)
