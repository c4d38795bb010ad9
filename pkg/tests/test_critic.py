"""Critic scoring, interpolation and the gradient-penalty estimator."""

import numpy as np
import pytest

from retouch.critic import (
    CriticNet,
    critic_loss,
    gradient_penalty,
    interpolate,
    score,
)
from retouch.image import Image
from retouch.nn import Tensor, matmul, reshape
from oracles import conv2d_loops


class LinearCritic:
    """D(y) = <w, y>; input gradient is w everywhere."""

    def __init__(self, w):
        self.w = Tensor(np.asarray(w, np.float64), requires_grad=True)

    def scores(self, batch):
        x = batch if isinstance(batch, Tensor) else Tensor(np.asarray(batch))
        n = x.data.shape[0]
        flat = reshape(x, (n, x.data.size // n))
        return matmul(flat, reshape(self.w, (self.w.data.size, 1)))

    def params(self):
        return [self.w]


def _unit_field(rng, shape, norm=1.0):
    w = rng.standard_normal(shape)
    return w * (norm / np.linalg.norm(w))


# -- scoring -----------------------------------------------------------------


def test_score_deterministic_and_finite():
    rng = np.random.default_rng(40)
    net = CriticNet(rng)
    img = Image(np.random.default_rng(1).random((64, 64, 3)).astype(np.float32))
    s1, s2 = score(net, img), score(net, img)
    assert s1 == s2 and np.isfinite(s1)


def test_score_zero_final_layer_gives_zero():
    net = CriticNet(np.random.default_rng(41))
    net.fc.w.data[:] = 0.0
    net.fc.b.data[:] = 0.0
    img = Image(np.random.default_rng(2).random((64, 64, 3)).astype(np.float32))
    assert score(net, img) == 0.0


def test_score_rejects_wrong_size():
    net = CriticNet(np.random.default_rng(42))
    with pytest.raises(ValueError, match="64"):
        score(net, np.zeros((32, 32, 3), np.float32))


def test_scores_match_loop_oracle_convs():
    # tiny critic so the loop oracle stays fast
    rng = np.random.default_rng(43)
    net = CriticNet(rng, dtype=np.float64, input_size=8, channels=(4, 6))
    x = rng.random((2, 8, 8, 3))
    got = net.scores(x).data
    h = x
    for conv in net.convs:
        h = conv2d_loops(h, conv.w.data, conv.b.data, stride=2)
        h = np.where(h > 0, h, 0.2 * h)
    flat = h.reshape(2, -1)
    want = flat @ net.fc.w.data + net.fc.b.data
    np.testing.assert_allclose(got, want, atol=1e-5)


def test_critic_architecture_shapes():
    net = CriticNet(np.random.default_rng(44))
    assert [c.w.data.shape for c in net.convs] == [
        (32, 3, 5, 5),
        (64, 32, 5, 5),
        (128, 64, 5, 5),
        (256, 128, 5, 5),
    ]
    assert net.fc.w.data.shape == (4 * 4 * 256, 1)
    out = net.scores(np.zeros((3, 64, 64, 3), np.float32))
    assert out.data.shape == (3, 1)


# -- interpolation -------------------------------------------------------------


def test_interpolate_endpoints_exact():
    rng = np.random.default_rng(45)
    y = Image(rng.random((8, 8, 3)).astype(np.float32))
    yp = Image(rng.random((8, 8, 3)).astype(np.float32))
    np.testing.assert_array_equal(interpolate(y, yp, 1.0).pixels, y.pixels)
    np.testing.assert_array_equal(interpolate(y, yp, 0.0).pixels, yp.pixels)


def test_interpolate_midpoint_and_range():
    y = Image(np.zeros((4, 4, 3), np.float32))
    yp = Image(np.ones((4, 4, 3), np.float32))
    mid = interpolate(y, yp, 0.5)
    np.testing.assert_allclose(mid.pixels, 0.5)
    rng = np.random.default_rng(46)
    a = Image(rng.random((4, 4, 3)).astype(np.float32))
    b = Image(rng.random((4, 4, 3)).astype(np.float32))
    out = interpolate(a, b, 0.3).pixels
    assert out.min() >= 0.0 and out.max() <= 1.0


def test_interpolate_rejects_mismatch_and_bad_eps():
    y = Image(np.zeros((4, 4, 3), np.float32))
    yp = Image(np.zeros((5, 4, 3), np.float32))
    with pytest.raises(ValueError, match="mismatch"):
        interpolate(y, yp, 0.5)
    with pytest.raises(ValueError):
        interpolate(y, y, 1.5)


# -- gradient penalty ------------------------------------------------------------


def test_gp_unit_norm_linear_critic_near_zero():
    rng = np.random.default_rng(47)
    shape = (16, 16, 3)
    net = LinearCritic(_unit_field(rng, shape, 1.0))
    batch = rng.random((4,) + shape)
    est = gradient_penalty(net, batch, rng, n_directions=1000)
    assert est.value < 1e-3
    assert np.abs(est.norms - 1.0).max() < 0.05


def test_gp_norm_three_linear_critic_near_four():
    rng = np.random.default_rng(48)
    shape = (16, 16, 3)
    net = LinearCritic(_unit_field(rng, shape, 3.0))
    batch = rng.random((4,) + shape)
    est = gradient_penalty(net, batch, rng, n_directions=1000)
    assert abs(est.value - 4.0) <= 0.2  # (3-1)^2 within 5%
    assert abs(est.norms.mean() - 3.0) <= 0.06  # unbiased within 2%


def test_gp_zero_critic_is_one():
    rng = np.random.default_rng(49)
    shape = (8, 8, 3)
    net = LinearCritic(np.zeros(shape))
    est = gradient_penalty(net, rng.random((3,) + shape), rng)
    assert abs(est.value - 1.0) < 1e-6
    assert np.isfinite(est.value)


def test_gp_exact_mode_matches_analytic_for_linear():
    rng = np.random.default_rng(50)
    shape = (8, 8, 3)
    net = LinearCritic(_unit_field(rng, shape, 2.5))
    est = gradient_penalty(net, rng.random((3,) + shape), rng, exact=True)
    assert est.term is None
    np.testing.assert_allclose(est.norms, 2.5, atol=1e-9)
    assert abs(est.value - 1.5**2) < 1e-9


def test_gp_fd_estimator_tracks_exact_on_conv_critic():
    rng = np.random.default_rng(51)
    net = CriticNet(rng, dtype=np.float64, input_size=16, channels=(4, 8))
    batch = rng.random((3, 16, 16, 3))
    exact = gradient_penalty(net, batch, rng, exact=True)
    fd = gradient_penalty(net, batch, np.random.default_rng(7), n_directions=600)
    np.testing.assert_allclose(fd.norms, exact.norms, rtol=0.1)


def test_gp_term_backprops_to_weights_single_pass():
    rng = np.random.default_rng(52)
    net = CriticNet(rng, input_size=16, channels=(4, 8))
    for p in net.params():
        p.grad = np.zeros_like(p.data)
    est = gradient_penalty(net, rng.random((2, 16, 16, 3)).astype(np.float32), rng)
    est.term.backward()
    total = sum(float(np.abs(p.grad).sum()) for p in net.params())
    assert np.isfinite(total) and total > 0.0


def test_gp_rejects_empty_batch():
    rng = np.random.default_rng(53)
    net = LinearCritic(np.ones((4, 4, 3)))
    with pytest.raises(ValueError):
        gradient_penalty(net, np.zeros((0, 4, 4, 3)), rng)


def test_gp_nonnegative_and_deterministic_given_rng():
    rng1 = np.random.default_rng(99)
    rng2 = np.random.default_rng(99)
    shape = (8, 8, 3)
    net = LinearCritic(_unit_field(np.random.default_rng(0), shape, 2.0))
    batch = np.random.default_rng(1).random((2,) + shape)
    e1 = gradient_penalty(net, batch, rng1)
    e2 = gradient_penalty(net, batch, rng2)
    assert e1.value == e2.value >= 0.0


# -- critic loss -------------------------------------------------------------------


def test_critic_loss_examples():
    assert float(critic_loss([1.0], [0.0], 0.0, 10.0).data) == pytest.approx(-1.0)
    assert float(critic_loss([0.7, 0.7], [0.7, 0.7], 1.0, 10.0).data) == pytest.approx(10.0)
    assert float(critic_loss([2.0, 0.0], [1.0, 1.0], 0.5, 10.0).data) == pytest.approx(5.0)


def test_critic_loss_decreases_in_real_scores():
    real = Tensor(np.array([[0.5], [0.2]]), requires_grad=True)
    real.grad = np.zeros_like(real.data)
    loss = critic_loss(real, Tensor(np.array([[0.1], [0.3]])), 0.0, 10.0)
    loss.backward()
    assert np.all(real.grad < 0.0)


def test_critic_loss_rejects_empty_or_mismatched():
    with pytest.raises(ValueError, match="empty"):
        critic_loss([], [], 0.0, 10.0)
    with pytest.raises(ValueError, match="differ"):
        critic_loss([1.0, 2.0], [1.0], 0.0, 10.0)
