import math

import numpy as np
import pytest

from ppmide.grid import GridDataset, build_quadrature
from ppmide.kernels import Params, Xi, xi
from ppmide.losses import (bregman_divergence, loglik, loss_mide, loss_mide_literal, penalized_objective,
                           score_mide, score_mle)

from conftest import random_dataset, random_params


def central_grad(f, theta, h=1e-5):
    g = np.zeros_like(theta)
    for k in range(len(theta)):
        e = np.zeros_like(theta)
        e[k] = h
        g[k] = (f(theta + e) - f(theta - e)) / (2 * h)
    return g


def one_node(d, w, lam):
    ds = GridDataset((0,), [d], np.zeros((1, 0)), np.zeros((1, 1)), area_total=w)
    beta0 = math.log(lam) + math.log(2.0)  # detection is 1/2 at alpha = 0
    return build_quadrature(ds), Params([beta0], [0.0])


def test_loglik_single_node():
    quad, params = one_node(1, 1.0, 1.0)
    assert loglik(params, quad) == pytest.approx(-1.0, abs=1e-15)


def test_loglik_decreases_when_intensity_doubles_at_empty_node():
    quad, params = one_node(0, 1.0, 1.0)
    doubled = Params([params.beta[0] + math.log(2.0)], [0.0])
    assert loglik(doubled, quad) < loglik(params, quad)


def test_loss_mide_single_node():
    quad, params = one_node(0, 1.0, 1.0)
    expected = -(math.log(2.0) - 1.0)
    assert loss_mide(params, quad, 1.0) == pytest.approx(expected, abs=1e-15)
    assert loss_mide(params, quad, 1.0) == pytest.approx(0.30685, abs=1e-5)
    assert loss_mide_literal(params, quad, 1.0) == pytest.approx(expected, abs=1e-15)


def test_closed_form_loss_matches_literal_generator_form(rng):
    for _ in range(30):
        ds = random_dataset(rng, n=40)
        quad = build_quadrature(ds)
        params = random_params(rng)
        tau = float(np.exp(rng.uniform(-2.5, 3.5)))
        a = loss_mide(params, quad, tau)
        b = loss_mide_literal(params, quad, tau)
        assert a == pytest.approx(b, rel=1e-10, abs=1e-10)


def test_loss_mide_dispatches_to_mle():
    quad, params = one_node(1, 1.0, 0.7)
    assert loss_mide(params, quad, math.inf) == -loglik(params, quad)


def test_loss_mide_continuity_in_intensity_shift(rng):
    ds = random_dataset(rng, n=30)
    quad = build_quadrature(ds)
    params = random_params(rng)
    vals = []
    for eps in (1e-3, 1e-6, 1e-9):
        moved = Params(params.beta + np.r_[eps, 0, 0], params.alpha)
        vals.append(abs(loss_mide(moved, quad, 2.0) - loss_mide(params, quad, 2.0)))
    assert vals[0] > vals[1] > vals[2]


def test_loss_mide_approaches_negative_loglik_up_to_constant(rng):
    ds = random_dataset(rng, n=20)
    quad = build_quadrature(ds)
    p1, p2 = random_params(rng), random_params(rng)
    tau = 1e6
    diff1 = loss_mide(p1, quad, tau) + loglik(p1, quad)
    diff2 = loss_mide(p2, quad, tau) + loglik(p2, quad)
    assert abs(diff1 - diff2) < 1e-3


def test_score_mle_gradient_matches_fd(rng):
    for _ in range(10):
        ds = random_dataset(rng, n=40)
        quad = build_quadrature(ds)
        params = random_params(rng)
        f = lambda th: loglik(Params.from_theta(th, 3), quad)
        fd = central_grad(f, params.theta)
        np.testing.assert_allclose(score_mle(params, quad).flat(), fd, rtol=1e-6, atol=1e-6)


def test_score_mle_zero_when_residuals_vanish():
    # one cell per node with d = w * lam: choose w so that this holds exactly
    x = np.array([[0.3], [-0.2], [1.1]])
    z = np.array([[0.5], [0.1], [-0.4]])
    ds = GridDataset((0, 1, 2), [1, 1, 1], x, z, area_total=3.0)
    quad = build_quadrature(ds)
    params = Params([0.0, 0.0], [0.0])
    # lam = 0.5 everywhere, so weights of 2 make every residual zero
    quad = type(quad)(quad.d, np.full(3, 2.0), quad.x, quad.z, quad.origin, quad.cell_ids,
                      quad.area_total, quad.m, quad.m_n, quad.n_cells)
    np.testing.assert_allclose(score_mle(params, quad).flat(), 0.0, atol=1e-15)


def test_score_mide_sign_is_negative_loss_gradient(rng):
    for _ in range(20):
        ds = random_dataset(rng, n=40)
        quad = build_quadrature(ds)
        params = random_params(rng)
        tau = float(np.exp(rng.uniform(-2, 3)))
        f = lambda th: loss_mide(Params.from_theta(th, 3), quad, tau)
        fd = central_grad(f, params.theta)
        u = score_mide(params, quad, tau).flat()
        np.testing.assert_allclose(-u, fd, rtol=1e-6, atol=1e-7)


def test_score_mide_inf_is_score_mle(small_quad, rng):
    _, quad = small_quad
    params = random_params(rng)
    a = score_mide(params, quad, math.inf)
    b = score_mle(params, quad)
    np.testing.assert_array_equal(a.u_beta, b.u_beta)
    np.testing.assert_array_equal(a.u_alpha, b.u_alpha)


def test_tiny_intensity_node_gets_tiny_weight():
    quad, params = one_node(1, 1.0, 1e-12)
    u = score_mide(params, quad, 1.0)
    assert abs(u.u_beta[0]) < 1e-11


def test_penalized_objective(small_quad, rng):
    _, quad = small_quad
    params = random_params(rng)
    assert penalized_objective(params, quad, 2.0, 0.0) == -loss_mide(params, quad, 2.0)
    flat = Params(np.r_[params.beta[0], 0.0, 0.0], params.alpha)
    assert penalized_objective(flat, quad, 2.0, 5.0) == penalized_objective(flat, quad, 2.0, 0.0)
    vals = [penalized_objective(params, quad, 2.0, phi) for phi in (0.0, 0.1, 1.0, 10.0)]
    assert all(a >= b for a, b in zip(vals, vals[1:]))
    with pytest.raises(ValueError):
        penalized_objective(params, quad, 2.0, -1.0)


def test_score_unbiased_under_the_model():
    """Average score at the true parameter is zero within Monte-Carlo error."""
    rng = np.random.default_rng(7)
    n = 200
    x = rng.standard_normal((n, 2))
    z = rng.standard_normal((n, 1))
    truth = Params([0.2, 0.6, -0.4], [0.8])
    lam = np.exp(truth.beta[0] + x @ truth.beta[1:]) / (1 + np.exp(-(z @ truth.alpha)))
    for tau in (0.5, 5.0, math.inf):
        scores = []
        for _ in range(500):
            ds = GridDataset(tuple(range(n)), rng.poisson(lam), x, z)
            scores.append(score_mide(truth, build_quadrature(ds), tau).flat())
        scores = np.array(scores)
        se = scores.std(axis=0, ddof=1) / math.sqrt(len(scores))
        assert np.all(np.abs(scores.mean(axis=0)) < 3 * se), (tau, scores.mean(axis=0), se)


def test_bregman_zero_iff_equal(rng):
    lam = rng.exponential(size=50) + 0.01
    assert bregman_divergence(lam, lam, 2.0) == 0.0
    for _ in range(100):
        other = lam.copy()
        k = rng.integers(50)
        other[k] += rng.choice([-1, 1]) * max(1e-3, 1e-3 * other[k]) if other[k] > 2e-3 else 1e-3
        assert bregman_divergence(other, lam, 2.0) > 0.0


def test_bregman_nonnegative(rng):
    for _ in range(1000):
        a, b = rng.exponential(size=(2, 5)) + 1e-6
        tau = float(np.exp(rng.uniform(-2, 3)))
        assert bregman_divergence(a, b, tau, cell_area=0.5) >= 0.0


def test_bregman_kl_generator_gives_extended_kl(rng):
    gen = (lambda t: t * np.log(t) - t, np.log)
    for _ in range(20):
        a, b = rng.exponential(size=(2, 30)) + 1e-3
        kl = np.sum(a * (np.log(a) - np.log(b)) - a + b)
        assert bregman_divergence(a, b, 1.0, 1.0, generator=gen) == pytest.approx(kl, rel=1e-8, abs=1e-12)


def test_bregman_rejects_bad_input():
    with pytest.raises(ValueError):
        bregman_divergence([1.0, 0.0], [1.0, 1.0], 1.0)
    with pytest.raises(ValueError):
        bregman_divergence([1.0], [1.0, 1.0], 1.0)


def test_bregman_uses_generator_pair():
    a, b = np.array([2.0]), np.array([1.0])
    tau = 1.5
    manual = Xi(2.0, tau) - Xi(1.0, tau) - xi(1.0, tau) * 1.0
    assert bregman_divergence(a, b, tau, cell_area=3.0) == pytest.approx(3.0 * manual, rel=1e-14)
