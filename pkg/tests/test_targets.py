import numpy as np
import pytest

from conftest import fd_sweep
from repulsive_ensembles.errors import ShapeMismatch
from repulsive_ensembles.nn import LinearModel, MlpArchitecture
from repulsive_ensembles.numerics import finite_diff_grad, make_rng
from repulsive_ensembles.targets import (BnnPosteriorTarget, ConjugateLinearRegression, FlatTarget,
                                         FunnelTarget, GaussianMixtureTarget, GaussianTarget)


def random_spd(rng, d):
    A = rng.standard_normal((d, d))
    return A @ A.T + 0.5 * np.eye(d)


class TestGaussian:
    def test_mode(self):
        np.testing.assert_array_equal(GaussianTarget(np.zeros(2), np.eye(2)).grad_log_prob(np.zeros(2)), 0)

    def test_closed_form(self):
        g = GaussianTarget(np.zeros(2), np.eye(2)).grad_log_prob(np.array([1.0, 0.0]))
        np.testing.assert_allclose(g, [-1.0, 0.0])

    def test_random_spd_finite_difference(self, rng):
        t = GaussianTarget(rng.standard_normal(3), random_spd(rng, 3))
        pts = rng.standard_normal((100, 3))
        assert fd_sweep(t.log_prob, t.grad_log_prob, pts) < 1e-6

    def test_batched_matches_single(self, rng):
        t = GaussianTarget([2.0, -1.0], np.diag([1.0, 0.5]))
        X = rng.standard_normal((5, 2))
        np.testing.assert_allclose(t.grad_log_prob(X)[3], t.grad_log_prob(X[3]))
        np.testing.assert_allclose(t.log_prob(X)[2], t.log_prob(X[2]))

    def test_rejects_bad_covariance(self):
        with pytest.raises(ValueError):
            GaussianTarget([0.0, 0.0], [[1.0, 2.0], [2.0, 1.0]])
        with pytest.raises(ShapeMismatch):
            GaussianTarget([0.0], np.eye(2))

    def test_sample_moments(self):
        t = GaussianTarget([2.0, -1.0], np.diag([1.0, 0.5]))
        S = t.sample(make_rng(0), 20000)
        np.testing.assert_allclose(S.mean(0), [2.0, -1.0], atol=0.03)
        np.testing.assert_allclose(np.cov(S.T), np.diag([1.0, 0.5]), atol=0.04)


class TestFunnel:
    def test_x_symmetry_at_origin(self):
        g = FunnelTarget().grad_log_prob(np.zeros(2))
        assert g[1] == 0.0
        assert g[0] == pytest.approx(-0.5)

    def test_finite_difference_sweep(self, rng):
        t = FunnelTarget(3.0, 2)
        pts = np.c_[rng.uniform(-3, 3, 100), rng.standard_normal((100, 2))]
        assert fd_sweep(t.log_prob, t.grad_log_prob, pts) < 1e-5

    def test_finite_everywhere(self):
        t = FunnelTarget()
        assert np.all(np.isfinite(t.log_prob(np.array([[-30.0, 1e-3], [30.0, 100.0]]))))


def test_mixture_gradient_sweep(rng):
    t = GaussianMixtureTarget([[-2.0], [2.0]], [0.5, 0.7], [0.3, 0.7])
    assert fd_sweep(t.log_prob, t.grad_log_prob, rng.uniform(-4, 4, (100, 1))) < 1e-4


def test_flat_target():
    t = FlatTarget(3)
    np.testing.assert_array_equal(t.grad_log_prob(np.ones((4, 3))), 0)


class TestBnnPosterior:
    def test_zero_weights_prior_gradient(self):
        arch = MlpArchitecture((1, 4, 1))
        t = BnnPosteriorTarget(arch, np.zeros((3, 1)), np.zeros((3, 1)), "gaussian")
        np.testing.assert_array_equal(t.grad_log_prob(np.zeros(arch.n_params)), 0)

    def test_one_datum_conjugate_hand_formula(self):
        x, y, sn, sp, w = 1.7, -0.4, 0.3, 2.0, 0.25
        t = BnnPosteriorTarget(LinearModel(), np.array([[x]]), np.array([[y]]), "gaussian", sn, sp)
        expected = (y - w * x) * x / sn**2 - w / sp**2
        np.testing.assert_allclose(t.grad_log_prob(np.array([w])), [expected], rtol=1e-12)

    @pytest.mark.parametrize("likelihood,activation", [("gaussian", "tanh"), ("categorical", "tanh"),
                                                       ("gaussian", "relu"), ("categorical", "relu")])
    def test_finite_difference_sweep(self, rng, likelihood, activation):
        out = 1 if likelihood == "gaussian" else 3
        arch = MlpArchitecture((2, 5, 4, out), activation, "identity" if out == 1 else "logits")
        X = rng.standard_normal((7, 2))
        y = rng.standard_normal((7, 1)) if out == 1 else rng.integers(0, 3, 7)
        t = BnnPosteriorTarget(arch, X, y, likelihood, 0.5, 1.0)
        pts = 0.7 * rng.standard_normal((100, arch.n_params))
        assert fd_sweep(t.log_prob, t.grad_log_prob, pts) < 1e-4

    def test_minibatch_rescaling(self, rng):
        arch = MlpArchitecture((1, 3, 1))
        X = rng.standard_normal((10, 1))
        y = rng.standard_normal((10, 1))
        t = BnnPosteriorTarget(arch, X, y, "gaussian", 0.5, 1.0, batch_size=4)
        w = rng.standard_normal(arch.n_params)
        b = np.array([0, 3, 7, 9])
        full = BnnPosteriorTarget(arch, X[b], y[b], "gaussian", 0.5, 1.0)
        like_b = full.grad_log_prob(w) + w  # strip the prior term
        np.testing.assert_allclose(t.grad_log_prob(w, b) + w, like_b * 10 / 4, rtol=1e-12)

    def test_minibatch_gradient_unbiased(self, rng):
        arch = MlpArchitecture((1, 3, 1))
        X = rng.standard_normal((10, 1))
        y = rng.standard_normal((10, 1))
        t = BnnPosteriorTarget(arch, X, y, "gaussian", 0.5, 1.0, batch_size=3)
        w = rng.standard_normal(arch.n_params)
        draws = np.array([t.grad_log_prob(w, t.sample_batch(rng)) for _ in range(20000)])
        se = draws.std(0) / np.sqrt(len(draws))
        assert np.all(np.abs(draws.mean(0) - t.grad_log_prob(w)) < 5 * se + 1e-12)

    def test_shape_errors(self, rng):
        arch = MlpArchitecture((1, 3, 1))
        t = BnnPosteriorTarget(arch, np.zeros((4, 1)), np.zeros((4, 1)))
        with pytest.raises(ShapeMismatch):
            t.grad_log_prob(np.zeros(arch.n_params + 1))
        with pytest.raises(ShapeMismatch):
            t.grad_log_prob(np.zeros(arch.n_params), np.array([], dtype=int))
        with pytest.raises(ShapeMismatch):
            BnnPosteriorTarget(arch, np.zeros((4, 1)), np.zeros((3, 1)))

    def test_batch_sampling_without_replacement(self, rng):
        arch = MlpArchitecture((1, 3, 1))
        t = BnnPosteriorTarget(arch, np.zeros((10, 1)), np.zeros((10, 1)), batch_size=6)
        b = t.sample_batch(rng)
        assert len(np.unique(b)) == 6


def test_conjugate_posterior_matches_gradient_root(rng):
    X = rng.standard_normal(15)
    y = 0.8 * X + 0.3 * rng.standard_normal(15)
    t = ConjugateLinearRegression(X, y, 0.3, 1.0)
    mean, cov = t.posterior()
    np.testing.assert_allclose(t.grad_log_prob(mean), 0, atol=1e-10)
    H = -np.array([finite_diff_grad(lambda w: t.grad_log_prob(w)[0], mean)])
    np.testing.assert_allclose(np.linalg.inv(H), cov, rtol=1e-6)
