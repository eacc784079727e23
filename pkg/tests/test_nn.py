import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import rel_error
from repulsive_ensembles.errors import ShapeMismatch
from repulsive_ensembles.kernels import RbfKernel
from repulsive_ensembles.estimators import kde_score
from repulsive_ensembles.nn import (FunctionalPrior, MlpArchitecture, backprop_loss_grad, forward,
                                    functional_prior_score, jacobian_transpose_vec, log_softmax,
                                    output_log_likelihood, sample_prior)
from repulsive_ensembles.numerics import finite_diff_grad, make_rng


def small_arch(out=1, act="tanh"):
    return MlpArchitecture((2, 5, 3, out), act, "identity" if out == 1 else "logits")


def fd_jacobian(arch, w, X):
    """Explicit Jacobian of the flattened outputs, column by column."""
    h = 1e-6
    cols = []
    for k in range(w.size):
        e = np.zeros_like(w)
        e[k] = h
        cols.append((forward(arch, w + e, X) - forward(arch, w - e, X)).ravel() / (2 * h))
    return np.array(cols).T


class TestForward:
    def test_zero_weights(self):
        arch = small_arch()
        np.testing.assert_array_equal(forward(arch, np.zeros(arch.n_params), np.ones((4, 2))), 0)

    def test_hand_evaluation_one_hidden_unit(self):
        arch = MlpArchitecture((1, 1, 1))
        w = np.array([0.5, 0.1, -2.0, 0.3])     # W0, b0, W1, b1
        x = 0.8
        expected = -2.0 * np.tanh(0.5 * x + 0.1) + 0.3
        np.testing.assert_allclose(forward(arch, w, np.array([[x]])), [[expected]], rtol=1e-14)

    def test_batch_consistency(self, rng):
        arch = small_arch(out=2, act="relu")
        w = rng.standard_normal(arch.n_params)
        X = rng.standard_normal((6, 2))
        stacked = np.concatenate([forward(arch, w, X[i:i + 1]) for i in range(6)])
        np.testing.assert_allclose(forward(arch, w, X), stacked, atol=1e-14)

    def test_particle_stack(self, rng):
        arch = small_arch()
        W = rng.standard_normal((4, arch.n_params))
        X = rng.standard_normal((3, 2))
        out = forward(arch, W, X)
        assert out.shape == (4, 3, 1)
        np.testing.assert_allclose(out[2], forward(arch, W[2], X), atol=1e-14)

    def test_shape_mismatch(self):
        arch = small_arch()
        with pytest.raises(ShapeMismatch):
            forward(arch, np.zeros(arch.n_params - 1), np.zeros((1, 2)))
        with pytest.raises(ShapeMismatch):
            forward(arch, np.zeros(arch.n_params), np.zeros((1, 3)))

    def test_invalid_architecture(self):
        with pytest.raises(ValueError):
            MlpArchitecture((2, 1))
        with pytest.raises(ValueError):
            MlpArchitecture((2, 0, 1))
        with pytest.raises(ValueError):
            MlpArchitecture((2, 3, 1), "sigmoid")


class TestBackprop:
    def test_zero_residual(self, rng):
        arch = small_arch()
        w = rng.standard_normal(arch.n_params)
        X = rng.standard_normal((5, 2))
        y = forward(arch, w, X)
        np.testing.assert_allclose(backprop_loss_grad(arch, w, X, y, "gaussian"), 0, atol=1e-14)

    @pytest.mark.parametrize("likelihood", ["gaussian", "categorical"])
    @pytest.mark.parametrize("act", ["tanh", "relu"])
    def test_finite_difference(self, rng, likelihood, act):
        out = 1 if likelihood == "gaussian" else 3
        arch = small_arch(out, act)
        for _ in range(20):
            w = rng.standard_normal(arch.n_params)
            X = rng.standard_normal((4, 2))
            y = rng.standard_normal((4, 1)) if out == 1 else rng.integers(0, 3, 4)
            fd = finite_diff_grad(lambda v: output_log_likelihood(forward(arch, v, X), y, likelihood, 0.7), w)
            assert rel_error(backprop_loss_grad(arch, w, X, y, likelihood, 0.7), fd) < 1e-4

    def test_uniform_logits_hand_formula(self, rng):
        arch = MlpArchitecture((2, 4, 3), "tanh", "logits")
        w = rng.standard_normal(arch.n_params)
        # zero output layer: uniform logits, softmax = 1/3
        for ws, bs, a, b in arch.layer_slices()[-1:]:
            w[ws] = 0.0
            w[bs] = 0.0
        X = rng.standard_normal((3, 2))
        y = np.array([0, 1, 2])
        cot = np.eye(3)[y] - 1.0 / 3.0
        np.testing.assert_allclose(backprop_loss_grad(arch, w, X, y, "categorical"),
                                   jacobian_transpose_vec(arch, w, X, cot), atol=1e-14)

    def test_log_softmax_stable(self):
        out = log_softmax(np.array([[1000.0, 0.0]]))
        assert np.all(np.isfinite(out))


class TestJacobianTranspose:
    def test_zero_cotangent(self, rng):
        arch = small_arch(2)
        w = rng.standard_normal(arch.n_params)
        np.testing.assert_array_equal(jacobian_transpose_vec(arch, w, rng.standard_normal((3, 2)), np.zeros(6)), 0)

    def test_one_hot_column_extraction(self, rng):
        arch = small_arch(2)
        w = rng.standard_normal(arch.n_params)
        X = rng.standard_normal((3, 2))
        v = np.zeros(6)
        v[4] = 1.0
        fd = finite_diff_grad(lambda u: forward(arch, u, X).ravel()[4], w)
        np.testing.assert_allclose(jacobian_transpose_vec(arch, w, X, v), fd, atol=1e-8)

    def test_explicit_jacobian_product(self, rng):
        arch = small_arch(2)
        w = rng.standard_normal(arch.n_params)
        X = rng.standard_normal((4, 2))
        v = rng.standard_normal(8)
        J = fd_jacobian(arch, w, X)
        assert rel_error(jacobian_transpose_vec(arch, w, X, v), J.T @ v) < 1e-4

    @settings(max_examples=30, deadline=None)
    @given(st.floats(-3, 3), st.floats(-3, 3), st.integers(0, 1000))
    def test_linearity(self, a, b, seed):
        r = make_rng(seed)
        arch = small_arch(2)
        w = r.standard_normal(arch.n_params)
        X = r.standard_normal((3, 2))
        v1, v2 = r.standard_normal(6), r.standard_normal(6)
        lhs = jacobian_transpose_vec(arch, w, X, a * v1 + b * v2)
        rhs = a * jacobian_transpose_vec(arch, w, X, v1) + b * jacobian_transpose_vec(arch, w, X, v2)
        np.testing.assert_allclose(lhs, rhs, atol=1e-10)

    def test_wrong_length(self, rng):
        arch = small_arch(2)
        with pytest.raises(ShapeMismatch):
            jacobian_transpose_vec(arch, np.zeros(arch.n_params), np.zeros((3, 2)), np.zeros(5))


class TestFunctionalPrior:
    def test_self_consistency_with_kde(self, rng):
        arch = MlpArchitecture((1, 3, 1))
        prior = FunctionalPrior(arch, rng, 30)
        X = np.linspace(-1, 1, 4)[:, None]
        F = prior.project(X)
        est = kde_score(F)
        np.testing.assert_allclose(prior.score(X, F), est.scores, atol=1e-12)

    @pytest.mark.parametrize("estimator", ["kde", "ssge"])
    def test_shape_and_finite(self, rng, estimator):
        arch = MlpArchitecture((1, 1, 1))
        X = np.linspace(-1, 1, 5)[:, None]
        F = rng.standard_normal((7, 5))
        s = functional_prior_score(arch, X, F, rng, 200, estimator=estimator)
        assert s.shape == (7, 5) and np.all(np.isfinite(s))

    def test_wide_prior_pulls_less(self):
        arch = MlpArchitecture((1, 8, 1))
        X = np.linspace(-1, 1, 3)[:, None]
        F = 0.5 * make_rng(1).standard_normal((6, 3))
        narrow = functional_prior_score(arch, X, F, make_rng(2), 200, prior_std=1.0)
        wide = functional_prior_score(arch, X, F, make_rng(2), 200, prior_std=10.0)
        assert np.linalg.norm(wide) < np.linalg.norm(narrow)

    def test_rejects_stein_estimator(self, rng):
        with pytest.raises(ValueError):
            FunctionalPrior(MlpArchitecture((1, 2, 1)), rng, estimator="sge")


def test_prior_samples_shape(rng):
    arch = small_arch()
    assert sample_prior(arch, rng, 4, 2.0).shape == (4, arch.n_params)
