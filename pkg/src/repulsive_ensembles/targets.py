"""Log-densities the particle dynamics ascend.

Every target exposes ``dim``, ``log_prob(x)`` and ``grad_log_prob(x)``. Both
accept a single point of shape ``(d,)`` or a particle stack ``(n, d)``, and
return a matching scalar/vector or ``(n,)``/``(n, d)`` array. Additive
normalising constants are dropped throughout: only gradients and
differences of log-densities are ever used.
"""
from __future__ import annotations

import numpy as np

from .errors import ShapeMismatch
from .nn import output_log_likelihood, output_log_likelihood_grad


def _rows(x, dim):
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    X = x[None, :] if single else x
    if X.ndim != 2 or X.shape[1] != dim:
        raise ShapeMismatch(f"expected points of dimension {dim}, got shape {x.shape}")
    return X, single


def _unwrap(value, single):
    return value[0] if single else value


class GaussianTarget:
    is_minibatched = False

    def __init__(self, mean, cov):
        self.mean = np.atleast_1d(np.asarray(mean, dtype=float))
        self.cov = np.atleast_2d(np.asarray(cov, dtype=float))
        self.dim = self.mean.size
        if self.cov.shape != (self.dim, self.dim):
            raise ShapeMismatch("covariance does not match the mean")
        if not np.allclose(self.cov, self.cov.T):
            raise ValueError("covariance must be symmetric")
        try:
            self._chol = np.linalg.cholesky(self.cov)
        except np.linalg.LinAlgError as exc:
            raise ValueError("covariance must be positive definite") from exc
        self.precision = np.linalg.inv(self.cov)

    def log_prob(self, x, batch=None):
        X, single = _rows(x, self.dim)
        r = X - self.mean
        return _unwrap(-0.5 * np.einsum("ni,ij,nj->n", r, self.precision, r), single)

    def grad_log_prob(self, x, batch=None):
        X, single = _rows(x, self.dim)
        return _unwrap(-(X - self.mean) @ self.precision, single)

    def sample(self, rng, n):
        return self.mean + rng.standard_normal((n, self.dim)) @ self._chol.T


class FunnelTarget:
    """Neal's funnel: ``v ~ N(0, scale^2)``, ``x | v ~ N(0, e^v I)``.

    Points are laid out as ``(v, x_1, ..., x_k)``.
    """

    is_minibatched = False

    def __init__(self, scale: float = 3.0, x_dim: int = 1):
        if scale <= 0 or x_dim < 1:
            raise ValueError("funnel needs a positive scale and at least one x coordinate")
        self.scale = float(scale)
        self.x_dim = int(x_dim)
        self.dim = 1 + self.x_dim

    def log_prob(self, x, batch=None):
        X, single = _rows(x, self.dim)
        v, rest = X[:, 0], X[:, 1:]
        lp = (-0.5 * v**2 / self.scale**2
              - 0.5 * self.x_dim * v
              - 0.5 * np.sum(rest**2, axis=1) * np.exp(-v))
        return _unwrap(lp, single)

    def grad_log_prob(self, x, batch=None):
        X, single = _rows(x, self.dim)
        v, rest = X[:, 0], X[:, 1:]
        e = np.exp(-v)
        g = np.empty_like(X)
        g[:, 0] = -v / self.scale**2 - 0.5 * self.x_dim + 0.5 * np.sum(rest**2, axis=1) * e
        g[:, 1:] = -rest * e[:, None]
        return _unwrap(g, single)


class GaussianMixtureTarget:
    """Isotropic Gaussian mixture; used for multimodal sanity checks."""

    is_minibatched = False

    def __init__(self, means, stds, weights=None):
        self.means = np.atleast_2d(np.asarray(means, dtype=float))
        if self.means.shape[0] == 1 and np.ndim(means) == 1:
            self.means = self.means.T
        k, self.dim = self.means.shape
        self.stds = np.broadcast_to(np.asarray(stds, dtype=float), (k,)).copy()
        w = np.full(k, 1.0 / k) if weights is None else np.asarray(weights, dtype=float)
        self.log_weights = np.log(w / w.sum())

    def _components(self, X):
        d2 = ((X[:, None, :] - self.means[None]) ** 2).sum(-1)
        return self.log_weights - 0.5 * d2 / self.stds**2 - self.dim * np.log(self.stds)

    def log_prob(self, x, batch=None):
        X, single = _rows(x, self.dim)
        c = self._components(X)
        m = c.max(axis=1, keepdims=True)
        return _unwrap((m + np.log(np.exp(c - m).sum(axis=1, keepdims=True)))[:, 0], single)

    def grad_log_prob(self, x, batch=None):
        X, single = _rows(x, self.dim)
        c = self._components(X)
        r = np.exp(c - c.max(axis=1, keepdims=True))
        r /= r.sum(axis=1, keepdims=True)
        g = np.einsum("nk,nkd->nd", r / self.stds**2, self.means[None] - X[:, None, :])
        return _unwrap(g, single)


class FlatTarget:
    """Improper uniform density; isolates the repulsion in tests."""

    is_minibatched = False

    def __init__(self, dim: int):
        self.dim = int(dim)

    def log_prob(self, x, batch=None):
        X, single = _rows(x, self.dim)
        return _unwrap(np.zeros(X.shape[0]), single)

    def grad_log_prob(self, x, batch=None):
        X, single = _rows(x, self.dim)
        return _unwrap(np.zeros_like(X), single)


class BnnPosteriorTarget:
    """Posterior over network weights with an isotropic Gaussian prior.

    ``model`` is anything with ``n_params``, ``forward(w, X)`` and
    ``vjp(w, X, v)`` (an :class:`~repulsive_ensembles.nn.MlpArchitecture` or
    :class:`~repulsive_ensembles.nn.LinearModel`). A ``batch`` argument is an
    index array into the training set; the log-likelihood of a batch is
    rescaled by ``N / |batch|`` so its expectation matches the full-data
    value. ``batch=None`` uses every datum.
    """

    is_minibatched = True

    def __init__(self, model, X, y, likelihood: str = "gaussian", noise_std: float = 0.1,
                 prior_std: float = 1.0, batch_size: int | None = None):
        if likelihood not in ("gaussian", "categorical"):
            raise ValueError(f"unknown likelihood {likelihood!r}")
        self.model = model
        self.X = np.asarray(X, dtype=float)
        if self.X.ndim == 1:
            self.X = self.X[:, None]
        self.y = np.asarray(y)
        if self.X.shape[0] != self.y.shape[0]:
            raise ShapeMismatch("inputs and labels disagree on the number of data")
        if self.X.shape[0] == 0:
            raise ValueError("empty dataset")
        self.likelihood = likelihood
        self.noise_std = float(noise_std)
        self.prior_std = float(prior_std)
        self.n_data = self.X.shape[0]
        self.batch_size = self.n_data if batch_size is None else min(int(batch_size), self.n_data)
        self.dim = model.n_params

    def sample_batch(self, rng: np.random.Generator) -> np.ndarray:
        """Indices of a minibatch drawn uniformly without replacement."""
        if self.batch_size >= self.n_data:
            return np.arange(self.n_data)
        return np.sort(rng.choice(self.n_data, size=self.batch_size, replace=False))

    def _batch(self, batch):
        idx = np.arange(self.n_data) if batch is None else np.asarray(batch)
        if idx.size == 0:
            raise ShapeMismatch("empty batch")
        return self.X[idx], self.y[idx], self.n_data / idx.size

    def log_prob(self, w, batch=None):
        W, single = _rows(w, self.dim)
        Xb, yb, scale = self._batch(batch)
        F = self.model.forward(W, Xb)
        ll = output_log_likelihood(F, yb, self.likelihood, self.noise_std)
        lp = scale * ll - 0.5 * np.sum(W**2, axis=1) / self.prior_std**2
        return _unwrap(lp, single)

    def grad_log_prob(self, w, batch=None):
        W, single = _rows(w, self.dim)
        Xb, yb, scale = self._batch(batch)
        F = self.model.forward(W, Xb)
        G = scale * output_log_likelihood_grad(F, yb, self.likelihood, self.noise_std)
        grad = self.model.vjp(W, Xb, G) - W / self.prior_std**2
        return _unwrap(grad, single)

    def output_grad(self, F, batch=None):
        """Rescaled log-likelihood gradient with respect to outputs on ``batch``."""
        _, yb, scale = self._batch(batch)
        return scale * output_log_likelihood_grad(F, yb, self.likelihood, self.noise_std)

    def sample_prior(self, rng, n):
        return self.prior_std * rng.standard_normal((n, self.dim))


class ConjugateLinearRegression(BnnPosteriorTarget):
    """Bayesian linear regression without bias, whose posterior is Gaussian in closed form."""

    def __init__(self, X, y, noise_std: float = 1.0, prior_std: float = 1.0):
        from .nn import LinearModel

        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        super().__init__(LinearModel(X.shape[1], 1), X, np.asarray(y, dtype=float).reshape(-1, 1),
                         "gaussian", noise_std, prior_std)

    def posterior(self):
        """``(mean, cov)`` of the exact Gaussian posterior."""
        prec = self.X.T @ self.X / self.noise_std**2 + np.eye(self.dim) / self.prior_std**2
        cov = np.linalg.inv(prec)
        mean = cov @ (self.X.T @ self.y[:, 0]) / self.noise_std**2
        return mean, cov
