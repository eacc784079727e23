"""A small multilayer perceptron with hand-written backpropagation.

Parameters live in one flat vector per network, laid out layer by layer as
``W_0`` (row-major, ``in x out``), ``b_0``, ``W_1``, ``b_1``, ... Every
routine accepts either a single vector of shape ``(d,)`` or a stack of
particles of shape ``(n, d)``. The stacked form evaluates all ensemble
members with batched matrix products.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeMismatch
from .estimators import _as_particles, choose_eigencount, DEFAULT_SSGE_ENERGY, EIGENVALUE_CUTOFF, kde_score_at
from .kernels import RbfKernel, cross_gram, gram, grad_sums, resolve_bandwidth
from .numerics import sym_eig

ACTIVATIONS = ("tanh", "relu")
HEADS = ("identity", "logits")
LIKELIHOODS = ("gaussian", "categorical")


@dataclass(frozen=True)
class MlpArchitecture:
    widths: tuple[int, ...]
    activation: str = "tanh"
    head: str = "identity"

    def __post_init__(self):
        object.__setattr__(self, "widths", tuple(int(w) for w in self.widths))
        if len(self.widths) < 3:
            raise ValueError("need input, at least one hidden layer, and output widths")
        if any(w <= 0 for w in self.widths):
            raise ValueError("layer widths must be positive")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.head not in HEADS:
            raise ValueError(f"unknown output head {self.head!r}")

    @property
    def n_inputs(self) -> int:
        return self.widths[0]

    @property
    def n_outputs(self) -> int:
        return self.widths[-1]

    @property
    def n_params(self) -> int:
        return sum(a * b + b for a, b in zip(self.widths[:-1], self.widths[1:]))

    def forward(self, w, X):
        return forward(self, w, X)

    def vjp(self, w, X, v):
        return jacobian_transpose_vec(self, w, X, v)

    def layer_slices(self):
        """``(weight_slice, bias_slice, fan_in, fan_out)`` for each layer."""
        out, start = [], 0
        for a, b in zip(self.widths[:-1], self.widths[1:]):
            ws = slice(start, start + a * b)
            bs = slice(start + a * b, start + a * b + b)
            out.append((ws, bs, a, b))
            start += a * b + b
        return out


@dataclass(frozen=True)
class LinearModel:
    """``f(x; w) = x @ W`` with no bias or hidden layer.

    Shares the ``forward``/``vjp`` interface of :class:`MlpArchitecture` so it
    can stand in for a network where a conjugate closed form is needed.
    """

    n_inputs: int = 1
    n_outputs: int = 1
    head: str = "identity"

    @property
    def n_params(self) -> int:
        return self.n_inputs * self.n_outputs

    def forward(self, w, X):
        W, single = _stack(self, w)
        X = _inputs(self, X)
        out = X @ W.reshape(-1, self.n_inputs, self.n_outputs)
        return out[0] if single else out

    def vjp(self, w, X, v):
        W, single = _stack(self, w)
        X = _inputs(self, X)
        G = np.asarray(v, dtype=float).reshape(W.shape[0], X.shape[0], self.n_outputs)
        grad = np.einsum("ba,nbo->nao", X, G).reshape(W.shape[0], -1)
        return grad[0] if single else grad


def _stack(arch, w):
    w = np.asarray(w, dtype=float)
    single = w.ndim == 1
    W = w[None, :] if single else w
    if W.ndim != 2 or W.shape[1] != arch.n_params:
        raise ShapeMismatch(f"expected {arch.n_params} parameters per network, got shape {w.shape}")
    return W, single


def _inputs(arch, X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1 and arch.n_inputs == 1:
        X = X[:, None]
    if X.ndim != 2 or X.shape[1] != arch.n_inputs:
        raise ShapeMismatch(f"expected inputs of shape (b, {arch.n_inputs}), got {X.shape}")
    return X


def _act(kind, z):
    return np.tanh(z) if kind == "tanh" else np.maximum(z, 0.0)


def _act_grad(kind, z, a):
    return 1.0 - a * a if kind == "tanh" else (z > 0.0).astype(float)


def _forward_all(arch, W, X):
    """Forward pass over a particle stack, keeping pre- and post-activations."""
    h = np.broadcast_to(X, (W.shape[0],) + X.shape)
    cache = [(None, h)]
    layers = arch.layer_slices()
    for li, (ws, bs, a, b) in enumerate(layers):
        z = h @ W[:, ws].reshape(-1, a, b) + W[:, None, bs]
        h = z if li == len(layers) - 1 else _act(arch.activation, z)
        cache.append((z, h))
    return h, cache


def forward(arch: MlpArchitecture, w, X) -> np.ndarray:
    """Network outputs: ``(b, o)`` for one parameter vector, ``(n, b, o)`` for a stack."""
    W, single = _stack(arch, w)
    out, _ = _forward_all(arch, W, _inputs(arch, X))
    return out[0] if single else out


def _backward(arch, W, cache, G):
    n = W.shape[0]
    grad = np.zeros_like(W)
    layers = arch.layer_slices()
    delta = G
    for li in range(len(layers) - 1, -1, -1):
        ws, bs, a, b = layers[li]
        h_in = cache[li][1]
        grad[:, ws] = np.einsum("nba,nbo->nao", h_in, delta).reshape(n, a * b)
        grad[:, bs] = delta.sum(axis=1)
        if li > 0:
            delta = delta @ W[:, ws].reshape(n, a, b).transpose(0, 2, 1)
            z, h = cache[li]
            delta = delta * _act_grad(arch.activation, z, h)
    return grad


def jacobian_transpose_vec(arch: MlpArchitecture, w, X, v) -> np.ndarray:
    """``(d f(X; w) / d w)^T v`` via one backward pass with ``v`` as output cotangent.

    ``v`` has ``b * o`` entries per network (any shape that reshapes to
    ``(b, o)`` or ``(n, b, o)``).
    """
    W, single = _stack(arch, w)
    X = _inputs(arch, X)
    v = np.asarray(v, dtype=float)
    expected = W.shape[0] * X.shape[0] * arch.n_outputs
    if v.size != expected:
        raise ShapeMismatch(f"cotangent has {v.size} entries, expected {expected}")
    G = v.reshape(W.shape[0], X.shape[0], arch.n_outputs)
    _, cache = _forward_all(arch, W, X)
    grad = _backward(arch, W, cache, G)
    return grad[0] if single else grad


# ---------------------------------------------------------------------------
# likelihoods
# ---------------------------------------------------------------------------

def log_softmax(F):
    F = F - F.max(axis=-1, keepdims=True)
    return F - np.log(np.exp(F).sum(axis=-1, keepdims=True))


def _onehot(y, n_classes):
    y = np.asarray(y)
    if y.ndim != 1 or np.any(y < 0) or np.any(y >= n_classes) or not np.issubdtype(y.dtype, np.integer):
        raise ShapeMismatch("classification labels must be integers in [0, n_classes)")
    return np.eye(n_classes)[y]


def _targets_like(F, y, likelihood):
    if likelihood == "gaussian":
        y = np.asarray(y, dtype=float).reshape(F.shape[-2], -1)
        if y.shape[-1] != F.shape[-1]:
            raise ShapeMismatch("regression targets do not match network outputs")
        return y
    return _onehot(y, F.shape[-1])


def output_log_likelihood(F, y, likelihood: str, noise_std: float = 1.0):
    """Summed log-likelihood per network, with additive constants dropped.

    ``F`` is ``(b, o)`` or ``(n, b, o)``; returns a scalar or an ``(n,)`` array.
    """
    F = np.asarray(F, dtype=float)
    T = _targets_like(F, y, likelihood)
    if likelihood == "gaussian":
        return -0.5 * np.sum((T - F) ** 2, axis=(-2, -1)) / noise_std**2
    if likelihood == "categorical":
        return np.sum(T * log_softmax(F), axis=(-2, -1))
    raise ValueError(f"unknown likelihood {likelihood!r}")


def output_log_likelihood_grad(F, y, likelihood: str, noise_std: float = 1.0) -> np.ndarray:
    """Gradient of the summed log-likelihood with respect to network outputs.

    Gaussian: ``(y - f) / sigma^2``. Categorical: ``onehot(y) - softmax(f)``.
    """
    F = np.asarray(F, dtype=float)
    T = _targets_like(F, y, likelihood)
    if likelihood == "gaussian":
        return (T - F) / noise_std**2
    if likelihood == "categorical":
        return T - np.exp(log_softmax(F))
    raise ValueError(f"unknown likelihood {likelihood!r}")


def backprop_loss_grad(arch: MlpArchitecture, w, X, y, likelihood: str,
                       noise_std: float = 1.0) -> np.ndarray:
    """Exact gradient of the summed log-likelihood of ``(X, y)`` with respect to the weights."""
    if likelihood not in LIKELIHOODS:
        raise ValueError(f"unknown likelihood {likelihood!r}")
    W, single = _stack(arch, w)
    X = _inputs(arch, X)
    out, cache = _forward_all(arch, W, X)
    G = output_log_likelihood_grad(out, y, likelihood, noise_std)
    grad = _backward(arch, W, cache, G)
    return grad[0] if single else grad


def sample_prior(arch: MlpArchitecture, rng: np.random.Generator, n: int,
                 prior_std: float = 1.0) -> np.ndarray:
    """``n`` draws from the isotropic Gaussian weight prior, shape ``(n, d)``."""
    return prior_std * rng.standard_normal((n, arch.n_params))


# ---------------------------------------------------------------------------
# functional prior
# ---------------------------------------------------------------------------

class FunctionalPrior:
    """Score of the push-forward of the weight prior, on a finite set of inputs.

    ``n_samples`` weight vectors are drawn from ``N(0, prior_std^2 I)`` once;
    each call projects them onto the current batch of inputs and evaluates a
    score estimate fitted to those projections at the query rows. ``"kde"``
    uses the kernel density score with the prior projections as centres;
    ``"ssge"`` evaluates the spectral estimator's Nystrom eigenfunctions at the
    queries. The Stein estimator has no out-of-sample form and is rejected.
    """

    def __init__(self, arch: MlpArchitecture, rng: np.random.Generator, n_samples: int = 200,
                 prior_std: float = 1.0, estimator: str = "kde",
                 kernel: RbfKernel | None = None, energy: float = DEFAULT_SSGE_ENERGY):
        if estimator not in ("kde", "ssge"):
            raise ValueError(f"functional prior score supports 'kde' or 'ssge', not {estimator!r}")
        if n_samples < 2:
            raise ValueError("need at least two prior samples")
        self.arch = arch
        self.estimator = estimator
        self.kernel = kernel or RbfKernel()
        self.energy = energy
        self.weights = sample_prior(arch, rng, n_samples, prior_std)

    def project(self, X) -> np.ndarray:
        out = forward(self.arch, self.weights, X)
        return out.reshape(out.shape[0], -1)

    def score(self, X, F) -> np.ndarray:
        """Prior score at projected function values ``F`` of shape ``(n, b*o)``."""
        centers = self.project(X)
        F = _as_particles(F)
        if F.shape[1] != centers.shape[1]:
            raise ShapeMismatch("projected particles do not match the batch size")
        h = resolve_bandwidth(self.kernel, centers)
        if self.estimator == "kde":
            return kde_score_at(F, centers, h)
        return ssge_score_at(F, centers, h, energy=self.energy)


def functional_prior_score(arch: MlpArchitecture, X, F, rng: np.random.Generator,
                           n_samples: int = 200, prior_std: float = 1.0,
                           estimator: str = "kde") -> np.ndarray:
    """One-shot helper around :class:`FunctionalPrior`."""
    prior = FunctionalPrior(arch, rng, n_samples, prior_std, estimator)
    return prior.score(X, F)


def ssge_score_at(Q, centers, h: float, energy: float = DEFAULT_SSGE_ENERGY) -> np.ndarray:
    """Spectral Stein score fitted on ``centers`` and evaluated at query rows ``Q``."""
    K = gram(RbfKernel(), centers, h)
    lam, U = sym_eig(K)
    J = choose_eigencount(lam, energy)
    lam, U = lam[:J], U[:, :J]
    keep = lam > EIGENVALUE_CUTOFF
    lam, U = lam[keep], U[:, keep]
    beta = U.T @ (-grad_sums(K, centers, h))
    psi = cross_gram(_as_particles(Q), centers, h) @ U
    return -(psi / lam**2) @ beta
