"""RBF kernel, its gradient, Gram matrices and bandwidth heuristics.

The kernel is ``k(x, y) = exp(-||x - y||^2 / h)``. The same code serves
weight-space particles (flattened network weights) and function-space
particles (network outputs on a batch of inputs).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateBandwidth

BANDWIDTH_MODES = ("fixed", "median", "median_over_log_n")


@dataclass(frozen=True)
class RbfKernel:
    """Squared-exponential kernel with a bandwidth rule.

    ``lengthscale`` is only read in ``"fixed"`` mode. ``floor`` replaces a
    heuristic bandwidth of zero (all particles coincide); set it to 0 to make
    that case an error instead.
    """

    lengthscale: float | None = None
    bandwidth_mode: str = "median"
    floor: float = 1e-6

    def __post_init__(self):
        if self.bandwidth_mode not in BANDWIDTH_MODES:
            raise ValueError(f"unknown bandwidth mode {self.bandwidth_mode!r}")
        if self.bandwidth_mode == "fixed" and not (self.lengthscale and self.lengthscale > 0):
            raise ValueError("fixed bandwidth mode needs a positive lengthscale")
        if self.floor < 0:
            raise ValueError("bandwidth floor must be nonnegative")


def sq_dists(X: np.ndarray, Y: np.ndarray | None = None) -> np.ndarray:
    """Pairwise squared Euclidean distances from explicit differences."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Y = X if Y is None else np.atleast_2d(np.asarray(Y, dtype=float))
    diff = X[:, None, :] - Y[None, :, :]
    return np.einsum("ijk,ijk->ij", diff, diff)


def resolve_bandwidth(kernel: RbfKernel, X: np.ndarray) -> float:
    """Bandwidth ``h`` for particle set ``X`` under the kernel's rule."""
    if kernel.bandwidth_mode == "fixed":
        return float(kernel.lengthscale)
    X = np.atleast_2d(np.asarray(X, dtype=float))
    n = X.shape[0]
    if n < 1:
        raise ValueError("need at least one particle")
    if n == 1:
        # k(x, x) = 1 for any h; nothing to estimate from
        med = 0.0
    else:
        iu = np.triu_indices(n, 1)
        med = float(np.median(sq_dists(X)[iu]))
        if kernel.bandwidth_mode == "median_over_log_n":
            med /= np.log(n + 1.0)
    if med > 0.0 and np.isfinite(med):
        return max(med, kernel.floor)
    if n == 1:
        return kernel.floor if kernel.floor > 0 else 1.0
    if kernel.floor > 0:
        return kernel.floor
    raise DegenerateBandwidth("median pairwise distance is zero and no bandwidth floor is set")


def evaluate(x, y, h: float) -> float:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    return float(np.exp(-np.sum((x - y) ** 2) / h))


def gram(kernel: RbfKernel, X: np.ndarray, h: float | None = None) -> np.ndarray:
    """Gram matrix ``K_ij = k(x_i, x_j)``; ``h`` is resolved from ``X`` if omitted."""
    if h is None:
        h = resolve_bandwidth(kernel, X)
    K = np.exp(-sq_dists(X) / h)
    np.fill_diagonal(K, 1.0)
    return K


def cross_gram(X: np.ndarray, Y: np.ndarray, h: float) -> np.ndarray:
    return np.exp(-sq_dists(X, Y) / h)


def grad_first_arg(kernel: RbfKernel, x, y, h: float | None = None) -> np.ndarray:
    """Gradient of ``k(x, y)`` with respect to ``x``: ``-(2/h)(x - y) k(x, y)``."""
    if h is None:
        if kernel.bandwidth_mode != "fixed":
            raise ValueError("pass h explicitly for data-dependent bandwidth modes")
        h = kernel.lengthscale
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    return -(2.0 / h) * (x - y) * evaluate(x, y, h)


def grad_sums(K: np.ndarray, X: np.ndarray, h: float) -> np.ndarray:
    """Row ``i`` holds ``sum_j grad_{x_i} k(x_i, x_j)``.

    Uses ``grad_{x_i} k(x_i, x_j) = -(2/h)(x_i - x_j) K_ij`` so no
    ``n x n x d`` tensor is formed. By antisymmetry of the RBF gradient,
    ``sum_k grad_{x_k} k(x_k, x_j)`` is the negation of row ``j``.
    """
    return -(2.0 / h) * (X * K.sum(axis=1)[:, None] - K @ X)
