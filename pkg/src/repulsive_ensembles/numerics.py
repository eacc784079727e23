"""Small dense linear algebra, seeded randomness and finite differences.

Matrices are plain ``float64`` numpy arrays. Randomness always flows through an
explicit :class:`numpy.random.Generator` backed by the counter-based Philox bit
generator, so independent streams can be split off without touching global
state.
"""
from __future__ import annotations

from typing import Callable

import numpy as np
import scipy.linalg

from .errors import NoConvergence, NonFiniteValue, NotPositiveDefinite

EIG_SIZE_CAP = 512
RIDGE_RETRIES = 3


# ---------------------------------------------------------------------------
# linear solves
# ---------------------------------------------------------------------------

def ridge_cholesky(A: np.ndarray, eta: float = 0.0):
    """Cholesky-factor ``A + eta*I``, inflating ``eta`` tenfold on failure.

    Returns ``(factor, eta_used)`` where ``factor`` is usable with
    :func:`scipy.linalg.cho_solve`.
    """
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {A.shape}")
    if eta < 0:
        raise ValueError("eta must be nonnegative")
    if not np.all(np.isfinite(A)):
        raise NotPositiveDefinite("matrix has non-finite entries")
    n = A.shape[0]
    scale = max(float(np.mean(np.abs(np.diag(A)))) if n else 1.0, 1e-300)
    current = float(eta)
    for attempt in range(RIDGE_RETRIES + 1):
        try:
            factor = scipy.linalg.cho_factor(A + current * np.eye(n), lower=True)
            return factor, current
        except np.linalg.LinAlgError:
            if attempt == RIDGE_RETRIES:
                break
            current = current * 10.0 if current > 0 else 1e-10 * scale
    raise NotPositiveDefinite(
        f"Cholesky failed after {RIDGE_RETRIES} ridge retries (last eta={current:g})"
    )


def solve_ridge(A: np.ndarray, B: np.ndarray, eta: float = 0.0) -> np.ndarray:
    """Solve ``(A + eta*I) X = B`` for symmetric positive definite ``A + eta*I``."""
    B = np.asarray(B, dtype=float)
    factor, _ = ridge_cholesky(A, eta)
    return scipy.linalg.cho_solve(factor, B)


# ---------------------------------------------------------------------------
# symmetric eigendecomposition
# ---------------------------------------------------------------------------

def _round_robin(m: int):
    """Yield ``m - 1`` rounds of disjoint index pairs covering all pairs of ``range(m)``.

    ``m`` must be even. Standard circle-method tournament schedule.
    """
    players = list(range(m))
    for _ in range(m - 1):
        half = m // 2
        yield players[:half], players[half:][::-1]
        players = [players[0]] + [players[-1]] + players[1:-1]


def jacobi_eig(A: np.ndarray, tol: float | None = None, max_sweeps: int = 60):
    """Eigendecomposition by cyclic Jacobi rotations in parallel (round-robin) order.

    Each round annihilates ``n/2`` disjoint off-diagonal pairs at once, so a
    sweep costs ``n - 1`` vectorised rounds. Iteration stops once the
    off-diagonal Frobenius norm drops below ``tol * ||A||_F`` (default
    ``n * machine epsilon``). Returns unsorted eigenvalues and the accumulated
    rotation matrix.
    """
    a = np.array(A, dtype=float, copy=True)
    n = a.shape[0]
    v = np.eye(n)
    if n < 2:
        return np.diag(a).copy(), v
    if tol is None:
        tol = n * np.finfo(float).eps
    m = n + (n % 2)
    norm = np.linalg.norm(a)
    if norm == 0.0:
        return np.zeros(n), v
    for _ in range(max_sweeps):
        off = np.linalg.norm(a - np.diag(np.diag(a)))
        if off <= tol * norm:
            return np.diag(a).copy(), v
        for left, right in _round_robin(m):
            p = np.array(left)
            q = np.array(right)
            # odd n: drop the pair containing the dummy index
            keep = (p < n) & (q < n)
            p, q = p[keep], q[keep]
            apq = a[p, q]
            app = a[p, p]
            aqq = a[q, q]
            active = np.abs(apq) > 1e-300
            t = np.zeros_like(apq)
            theta = (aqq[active] - app[active]) / (2.0 * apq[active])
            sign = np.where(theta >= 0.0, 1.0, -1.0)
            big = np.abs(theta) > 1e100
            t_act = np.empty_like(theta)
            t_act[big] = 0.5 / theta[big]
            small = ~big
            t_act[small] = sign[small] / (
                np.abs(theta[small]) + np.sqrt(1.0 + theta[small] ** 2)
            )
            t[active] = t_act
            c = 1.0 / np.sqrt(1.0 + t * t)
            s = t * c
            # columns, then rows: a <- J^T a J with J block-diagonal over the pairs
            ap, aq = a[:, p].copy(), a[:, q].copy()
            a[:, p] = c * ap - s * aq
            a[:, q] = s * ap + c * aq
            ap, aq = a[p, :].copy(), a[q, :].copy()
            a[p, :] = c[:, None] * ap - s[:, None] * aq
            a[q, :] = s[:, None] * ap + c[:, None] * aq
            vp, vq = v[:, p].copy(), v[:, q].copy()
            v[:, p] = c * vp - s * vq
            v[:, q] = s * vp + c * vq
    raise NoConvergence(f"Jacobi iteration did not converge in {max_sweeps} sweeps")


def sym_eig(A: np.ndarray, method: str = "lapack", cap: int = EIG_SIZE_CAP):
    """Eigenpairs of a symmetric matrix, eigenvalues sorted in descending order.

    ``method="jacobi"`` uses :func:`jacobi_eig`; ``"lapack"`` defers to
    ``numpy.linalg.eigh``. Eigenvectors are the columns of the returned matrix.
    """
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {A.shape}")
    if A.shape[0] > cap:
        raise ValueError(f"matrix size {A.shape[0]} exceeds eigensolver cap {cap}")
    A = 0.5 * (A + A.T)
    if method == "lapack":
        try:
            w, V = np.linalg.eigh(A)
        except np.linalg.LinAlgError as exc:
            raise NoConvergence(str(exc)) from exc
    elif method == "jacobi":
        w, V = jacobi_eig(A)
    else:
        raise ValueError(f"unknown eigensolver {method!r}")
    order = np.argsort(-w, kind="stable")
    return w[order], V[:, order]


# ---------------------------------------------------------------------------
# finite differences
# ---------------------------------------------------------------------------

def finite_diff_grad(f: Callable[[np.ndarray], float], x, h: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of a scalar function."""
    if h <= 0:
        raise ValueError("step must be positive")
    x = np.asarray(x, dtype=float)
    grad = np.empty(x.size)
    flat = x.ravel()
    for i in range(x.size):
        e = np.zeros(x.size)
        e[i] = h
        hi = float(f((flat + e).reshape(x.shape)))
        lo = float(f((flat - e).reshape(x.shape)))
        if not (np.isfinite(hi) and np.isfinite(lo)):
            raise NonFiniteValue(f"function is non-finite near coordinate {i}")
        grad[i] = (hi - lo) / (2.0 * h)
    return grad.reshape(x.shape)


# ---------------------------------------------------------------------------
# randomness
# ---------------------------------------------------------------------------

def make_rng(seed: int) -> np.random.Generator:
    """A Philox-backed generator; identical seeds give identical streams."""
    return np.random.Generator(np.random.Philox(int(seed)))


def split_rng(rng: np.random.Generator, n: int) -> list[np.random.Generator]:
    """Spawn ``n`` independent child generators from ``rng``."""
    return [np.random.Generator(bg) for bg in rng.bit_generator.spawn(n)]


def rng_standard_normal(rng: np.random.Generator, shape) -> np.ndarray:
    return rng.standard_normal(shape)
