"""Synthetic tasks: 1D regression with an input gap and 2D classification with a far OOD ring."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import InvalidConfig
from ..numerics import make_rng


@dataclass
class Dataset:
    kind: str
    X_train: np.ndarray
    y_train: np.ndarray
    X_test: np.ndarray
    y_test: np.ndarray
    X_grid: np.ndarray
    X_ood: np.ndarray | None = None
    info: dict = field(default_factory=dict)


def _rng(seed):
    return seed if isinstance(seed, np.random.Generator) else make_rng(seed)


def regression_truth(x):
    x = np.asarray(x, dtype=float)
    return np.sin(3.0 * x) + 0.3 * x


def gen_regression_1d(seed, n_per_cluster: int = 20, gap=(-0.7, 0.7), noise_std: float = 0.1,
                      cluster_width: float = 0.8, grid=(-2.5, 2.5, 101),
                      gap_margin: float = 0.2) -> Dataset:
    """Two uniform input clusters flanking ``gap`` with noisy labels from a smooth curve.

    The clusters are ``(gap[0] - w, gap[0]]`` and ``(gap[1], gap[1] + w]``, so
    no training input falls inside the open gap. ``X_test`` is a regular grid
    with noise-free targets; ``info["X_gap"]`` holds 21 points inside the gap,
    ``gap_margin`` away from both clusters.
    """
    lo, hi = (float(g) for g in gap)
    g_lo, g_hi, g_n = float(grid[0]), float(grid[1]), int(grid[2])
    if n_per_cluster < 1:
        raise InvalidConfig("need at least one point per cluster", "n_per_cluster")
    if not lo < hi:
        raise InvalidConfig("gap must be an increasing interval", "gap")
    if not (g_lo <= lo - cluster_width and hi + cluster_width <= g_hi) or g_n < 2:
        raise InvalidConfig("gap and clusters must lie within the evaluation grid", "grid")
    if not 0 <= 2 * gap_margin < hi - lo:
        raise InvalidConfig("gap margin leaves no gap to evaluate", "gap_margin")
    if noise_std < 0:
        raise InvalidConfig("noise must be nonnegative", "noise_std")
    rng = _rng(seed)
    left = lo - cluster_width * rng.random(n_per_cluster)
    right = hi + cluster_width * (1.0 - rng.random(n_per_cluster))
    x = np.concatenate([left, right])
    y = regression_truth(x) + noise_std * rng.standard_normal(x.size)
    X_grid = np.linspace(g_lo, g_hi, g_n)[:, None]
    info = {
        "gap": (lo, hi),
        "clusters": ((lo - cluster_width, lo), (hi, hi + cluster_width)),
        "noise_std": float(noise_std),
        "X_gap": np.linspace(lo + gap_margin, hi - gap_margin, 21)[:, None],
    }
    return Dataset("regression", x[:, None], y[:, None], X_grid, regression_truth(X_grid),
                   X_grid, None, info)


def _class_points(rng, layout, counts, spread, separation):
    pts = []
    for label, m in enumerate(counts):
        if layout == "blobs":
            centre = np.array([(label - 0.5) * separation, 0.0])
            pts.append(centre + spread * rng.standard_normal((m, 2)))
        else:
            t = np.pi * rng.random(m)
            if label == 0:
                base = np.c_[np.cos(t), np.sin(t)]
            else:
                base = np.c_[1.0 - np.cos(t), 0.5 - np.sin(t)]
            base = (base - np.array([0.5, 0.25])) * separation / 2.0
            pts.append(base + spread * rng.standard_normal((m, 2)))
    return np.concatenate(pts), np.repeat(np.arange(len(counts)), counts)


def gen_classification_2d(seed, n: int = 100, layout: str = "blobs", spread: float = 0.35,
                          separation: float = 2.0, ring_factor: float = 3.5, n_test: int = 100,
                          n_ood: int = 200, grid_size: int = 41) -> Dataset:
    """Two 2D classes, an in-distribution test split, and OOD points on a distant ring.

    The data radius ``R`` is the largest distance of any train or test input
    from the training mean; OOD radii are uniform on
    ``[ring_factor * R, (ring_factor + 0.5) * R]``. ``X_grid`` is a square
    grid enclosing the ring, for uncertainty maps.
    """
    if layout not in ("blobs", "moons"):
        raise InvalidConfig(f"unknown layout {layout!r}", "layout")
    if n < 4 or n_test < 2:
        raise InvalidConfig("need at least two points per class", "n")
    if ring_factor < 3.0:
        raise InvalidConfig("the OOD ring must sit at least three data radii out", "ring_factor")
    if spread <= 0 or separation <= 0 or n_ood < 1 or grid_size < 2:
        raise InvalidConfig("spread, separation, n_ood and grid_size must be positive", "layout")
    rng = _rng(seed)
    X, y = _class_points(rng, layout, (n // 2, n - n // 2), spread, separation)
    Xt, yt = _class_points(rng, layout, (n_test // 2, n_test - n_test // 2), spread, separation)
    centre = X.mean(axis=0)
    radius = float(np.max(np.linalg.norm(np.concatenate([X, Xt]) - centre, axis=1)))
    theta = 2.0 * np.pi * rng.random(n_ood)
    r = radius * (ring_factor + 0.5 * rng.random(n_ood))
    X_ood = centre + np.c_[r * np.cos(theta), r * np.sin(theta)]
    half = radius * (ring_factor + 0.5)
    ax = np.linspace(-half, half, grid_size)
    g1, g2 = np.meshgrid(centre[0] + ax, centre[1] + ax, indexing="ij")
    X_grid = np.c_[g1.ravel(), g2.ravel()]
    info = {"centre": centre, "data_radius": radius, "ring": (ring_factor * radius, half),
            "layout": layout}
    return Dataset("classification", X, y, Xt, yt, X_grid, X_ood, info)
