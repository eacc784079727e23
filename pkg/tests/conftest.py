import numpy as np
import pytest

from repulsive_ensembles.numerics import finite_diff_grad, make_rng


def rel_error(a, b, floor=1.0):
    """``||a - b|| / max(||b||, floor)``."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(b), floor))


def fd_sweep(logp, grad, points, h=1e-5):
    """Largest relative gradient error over ``points`` against central differences."""
    worst = 0.0
    for x in points:
        worst = max(worst, rel_error(grad(x), finite_diff_grad(logp, x, h)))
    return worst


@pytest.fixture
def rng():
    return make_rng(1234)
