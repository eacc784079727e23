"""Reference samplers for checking the particle methods on small targets.

Both samplers use only ``target.log_prob`` (and ``grad_log_prob`` for HMC)
on the full data, produce a chain of shape ``(iterations - burn_in, d)`` and
report the acceptance rate over the post-burn-in iterations.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DivergentTrajectory
from .numerics import make_rng


def _default_burn_in(iterations, burn_in):
    return int(0.2 * iterations) if burn_in is None else int(burn_in)


@dataclass(frozen=True)
class MetropolisConfig:
    proposal_scale: float = 0.5
    iterations: int = 10000
    burn_in: int | None = None
    seed: int = 0

    def __post_init__(self):
        if self.proposal_scale <= 0 or self.iterations < 1:
            raise ValueError("proposal scale and iteration count must be positive")
        if not 0 <= _default_burn_in(self.iterations, self.burn_in) < self.iterations:
            raise ValueError("burn-in must leave at least one kept draw")


@dataclass(frozen=True)
class HmcConfig:
    step_size: float = 0.1
    n_leapfrog: int = 20
    iterations: int = 2000
    burn_in: int | None = None
    seed: int = 0
    # relative jitter of the step size per iteration; 0 keeps it fixed
    step_jitter: float = 0.0

    def __post_init__(self):
        if self.step_size <= 0 or self.n_leapfrog < 1 or self.iterations < 1:
            raise ValueError("step size, leapfrog steps and iterations must be positive")
        if not 0 <= self.step_jitter < 1:
            raise ValueError("step jitter must lie in [0, 1)")
        if not 0 <= _default_burn_in(self.iterations, self.burn_in) < self.iterations:
            raise ValueError("burn-in must leave at least one kept draw")

    @property
    def kept_burn_in(self) -> int:
        return _default_burn_in(self.iterations, self.burn_in)


@dataclass
class ChainResult:
    samples: np.ndarray
    acceptance_rate: float
    n_divergent: int = 0


def _start(target, init):
    if init is None:
        return np.zeros(target.dim)
    x = np.asarray(init, dtype=float).copy()
    if x.shape != (target.dim,):
        raise ValueError(f"initial point must have shape ({target.dim},)")
    return x


def metropolis_sample(target, config: MetropolisConfig, rng=None, init=None) -> ChainResult:
    """Gaussian random-walk Metropolis chain."""
    rng = make_rng(config.seed) if rng is None else rng
    burn = _default_burn_in(config.iterations, config.burn_in)
    x = _start(target, init)
    lp = float(target.log_prob(x))
    out = np.empty((config.iterations - burn, target.dim))
    accepted = 0
    for t in range(config.iterations):
        prop = x + config.proposal_scale * rng.standard_normal(target.dim)
        lp_prop = float(target.log_prob(prop))
        if np.log(rng.uniform()) < lp_prop - lp:
            x, lp = prop, lp_prop
            if t >= burn:
                accepted += 1
        if t >= burn:
            out[t - burn] = x
    return ChainResult(out, accepted / out.shape[0])


def leapfrog(grad_fn, q, p, step_size: float, n_steps: int):
    """Velocity-Verlet integration of Hamiltonian dynamics with identity mass.

    ``grad_fn`` is the gradient of the log density, so the potential energy is
    ``-log_prob``. Returns the end point ``(q, p)``; inputs are not modified.
    """
    q = np.array(q, dtype=float)
    p = np.array(p, dtype=float)
    p += 0.5 * step_size * grad_fn(q)
    for i in range(n_steps):
        q += step_size * p
        if i < n_steps - 1:
            p += step_size * grad_fn(q)
    p += 0.5 * step_size * grad_fn(q)
    return q, p


def hamiltonian(target, q, p) -> float:
    return float(-target.log_prob(q) + 0.5 * np.dot(p, p))


def _proposal(target, q, step, n_leapfrog):
    with np.errstate(over="ignore", invalid="ignore"):
        q_new, p_new = leapfrog(target.grad_log_prob, q[0], q[1], step, n_leapfrog)
        energy = hamiltonian(target, q_new, p_new)
    if not (np.isfinite(energy) and np.all(np.isfinite(q_new))):
        raise DivergentTrajectory("non-finite Hamiltonian along the trajectory")
    return q_new, energy


def hmc_sample(target, config: HmcConfig, rng=None, init=None) -> ChainResult:
    """Hamiltonian Monte Carlo with identity mass and a fixed leapfrog length.

    Divergent trajectories (non-finite energy) are rejected and counted.
    """
    rng = make_rng(config.seed) if rng is None else rng
    burn = config.kept_burn_in
    x = _start(target, init)
    out = np.empty((config.iterations - burn, target.dim))
    accepted = 0
    divergent = 0
    for t in range(config.iterations):
        p0 = rng.standard_normal(target.dim)
        step = config.step_size
        if config.step_jitter:
            step *= 1.0 + config.step_jitter * (2.0 * rng.uniform() - 1.0)
        log_u = np.log(rng.uniform())
        h0 = hamiltonian(target, x, p0)
        try:
            q_new, h1 = _proposal(target, (x, p0), step, config.n_leapfrog)
        except DivergentTrajectory:
            divergent += 1
        else:
            if log_u < h0 - h1:
                x = q_new
                if t >= burn:
                    accepted += 1
        if t >= burn:
            out[t - burn] = x
    return ChainResult(out, accepted / out.shape[0], divergent)


def reversibility_error(target, q, p, step_size: float, n_steps: int) -> float:
    """Distance from ``q`` after integrating forward and back with negated momentum."""
    q1, p1 = leapfrog(target.grad_log_prob, q, p, step_size, n_steps)
    q2, _ = leapfrog(target.grad_log_prob, q1, -p1, step_size, n_steps)
    return float(np.max(np.abs(q2 - np.asarray(q, dtype=float))))
