"""Particle update rules and the training loop.

A particle set is an ``(n, d)`` array whose rows are ensemble members (the
empirical measure puts mass ``1/n`` on each). Each method computes an update
direction ``phi`` per particle; a step moves ``w_i <- w_i + eps_t * phi_i``,
optionally with per-coordinate RMS preconditioning.

Methods
-------
``deep_ensemble``
    ``phi_i = grad log p(w_i | D)``; members never interact.
``wgd_{kde,sge,ssge}``
    ``phi_i = grad log p(w_i | D) - s_i`` with ``s_i`` an estimate of the
    score of the particle distribution at ``w_i``.
``svgd_w``
    ``phi_i = 1/n sum_j [k(w_i, w_j) grad log p(w_j | D) + grad_{w_j} k(w_j, w_i)]``.
``fwgd_{kde,sge,ssge}`` / ``svgd_f``
    The same constructions applied to network outputs on a batch of inputs,
    then pulled back to weights with each member's Jacobian transpose.

The repulsion multiplier ``r`` blends the interacting update with the
independent one, ``(1 - r) * phi_DE + r * phi_method``. For the WGD family
this is exactly ``grad log p - r * s``; at ``r = 0`` every method performs
the deep-ensemble step.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import InvalidConfig, NonFiniteUpdate
from .estimators import DEFAULT_SGE_ETA, DEFAULT_SSGE_ENERGY, estimate_score
from .kernels import RbfKernel, gram, grad_sums, resolve_bandwidth
from .nn import FunctionalPrior

log = logging.getLogger(__name__)

WEIGHT_METHODS = ("deep_ensemble", "svgd_w", "wgd_kde", "wgd_sge", "wgd_ssge")
FUNCTION_METHODS = ("svgd_f", "fwgd_kde", "fwgd_sge", "fwgd_ssge")
METHODS = WEIGHT_METHODS + FUNCTION_METHODS
OPTIMIZERS = ("plain", "adaptive")
SCHEDULES = ("constant", "inverse")


@dataclass
class DynamicsConfig:
    method: str
    steps: int
    step_size: float = 0.05
    schedule: str = "constant"
    decay: float = 0.0
    optimizer: str = "plain"
    rms_decay: float = 0.9
    rms_eps: float = 1e-8
    kernel: RbfKernel = field(default_factory=RbfKernel)
    sge_eta: float = DEFAULT_SGE_ETA
    ssge_energy: float = DEFAULT_SSGE_ENERGY
    ssge_eigencount: int | None = None
    repulsion: float = 1.0
    repulsion_warmup: int = 0
    svgd_normalize: bool = True
    functional_prior: bool = True
    prior_samples: int = 100
    prior_estimator: str = "kde"
    extra_inputs: int = 0
    extra_bounds: tuple[tuple[float, float], ...] | None = None
    snapshot_stride: int = 1

    def __post_init__(self):
        if self.method not in METHODS:
            raise InvalidConfig(f"unknown method {self.method!r}", "method")
        if self.steps < 0:
            raise InvalidConfig("steps must be nonnegative", "steps")
        if not self.step_size > 0:
            raise InvalidConfig("step size must be positive", "step_size")
        if self.schedule not in SCHEDULES:
            raise InvalidConfig(f"unknown schedule {self.schedule!r}", "schedule")
        if self.optimizer not in OPTIMIZERS:
            raise InvalidConfig(f"unknown optimizer {self.optimizer!r}", "optimizer")
        if self.snapshot_stride < 1:
            raise InvalidConfig("snapshot stride must be at least 1", "snapshot_stride")
        if self.repulsion < 0:
            raise InvalidConfig("repulsion multiplier must be nonnegative", "repulsion")
        if self.extra_inputs > 0 and self.extra_bounds is None:
            raise InvalidConfig("extra projection inputs need sampling bounds", "extra_bounds")
        if self.function_space and self.prior_estimator not in ("kde", "ssge"):
            raise InvalidConfig("the functional prior score supports kde or ssge", "prior_estimator")

    @property
    def estimator(self) -> str | None:
        return self.method.rsplit("_", 1)[1] if "wgd_" in self.method else None

    @property
    def function_space(self) -> bool:
        return self.method in FUNCTION_METHODS

    def step_size_at(self, t: int) -> float:
        if self.schedule == "inverse":
            return self.step_size / (1.0 + self.decay * t)
        return self.step_size

    def repulsion_at(self, t: int) -> float:
        if self.repulsion_warmup > 0:
            return self.repulsion * min(1.0, (t + 1) / self.repulsion_warmup)
        return self.repulsion


@dataclass
class StepInfo:
    grad_norm: float
    repulsion_norm: float
    bandwidth: float


@dataclass
class TrajectoryRecord:
    stride: int
    steps: list = field(default_factory=list)
    snapshots: list = field(default_factory=list)
    grad_norm: list = field(default_factory=list)
    repulsion_norm: list = field(default_factory=list)
    bandwidth: list = field(default_factory=list)

    def record(self, t: int, particles: np.ndarray, info: StepInfo | None):
        if info is not None:
            self.grad_norm.append(info.grad_norm)
            self.repulsion_norm.append(info.repulsion_norm)
            self.bandwidth.append(info.bandwidth)
        if t % self.stride == 0:
            self.steps.append(t)
            self.snapshots.append(particles.copy())


def _mean_norm(A) -> float:
    return float(np.mean(np.linalg.norm(A, axis=-1))) if A.size else 0.0


def _blend(independent, interacting, r):
    if r == 1.0:
        return interacting
    return (1.0 - r) * independent + r * interacting


def _score(cfg: DynamicsConfig, kind: str, X: np.ndarray):
    return estimate_score(kind, X, cfg.kernel, eta=cfg.sge_eta, eigencount=cfg.ssge_eigencount,
                          energy=cfg.ssge_energy)


# ---------------------------------------------------------------------------
# weight-space directions
# ---------------------------------------------------------------------------

def direction_deep_ensemble(P, target, batch=None):
    g = target.grad_log_prob(P, batch)
    return g, StepInfo(_mean_norm(g), 0.0, float("nan"))


def direction_wgd(P, target, batch=None, estimator: str = "kde", cfg: DynamicsConfig | None = None,
                  repulsion: float = 1.0):
    cfg = cfg or DynamicsConfig(method=f"wgd_{estimator}", steps=1)
    g = target.grad_log_prob(P, batch)
    if repulsion == 0.0:
        return g, StepInfo(_mean_norm(g), 0.0, float("nan"))
    est = _score(cfg, estimator, P)
    return g - repulsion * est.scores, StepInfo(_mean_norm(g), _mean_norm(est.scores), est.bandwidth)


def svgd_direction(X, grads, kernel: RbfKernel, normalize: bool = True):
    """Kernel-averaged drift plus kernel-gradient repulsion, and the bandwidth used."""
    h = resolve_bandwidth(kernel, X)
    K = gram(kernel, X, h)
    # sum_j grad_{x_j} k(x_j, x_i) = -sum_j grad_{x_i} k(x_i, x_j)
    repulse = -grad_sums(K, X, h)
    phi = K @ grads + repulse
    if normalize:
        phi = phi / X.shape[0]
    return phi, repulse, h


def direction_svgd_w(P, target, batch=None, cfg: DynamicsConfig | None = None, repulsion: float = 1.0):
    cfg = cfg or DynamicsConfig(method="svgd_w", steps=1)
    g = target.grad_log_prob(P, batch)
    if repulsion == 0.0:
        return g, StepInfo(_mean_norm(g), 0.0, float("nan"))
    phi, repulse, h = svgd_direction(P, g, cfg.kernel, cfg.svgd_normalize)
    return _blend(g, phi, repulsion), StepInfo(_mean_norm(g), _mean_norm(repulse), h)


# ---------------------------------------------------------------------------
# function-space directions
# ---------------------------------------------------------------------------

def projection_inputs(target, batch, extra: np.ndarray | None = None) -> np.ndarray:
    Xb = target.X if batch is None else target.X[np.asarray(batch)]
    if extra is None or len(extra) == 0:
        return Xb
    return np.concatenate([Xb, extra], axis=0)


def direction_function_space(P, target, batch=None, cfg: DynamicsConfig | None = None,
                             prior: FunctionalPrior | None = None, extra: np.ndarray | None = None,
                             repulsion: float = 1.0):
    """Pull-back of a functional update through each member's Jacobian.

    ``F_i`` stacks member ``i``'s outputs on the batch (plus any extra
    unlabeled inputs). The functional posterior gradient is the rescaled
    likelihood gradient on labelled rows plus, when ``prior`` is given, the
    push-forward prior score on all rows.
    """
    cfg = cfg or DynamicsConfig(method="fwgd_kde", steps=1)
    model = target.model
    g_weights = target.grad_log_prob(P, batch)
    if repulsion == 0.0:
        return g_weights, StepInfo(_mean_norm(g_weights), 0.0, float("nan"))
    Xp = projection_inputs(target, batch, extra)
    n_lab = Xp.shape[0] - (0 if extra is None else len(extra))
    out = model.forward(P, Xp)                              # (n, b, o)
    n, b, o = out.shape
    post = np.zeros_like(out)
    post[:, :n_lab] = target.output_grad(out[:, :n_lab], batch)
    F = out.reshape(n, b * o)
    post = post.reshape(n, b * o)
    if prior is not None:
        post = post + prior.score(Xp, F)
    if cfg.method == "svgd_f":
        drift, repulse, h = svgd_direction(F, post, cfg.kernel, cfg.svgd_normalize)
    else:
        est = _score(cfg, cfg.estimator, F)
        repulse, h = est.scores, est.bandwidth
        drift = post - est.scores
    phi = model.vjp(P, Xp, drift)
    return _blend(g_weights, phi, repulsion), StepInfo(_mean_norm(post), _mean_norm(repulse), h)


# ---------------------------------------------------------------------------
# single steps (plain gradient moves)
# ---------------------------------------------------------------------------

def _checked(P, phi, eps, step=None):
    with np.errstate(over="ignore", invalid="ignore"):
        new = P + eps * phi
    if not np.all(np.isfinite(new)):
        raise NonFiniteUpdate("particle update is not finite", step)
    return new


def step_deep_ensemble(P, target, batch=None, eps: float = 0.05):
    phi, _ = direction_deep_ensemble(P, target, batch)
    return _checked(P, phi, eps)


def step_wgd(P, target, batch=None, eps: float = 0.05, estimator: str = "kde",
             cfg: DynamicsConfig | None = None):
    phi, _ = direction_wgd(P, target, batch, estimator, cfg)
    return _checked(P, phi, eps)


def step_svgd_w(P, target, batch=None, eps: float = 0.05, cfg: DynamicsConfig | None = None):
    phi, _ = direction_svgd_w(P, target, batch, cfg)
    return _checked(P, phi, eps)


def step_function_space(P, target, batch=None, eps: float = 0.05, method: str = "fwgd_kde",
                        cfg: DynamicsConfig | None = None, prior: FunctionalPrior | None = None,
                        extra: np.ndarray | None = None):
    cfg = replace(cfg, method=method) if cfg is not None else DynamicsConfig(method=method, steps=1)
    phi, _ = direction_function_space(P, target, batch, cfg, prior, extra)
    return _checked(P, phi, eps)


# ---------------------------------------------------------------------------
# training loop
# ---------------------------------------------------------------------------

def direction(cfg: DynamicsConfig, P, target, batch=None, prior=None, extra=None, repulsion=None):
    r = cfg.repulsion if repulsion is None else repulsion
    m = cfg.method
    if m == "deep_ensemble":
        return direction_deep_ensemble(P, target, batch)
    if m == "svgd_w":
        return direction_svgd_w(P, target, batch, cfg, r)
    if m.startswith("wgd_"):
        return direction_wgd(P, target, batch, cfg.estimator, cfg, r)
    return direction_function_space(P, target, batch, cfg, prior, extra, r)


def initial_particles(target, n: int, rng: np.random.Generator) -> np.ndarray:
    """Prior draws for network posteriors, standard normal draws otherwise."""
    if hasattr(target, "sample_prior"):
        return target.sample_prior(rng, n)
    return rng.standard_normal((n, target.dim))


def run(cfg: DynamicsConfig, target, rng: np.random.Generator, n_particles: int | None = None,
        init: np.ndarray | None = None):
    """Evolve a particle set for ``cfg.steps`` iterations.

    Randomness (initialisation, minibatches, functional prior samples, extra
    projection inputs) is drawn from ``rng`` in a fixed order, so equal seeds
    give bit-identical trajectories. Returns ``(final_particles, record)``.
    """
    if init is None:
        if n_particles is None:
            raise ValueError("give either n_particles or init")
        P = initial_particles(target, n_particles, rng)
    else:
        P = np.array(init, dtype=float, copy=True)
    if P.ndim != 2 or P.shape[0] < 1 or not np.all(np.isfinite(P)):
        raise ValueError("initial particles must be a finite (n, d) array with n >= 1")
    n = P.shape[0]
    if (cfg.method.endswith("sge") or cfg.method.endswith("ssge")) and n < 2 and cfg.repulsion > 0:
        raise InvalidConfig("Stein estimators need at least two particles", "particles")

    prior = None
    if cfg.function_space and cfg.functional_prior:
        prior = FunctionalPrior(target.model, rng, cfg.prior_samples, target.prior_std,
                                cfg.prior_estimator, cfg.kernel)
    minibatched = getattr(target, "is_minibatched", False)

    record = TrajectoryRecord(cfg.snapshot_stride)
    record.record(0, P, None)
    acc = None
    for t in range(cfg.steps):
        batch = target.sample_batch(rng) if minibatched else None
        extra = None
        if cfg.function_space and cfg.extra_inputs > 0:
            lo, hi = np.asarray(cfg.extra_bounds, dtype=float).T
            extra = lo + (hi - lo) * rng.random((cfg.extra_inputs, lo.size))
        phi, info = direction(cfg, P, target, batch, prior, extra, cfg.repulsion_at(t))
        eps = cfg.step_size_at(t)
        if cfg.optimizer == "adaptive":
            acc = phi**2 if acc is None else cfg.rms_decay * acc + (1.0 - cfg.rms_decay) * phi**2
            phi = phi / (np.sqrt(acc) + cfg.rms_eps)
        P = _checked(P, phi, eps, t)
        record.record(t + 1, P, info)
        if t % 1000 == 0:
            log.debug("step %d: grad %.3g repulsion %.3g h %.3g", t, info.grad_norm,
                      info.repulsion_norm, info.bandwidth)
    if cfg.steps % cfg.snapshot_stride != 0:
        record.steps.append(cfg.steps)
        record.snapshots.append(P.copy())
    return P, record
