"""Repulsive deep ensembles.

Particle methods that turn an ensemble of independently trained members into
an interacting system approximating a posterior: Wasserstein gradient descent
with kernel score estimates (KDE, SGE, SSGE) and Stein variational gradient
descent, in weight space or in function space.
"""
from .dynamics import METHODS, DynamicsConfig, run
from .errors import (DegenerateBandwidth, DivergentTrajectory, InvalidConfig, NoConvergence,
                     NonFiniteUpdate, NonFiniteValue, NotPositiveDefinite, RankDeficient,
                     RepulsiveEnsembleError, ShapeMismatch)
from .estimators import kde_score, sge_score, ssge_score
from .kernels import RbfKernel
from .metrics import auroc, bma_predict, ece, model_disagreement, predictive_entropy, sample_quality
from .nn import MlpArchitecture
from .oracle import HmcConfig, MetropolisConfig, hmc_sample, metropolis_sample
from .targets import (BnnPosteriorTarget, ConjugateLinearRegression, FunnelTarget,
                      GaussianMixtureTarget, GaussianTarget)

__version__ = "0.1.0"
