"""Ensemble predictive distributions and evaluation statistics.

Member predictions for classification are probability arrays of shape
``(n_members, n_inputs, n_classes)``; for regression they are predictive
means of shape ``(n_members, n_inputs)`` with Gaussian noise of known scale.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
from scipy.stats import rankdata

from .errors import ShapeMismatch
from .kernels import cross_gram, resolve_bandwidth, RbfKernel


@dataclass
class PredictiveSummary:
    """Per-input ensemble statistics.

    Regression stores member means and the mixture mean, and splits the
    predictive variance into ``aleatoric_var`` (mean member noise variance)
    and ``epistemic_var`` (variance of member means). Classification stores
    probabilities and applies the same split to the one-hot label indicator,
    averaged over classes: ``epistemic_var = MD^2`` and ``aleatoric_var`` is
    the mean of ``p_i (1 - p_i)``.
    """

    kind: str
    members: np.ndarray
    mean: np.ndarray
    entropy: np.ndarray
    disagreement: np.ndarray
    epistemic_var: np.ndarray
    aleatoric_var: np.ndarray

    @property
    def predictive_var(self):
        return self.epistemic_var + self.aleatoric_var


def predictive_entropy(p) -> np.ndarray:
    """``-sum_y p log p`` over the last axis, natural log, with ``0 log 0 = 0``."""
    p = np.asarray(p, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(p > 0, p * np.log(np.where(p > 0, p, 1.0)), 0.0)
    return -terms.sum(axis=-1)


def model_disagreement(members, mean=None) -> np.ndarray:
    """Root of the class-averaged variance of member probabilities around their mean.

    ``MD^2(x) = mean_y (1/n) sum_i (p_i(y|x) - pbar(y|x))^2``, with a uniform
    average over classes.
    """
    members = np.asarray(members, dtype=float)
    if mean is None:
        mean = members.mean(axis=0)
    sq = ((members - mean[None]) ** 2).mean(axis=0)
    return np.sqrt(sq.mean(axis=-1))


def bma_predict(members, likelihood: str = "categorical", noise_std=None) -> PredictiveSummary:
    """Equal-weight Bayesian model average over ensemble members."""
    members = np.asarray(members, dtype=float)
    if likelihood == "categorical":
        if members.ndim == 2:
            members = members[:, None, :]
        if members.ndim != 3:
            raise ShapeMismatch("classification members must be (n_members, n_inputs, n_classes)")
        if np.any(members < 0) or not np.allclose(members.sum(-1), 1.0, atol=1e-8):
            raise ValueError("member predictions must be probability vectors")
        mean = members.mean(axis=0)
        md = model_disagreement(members, mean)
        # class-averaged split of the one-hot label variance p(1 - p)
        aleatoric = (members * (1.0 - members)).mean(axis=0).mean(axis=-1)
        return PredictiveSummary("categorical", members, mean, predictive_entropy(mean), md,
                                 md**2, aleatoric)
    if likelihood == "gaussian":
        if members.ndim == 3 and members.shape[-1] == 1:
            members = members[..., 0]
        if members.ndim != 2:
            raise ShapeMismatch("regression members must be (n_members, n_inputs)")
        if noise_std is None:
            raise ValueError("regression averaging needs the observation noise scale")
        noise_var = np.broadcast_to(np.asarray(noise_std, dtype=float) ** 2, members.shape)
        mean = members.mean(axis=0)
        epistemic = members.var(axis=0)
        aleatoric = noise_var.mean(axis=0)
        # differential entropy of the moment-matched Gaussian
        entropy = 0.5 * np.log(2 * np.pi * np.e * (epistemic + aleatoric))
        return PredictiveSummary("gaussian", members, mean, entropy, np.sqrt(epistemic),
                                 epistemic, aleatoric)
    raise ValueError(f"unknown likelihood {likelihood!r}")


def ece(confidences, correct, bins: int = 15) -> float:
    """Expected calibration error with ``bins`` equal-width bins on ``[0, 1]``.

    Bin ``b`` holds confidences in ``(b/B, (b+1)/B]``; a confidence of exactly
    0 goes to the first bin. Empty bins contribute nothing.
    """
    if bins < 1:
        raise ValueError("need at least one bin")
    conf = np.asarray(confidences, dtype=float).ravel()
    corr = np.asarray(correct, dtype=float).ravel()
    if conf.shape != corr.shape:
        raise ShapeMismatch("confidences and correctness differ in length")
    if conf.size == 0:
        return 0.0
    if np.any((conf < 0) | (conf > 1)):
        raise ValueError("confidences must lie in [0, 1]")
    idx = np.clip(np.ceil(conf * bins).astype(int) - 1, 0, bins - 1)
    conf_sum = np.bincount(idx, weights=conf, minlength=bins)
    acc_sum = np.bincount(idx, weights=corr, minlength=bins)
    return float(np.abs(acc_sum - conf_sum).sum() / conf.size)


def auroc(scores_ood, scores_test) -> float:
    """Probability that a random OOD score exceeds a random test score (ties count 1/2)."""
    a = np.asarray(scores_ood, dtype=float).ravel()
    b = np.asarray(scores_test, dtype=float).ravel()
    if a.size == 0 or b.size == 0:
        raise ValueError("both score sets must be nonempty")
    ranks = rankdata(np.concatenate([a, b]))
    u = ranks[: a.size].sum() - a.size * (a.size + 1) / 2.0
    return float(u / (a.size * b.size))


def accuracy(probs, labels) -> float:
    return float(np.mean(np.argmax(probs, axis=-1) == np.asarray(labels)))


def nll(probs, labels, floor: float = 1e-12) -> float:
    probs = np.asarray(probs, dtype=float)
    labels = np.asarray(labels)
    picked = probs[np.arange(labels.size), labels]
    return float(-np.mean(np.log(np.maximum(picked, floor))))


def gaussian_nll(mean, var, y) -> float:
    mean, var, y = (np.asarray(a, dtype=float) for a in (mean, var, y))
    return float(np.mean(0.5 * np.log(2 * np.pi * var) + 0.5 * (y - mean) ** 2 / var))


def safe_ratio(num: float, den: float) -> float:
    return float(num / den) if den > 0 else float("inf")


@dataclass
class EvalReport:
    accuracy: float
    nll: float
    ece: float
    auroc_entropy: float
    auroc_md: float
    entropy_ratio: float
    md_ratio: float

    def to_dict(self):
        return asdict(self)


def evaluate_classification(test_members, labels, ood_members, bins: int = 15) -> EvalReport:
    """Accuracy/NLL/ECE on the test split plus OOD detection from entropy and disagreement."""
    test = bma_predict(test_members, "categorical")
    ood = bma_predict(ood_members, "categorical")
    labels = np.asarray(labels)
    conf = test.mean.max(axis=-1)
    correct = np.argmax(test.mean, axis=-1) == labels
    return EvalReport(
        accuracy=accuracy(test.mean, labels),
        nll=nll(test.mean, labels),
        ece=ece(conf, correct, bins),
        auroc_entropy=auroc(ood.entropy, test.entropy),
        auroc_md=auroc(ood.disagreement, test.disagreement),
        entropy_ratio=safe_ratio(ood.entropy.mean(), test.entropy.mean()),
        md_ratio=safe_ratio(ood.disagreement.mean(), test.disagreement.mean()),
    )


def mmd2_unbiased(X, Y, h: float | None = None) -> float:
    """Unbiased squared MMD with an RBF kernel (median bandwidth of the pooled sample)."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    m, n = X.shape[0], Y.shape[0]
    if m < 2 or n < 2:
        raise ValueError("MMD needs at least two points per sample")
    if h is None:
        h = resolve_bandwidth(RbfKernel(), np.concatenate([X, Y]))
    Kxx = cross_gram(X, X, h)
    Kyy = cross_gram(Y, Y, h)
    Kxy = cross_gram(X, Y, h)
    return float((Kxx.sum() - np.trace(Kxx)) / (m * (m - 1))
                 + (Kyy.sum() - np.trace(Kyy)) / (n * (n - 1))
                 - 2.0 * Kxy.mean())


def sample_quality(P, mean, cov, oracle=None):
    """``(||mean(P) - mean||, ||cov(P) - cov||_F, mmd2 or None)``.

    The particle covariance uses the unbiased ``n - 1`` normalisation.
    """
    P = np.atleast_2d(np.asarray(P, dtype=float))
    if P.shape[0] < 2:
        raise ValueError("sample quality needs at least two particles")
    mean_err = float(np.linalg.norm(P.mean(axis=0) - np.asarray(mean, dtype=float)))
    cov_err = float(np.linalg.norm(np.atleast_2d(np.cov(P.T)) - np.atleast_2d(cov)))
    mmd = None if oracle is None else mmd2_unbiased(P, oracle)
    return mean_err, cov_err, mmd
