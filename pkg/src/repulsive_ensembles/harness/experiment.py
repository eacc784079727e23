"""Run one configured experiment and write its artifacts.

Output directory layout:

``summary.jsonl``
    Line 1 holds the wall-clock fields (timestamp, elapsed seconds); line 2
    the deterministic run record (config, metrics, file list).
``particles.csv``
    ``step, particle_index, w0, ..., w{d-1}`` for every stored snapshot.
``predictive.csv``
    Network tasks only: ``x`` (or ``x1, x2``), ``bma_mean``,
    ``epistemic_std``, ``aleatoric_std``, ``entropy``, ``md`` on the
    evaluation grid.
``moments.csv``
    Sampling tasks only: ``stat, i, j, value`` rows for the particle mean and
    covariance.
``config.yaml``
    The fully resolved configuration.
"""
from __future__ import annotations

import csv
import json
import math
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np
from scipy.special import softmax

from ..dynamics import DynamicsConfig, run
from ..errors import InvalidConfig
from ..metrics import (EvalReport, bma_predict, evaluate_classification, gaussian_nll,
                       mmd2_unbiased, sample_quality)
from ..nn import MlpArchitecture, forward
from ..numerics import make_rng, split_rng
from ..oracle import HmcConfig, hmc_sample
from ..targets import BnnPosteriorTarget, FunnelTarget, GaussianTarget
from .config import ORACLE_METHOD, ExperimentConfig, config_record, dump_config
from .datasets import Dataset, gen_classification_2d, gen_regression_1d


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    particles: np.ndarray
    metrics: dict
    report: EvalReport | None = None
    files: dict = field(default_factory=dict)
    dataset: Dataset | None = None


def _fmt(v) -> str:
    return format(float(v), ".17g")


def _clean(obj):
    """JSON-safe copy: arrays to lists, non-finite floats to ``None``."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(obj) if math.isfinite(obj) else None
    return obj


def write_csv(path: Path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([v if isinstance(v, (str, int, np.integer)) else _fmt(v) for v in row])


def load_csv(path):
    """``(columns, array)`` for a CSV written by this module (numeric columns only)."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        data = np.array([[float(v) for v in row] for row in reader], dtype=float)
    return header, data.reshape(-1, len(header))


def load_moments(path):
    """``(mean, cov)`` arrays from a ``moments.csv`` file."""
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    mean = {int(r["i"]): float(r["value"]) for r in rows if r["stat"] == "mean"}
    d = len(mean)
    cov = np.empty((d, d))
    for r in rows:
        if r["stat"] == "cov":
            cov[int(r["i"]), int(r["j"])] = float(r["value"])
    return np.array([mean[i] for i in range(d)]), cov


def load_summary(path):
    """``(header, record)`` dictionaries from a summary file."""
    lines = Path(path).read_text().splitlines()
    return json.loads(lines[0]), json.loads(lines[1])


# ---------------------------------------------------------------------------
# task construction
# ---------------------------------------------------------------------------

def build_task(cfg: ExperimentConfig, rng: np.random.Generator):
    """``(target, dataset or None, architecture or None)`` for a config."""
    t = cfg.task
    if t.kind == "gaussian":
        mean = np.asarray(t.mean, dtype=float)
        cov = np.asarray(t.cov, dtype=float)
        if cov.shape != (mean.size, mean.size):
            raise InvalidConfig("covariance shape does not match the mean", "task.cov")
        try:
            return GaussianTarget(mean, cov), None, None
        except ValueError as exc:
            raise InvalidConfig(str(exc), "task.cov") from None
    if t.kind == "funnel":
        return FunnelTarget(t.scale, t.x_dim), None, None
    m = cfg.model
    if t.kind == "regression_1d":
        data = gen_regression_1d(rng, t.n_per_cluster, t.gap, t.noise_std, t.cluster_width,
                                 t.grid, t.gap_margin)
        arch = MlpArchitecture((1, *m.hidden, 1), m.activation, "identity")
        target = BnnPosteriorTarget(arch, data.X_train, data.y_train, "gaussian", m.noise_std,
                                    m.prior_std, m.batch_size)
    else:
        data = gen_classification_2d(rng, t.n, t.layout, t.spread, t.separation, t.ring_factor,
                                     t.n_test, t.n_ood, t.grid_size)
        arch = MlpArchitecture((2, *m.hidden, 2), m.activation, "logits")
        target = BnnPosteriorTarget(arch, data.X_train, data.y_train, "categorical",
                                    m.noise_std, m.prior_std, m.batch_size)
    return target, data, arch


def _thin(chain: np.ndarray, n: int) -> np.ndarray:
    idx = np.unique(np.linspace(0, chain.shape[0] - 1, min(n, chain.shape[0])).round().astype(int))
    return chain[idx]


def _run_oracle(cfg: ExperimentConfig, target, rng):
    h = cfg.hmc
    init = None
    if h.warm_start_steps > 0 and hasattr(target, "sample_prior"):
        warm = DynamicsConfig("deep_ensemble", h.warm_start_steps, step_size=h.warm_start_step_size,
                              optimizer="adaptive", snapshot_stride=h.warm_start_steps)
        init = run(warm, target, rng, 1)[0][0]
    hc = HmcConfig(h.step_size, h.n_leapfrog, cfg.steps, h.burn_in, cfg.seed, h.step_jitter)
    chain = hmc_sample(target, hc, rng, init)
    extra = {"acceptance_rate": chain.acceptance_rate, "divergent": chain.n_divergent,
             "chain_length": int(chain.samples.shape[0])}
    return _thin(chain.samples, cfg.n), [(cfg.steps, _thin(chain.samples, cfg.n))], extra, chain.samples


# ---------------------------------------------------------------------------
# metrics per task
# ---------------------------------------------------------------------------

def _moment_rows(P):
    mean = P.mean(axis=0)
    cov = np.atleast_2d(np.cov(P.T)) if P.shape[0] > 1 else np.full((P.shape[1],) * 2, np.nan)
    rows = [("mean", i, "", mean[i]) for i in range(mean.size)]
    rows += [("cov", i, j, cov[i, j]) for i in range(mean.size) for j in range(mean.size)]
    return rows


def _sampling_metrics(cfg, target, P, rng, chain):
    out = {}
    sel = cfg.selected_metrics
    if cfg.task.kind == "gaussian":
        if "moments" in sel and P.shape[0] > 1:
            out["mean_error"], out["cov_error"], _ = sample_quality(P, target.mean, target.cov)
        if "mmd" in sel and P.shape[0] > 1:
            ref = target.sample(rng, cfg.task.reference_samples)
            out["mmd2"] = mmd2_unbiased(P, ref)
        if chain is not None:
            out["chain_mean_error"], out["chain_cov_error"], _ = sample_quality(chain, target.mean,
                                                                                target.cov)
    else:
        if P.shape[0] > 1:
            v_std = float(np.std(P[:, 0], ddof=1))
            out.update(v_mean=float(P[:, 0].mean()), v_std=v_std,
                       v_std_rel_error=abs(v_std - target.scale) / target.scale)
        if chain is not None:
            out["chain_v_std"] = float(np.std(chain[:, 0], ddof=1))
    return out


def _regression_metrics(cfg, data, arch, P):
    noise = cfg.model.noise_std
    grid = bma_predict(forward(arch, P, data.X_grid)[..., 0], "gaussian", noise)
    gap = bma_predict(forward(arch, P, data.info["X_gap"])[..., 0], "gaussian", noise)
    train = bma_predict(forward(arch, P, data.X_train)[..., 0], "gaussian", noise)
    (c_lo, _), (_, c_hi) = data.info["clusters"]
    inside = (data.X_grid[:, 0] >= c_lo) & (data.X_grid[:, 0] <= c_hi)
    out = {}
    sel = cfg.selected_metrics
    gap_std = float(np.sqrt(gap.epistemic_var).mean())
    data_std = float(np.sqrt(train.epistemic_var).mean())
    if "gap_ratio" in sel:
        out.update(gap_epistemic_std=gap_std, data_epistemic_std=data_std,
                   gap_ratio=gap_std / data_std if data_std > 0 else float("inf"))
    truth = data.y_test[:, 0]
    if "rmse" in sel:
        out["rmse"] = float(np.sqrt(np.mean((grid.mean[inside] - truth[inside]) ** 2)))
    if "nll" in sel:
        out["nll"] = gaussian_nll(grid.mean[inside], grid.predictive_var[inside], truth[inside])
    rows = [(data.X_grid[i, 0], grid.mean[i], math.sqrt(grid.epistemic_var[i]),
             math.sqrt(grid.aleatoric_var[i]), grid.entropy[i], grid.disagreement[i])
            for i in range(data.X_grid.shape[0])]
    return out, ["x", "bma_mean", "epistemic_std", "aleatoric_std", "entropy", "md"], rows


def _classification_metrics(cfg, data, arch, P):
    def probs(X):
        return softmax(forward(arch, P, X), axis=-1)

    report = evaluate_classification(probs(data.X_test), data.y_test, probs(data.X_ood), cfg.ece_bins)
    full = report.to_dict()
    keep = {"accuracy": ("accuracy",), "nll": ("nll",), "ece": ("ece",),
            "auroc": ("auroc_entropy", "auroc_md", "entropy_ratio", "md_ratio")}
    out = {k: full[k] for m in cfg.selected_metrics for k in keep[m]}
    grid = bma_predict(probs(data.X_grid), "categorical")
    rows = [(data.X_grid[i, 0], data.X_grid[i, 1], grid.mean[i, 1], grid.disagreement[i],
             math.sqrt(grid.aleatoric_var[i]), grid.entropy[i], grid.disagreement[i])
            for i in range(data.X_grid.shape[0])]
    header = ["x1", "x2", "bma_mean", "epistemic_std", "aleatoric_std", "entropy", "md"]
    return out, report, header, rows


# ---------------------------------------------------------------------------
# driver
# ---------------------------------------------------------------------------

def run_experiment(cfg: ExperimentConfig, out_dir=None) -> ExperimentResult:
    """Execute ``cfg`` and, when an output directory is given, write its artifacts.

    Randomness comes from three streams split off ``cfg.seed`` (data,
    dynamics, evaluation), so reruns with the same seed write identical files
    apart from the first line of ``summary.jsonl``.
    """
    started = time.perf_counter()
    data_rng, run_rng, eval_rng = split_rng(make_rng(cfg.seed), 3)
    target, data, arch = build_task(cfg, data_rng)

    chain = None
    extra = {}
    if cfg.method == ORACLE_METHOD:
        P, snapshots, extra, chain = _run_oracle(cfg, target, run_rng)
    else:
        P, record = run(cfg.dynamics_config(), target, run_rng, cfg.n)
        snapshots = list(zip(record.steps, record.snapshots))

    report = None
    pred = None
    if data is None:
        metrics = _sampling_metrics(cfg, target, P, eval_rng, chain)
    elif data.kind == "regression":
        metrics, *pred = _regression_metrics(cfg, data, arch, P)
    else:
        metrics, report, *pred = _classification_metrics(cfg, data, arch, P)
    metrics.update(extra)

    result = ExperimentResult(cfg, P, metrics, report, {}, data)
    out_dir = out_dir if out_dir is not None else cfg.output
    if out_dir is None:
        return result
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    files = {}
    header = ["step", "particle_index"] + [f"w{k}" for k in range(P.shape[1])]
    write_csv(out / "particles.csv", header,
              ([step, i, *S[i]] for step, S in snapshots for i in range(S.shape[0])))
    files["particles"] = "particles.csv"
    if pred is not None:
        write_csv(out / "predictive.csv", pred[0], pred[1])
        files["predictive"] = "predictive.csv"
    else:
        write_csv(out / "moments.csv", ["stat", "i", "j", "value"], _moment_rows(P))
        files["moments"] = "moments.csv"
    (out / "config.yaml").write_text(dump_config(cfg))
    files["config"] = "config.yaml"
    files["summary"] = "summary.jsonl"
    result.files = {k: str(out / v) for k, v in files.items()}

    stamp = {"timestamp": datetime.now(timezone.utc).isoformat(timespec="seconds"),
             "elapsed_s": round(time.perf_counter() - started, 3)}
    record = {"status": "ok", "name": cfg.name, "method": cfg.method, "seed": cfg.seed,
              "steps": cfg.steps, "n": cfg.n, "task": cfg.task.kind, "metrics": metrics,
              "files": files, "config": config_record(cfg)}
    with open(out / "summary.jsonl", "w") as fh:
        fh.write(json.dumps(_clean(stamp)) + "\n")
        fh.write(json.dumps(_clean(record), sort_keys=True) + "\n")
    return result
