"""End-to-end acceptance checks, one test per criterion.

Each test prints a single ``criterion N: PASS|FAIL`` line (shown even under
output capture) and then asserts. Run alone with::

    pytest tests/test_acceptance.py -v
"""
import time

import numpy as np
import pytest

from conftest import fd_sweep
from repulsive_ensembles.dynamics import METHODS, DynamicsConfig, run
from repulsive_ensembles.estimators import kde_score, sge_score, ssge_score
from repulsive_ensembles.harness import list_recipes, recipe_config, run_experiment
from repulsive_ensembles.metrics import auroc, model_disagreement, predictive_entropy
from repulsive_ensembles.nn import (MlpArchitecture, backprop_loss_grad, forward, jacobian_transpose_vec,
                                   output_log_likelihood)
from repulsive_ensembles.numerics import finite_diff_grad, make_rng
from repulsive_ensembles.oracle import HmcConfig, hmc_sample, reversibility_error
from repulsive_ensembles.targets import (BnnPosteriorTarget, ConjugateLinearRegression, FunnelTarget,
                                         GaussianMixtureTarget, GaussianTarget)

GAUSS_2D = GaussianTarget([2.0, -1.0], np.diag([1.0, 0.5]))


@pytest.fixture
def verdict(capsys):
    def report(number, ok, detail):
        with capsys.disabled():
            print(f"\ncriterion {number}: {'PASS' if ok else 'FAIL'} | {detail}")
        assert ok, detail
    return report


class RecipeRuns:
    """Runs each builtin recipe at most once per session and keeps its timing."""

    def __init__(self, root):
        self.root = root
        self.results = {}
        self.seconds = {}

    def __call__(self, name):
        if name not in self.results:
            start = time.perf_counter()
            self.results[name] = run_experiment(recipe_config(name), self.root / "first" / name)
            self.seconds[name] = time.perf_counter() - start
        return self.results[name]


@pytest.fixture(scope="module")
def recipes(tmp_path_factory):
    return RecipeRuns(tmp_path_factory.mktemp("recipes"))


def test_criterion_1_gaussian_sampling(recipes, verdict):
    limits = {"sge": (0.1, 0.15), "svgd": (0.1, 0.15), "kde": (0.2, None), "ssge": (0.2, None)}
    ok, parts = True, []
    for suffix, (mean_tol, cov_tol) in limits.items():
        cfg = recipe_config(f"gaussian2d-{suffix}")
        assert (cfg.seed, cfg.n, cfg.steps, cfg.dynamics.bandwidth.mode) == (0, 50, 2000, "median")
        m = recipes(f"gaussian2d-{suffix}").metrics
        secs = recipes.seconds[f"gaussian2d-{suffix}"]
        good = m["mean_error"] < mean_tol and secs < 60
        if cov_tol is not None:
            good = good and m["cov_error"] < cov_tol
        ok &= good
        parts.append(f"{suffix} mean={m['mean_error']:.4f} cov={m['cov_error']:.4f} {secs:.1f}s")
    hmc = recipes("gaussian2d-hmc").metrics
    parts.append(f"hmc@50 mean={hmc['mean_error']:.4f} cov={hmc['cov_error']:.4f} "
                 f"(full chain mean={hmc['chain_mean_error']:.4f} cov={hmc['chain_cov_error']:.4f})")
    verdict(1, ok, "; ".join(parts))


def test_criterion_2_funnel(recipes, verdict):
    m = recipes("funnel-sge").metrics
    secs = recipes.seconds["funnel-sge"]
    ok = m["v_std_rel_error"] < 0.25 and secs < 120
    verdict(2, ok, f"sge v_std={m['v_std']:.3f} rel_err={m['v_std_rel_error']:.3f} {secs:.1f}s")


def test_criterion_3_estimator_quality(verdict):
    X = make_rng(0).standard_normal((500, 2))
    mse = {name: float(np.mean((est(X).scores + X) ** 2))
           for name, est in (("kde", kde_score), ("sge", sge_score), ("ssge", ssge_score))}
    worst = 0.0
    rng = make_rng(1)
    for n, d in [(2, 1), (5, 2), (10, 3), (20, 2)]:
        C = rng.standard_normal((n, d))
        est = kde_score(C)

        def log_kde(x, C=C, h=est.bandwidth):
            return np.log(np.sum(np.exp(-np.sum((C - x) ** 2, axis=1) / h)))

        for i in range(n):
            worst = max(worst, float(np.max(np.abs(est.scores[i] - finite_diff_grad(log_kde, C[i])))))
    ok = mse["sge"] <= mse["kde"] and mse["ssge"] < 0.2 and worst < 1e-5
    verdict(3, ok, f"mse kde={mse['kde']:.4f} sge={mse['sge']:.4f} ssge={mse['ssge']:.4f}; "
                   f"kde vs finite differences {worst:.2e}")


def test_criterion_4_inbetween_uncertainty(recipes, verdict):
    names = ["reg1d-de", "reg1d-fwgd_sge", "reg1d-hmc"]
    ratio = {name: recipes(name).metrics["gap_ratio"] for name in names}
    total = sum(recipes.seconds[name] for name in names)
    ok = (ratio["reg1d-fwgd_sge"] >= 2 and ratio["reg1d-fwgd_sge"] > ratio["reg1d-de"]
          and total < 600)
    verdict(4, ok, f"gap ratio fwgd_sge={ratio['reg1d-fwgd_sge']:.2f} de={ratio['reg1d-de']:.2f} "
                   f"hmc reference={ratio['reg1d-hmc']:.2f}; {total:.1f}s")


def test_criterion_5_ood_detection(recipes, verdict):
    f = recipes("class2d-fwgd_kde").metrics
    d = recipes("class2d-de").metrics
    ok = f["auroc_entropy"] > d["auroc_entropy"] and f["auroc_md"] > d["auroc_md"]
    verdict(5, ok, f"fwgd_kde auroc H={f['auroc_entropy']:.3f} MD={f['auroc_md']:.3f}; "
                   f"de auroc H={d['auroc_entropy']:.3f} MD={d['auroc_md']:.3f}")


def _small_bnn():
    r = make_rng(3)
    arch = MlpArchitecture((1, 6, 1))
    X = r.uniform(-1, 1, (8, 1))
    return BnnPosteriorTarget(arch, X, np.sin(3 * X), "gaussian", 0.2, 1.0)


def test_criterion_6_reduction_identities(verdict):
    single = {m: run(DynamicsConfig(m, 200, step_size=0.05), GAUSS_2D, make_rng(7), 1)[0]
              for m in ("deep_ensemble", "wgd_kde", "svgd_w")}
    same_single = all(np.array_equal(single["deep_ensemble"], P) for P in single.values())
    bnn = _small_bnn()
    init = make_rng(0).standard_normal((5, bnn.dim))
    de = run(DynamicsConfig("deep_ensemble", 10, step_size=0.01), bnn, make_rng(2), init=init)[0]
    mismatched = [m for m in METHODS if not np.array_equal(
        run(DynamicsConfig(m, 10, step_size=0.01, repulsion=0.0), bnn, make_rng(2), init=init)[0], de)]
    ok = same_single and not mismatched
    verdict(6, ok, f"n=1 trajectories identical: {same_single}; "
                   f"zero-repulsion mismatches: {mismatched or 'none'}")


def test_criterion_7_gradient_integrity(verdict):
    rng = make_rng(11)
    arch = MlpArchitecture((2, 8, 8, 3))
    Xc = rng.standard_normal((10, 2))
    yc = rng.integers(0, 3, 10)
    reg_arch = MlpArchitecture((1, 10, 1))
    Xr = rng.uniform(-1, 1, (12, 1))
    cases = {
        "gaussian": (GaussianTarget([1.0, -2.0, 0.5], [[2.0, 0.3, 0.0], [0.3, 1.0, 0.2], [0.0, 0.2, 0.5]]),
                     rng.standard_normal((100, 3))),
        "funnel": (FunnelTarget(3.0, 2), np.c_[rng.uniform(-3, 3, 100), rng.standard_normal((100, 2))]),
        "mixture": (GaussianMixtureTarget([[-2.0], [2.0]], [0.7, 0.5], [0.3, 0.7]),
                    rng.uniform(-4, 4, (100, 1))),
        "bnn_regression": (BnnPosteriorTarget(reg_arch, Xr, np.sin(3 * Xr), "gaussian", 0.1, 1.0),
                           0.7 * rng.standard_normal((100, reg_arch.n_params))),
        "bnn_classification": (BnnPosteriorTarget(arch, Xc, yc, "categorical"),
                               0.7 * rng.standard_normal((100, arch.n_params))),
        "conjugate": (ConjugateLinearRegression(Xr[:, 0], Xr[:, 0] * 0.5, 0.3, 1.0),
                      rng.standard_normal((100, 1))),
    }
    errors = {name: fd_sweep(t.log_prob, t.grad_log_prob, pts) for name, (t, pts) in cases.items()}

    def loss_grad(w):
        return backprop_loss_grad(arch, w, Xc, yc, "categorical")

    def loss(w):
        return float(output_log_likelihood(forward(arch, w, Xc)[None], yc, "categorical")[0])

    errors["network"] = fd_sweep(loss, loss_grad, 0.7 * rng.standard_normal((100, arch.n_params)))

    # explicit Jacobian by central differences of the network outputs
    w = rng.standard_normal(arch.n_params)
    v = rng.standard_normal((Xc.shape[0], 3))
    J = np.empty((v.size, arch.n_params))
    for k in range(arch.n_params):
        e = np.zeros(arch.n_params)
        e[k] = 1e-5
        J[:, k] = (forward(arch, w + e, Xc) - forward(arch, w - e, Xc)).ravel() / 2e-5
    jt = jacobian_transpose_vec(arch, w, Xc, v)
    jvp_err = float(np.linalg.norm(jt - J.T @ v.ravel()) / np.linalg.norm(J.T @ v.ravel()))
    ok = max(errors.values()) < 1e-4 and jvp_err < 1e-4
    worst = max(errors, key=errors.get)
    verdict(7, ok, f"worst sweep {worst}={errors[worst]:.2e}; J^T v error {jvp_err:.2e}")


def test_criterion_8_oracle_integrity(verdict):
    r = make_rng(7)
    X = r.standard_normal(20)
    t = ConjugateLinearRegression(X, 0.8 * X + 0.5 * r.standard_normal(20), noise_std=0.5)
    mean, cov = t.posterior()
    chain = hmc_sample(t, HmcConfig(0.05, 10, 20000, seed=0, step_jitter=0.5)).samples
    mean_err = abs(chain.mean() - mean[0]) / abs(mean[0])
    var_err = abs(chain.var() - cov[0, 0]) / cov[0, 0]
    rev = reversibility_error(FunnelTarget(), np.array([0.5, 0.3]), np.array([0.4, -1.1]), 0.05, 30)
    ok = mean_err < 0.05 and var_err < 0.05 and rev < 1e-8
    verdict(8, ok, f"posterior mean err {mean_err:.4f}, variance err {var_err:.4f}; "
                   f"reversibility {rev:.1e}")


def test_criterion_9_metric_pinning(verdict):
    h = float(predictive_entropy(np.full(10, 0.1)))
    md = float(model_disagreement(np.array([[[1.0, 0.0]], [[0.0, 1.0]]]))[0])
    a = auroc([0.9, 0.8], [0.7, 0.85])
    ok = abs(h - np.log(10)) <= 1e-12 and abs(md - 0.5) <= 1e-12 and a == 0.75
    verdict(9, ok, f"entropy={h!r} md={md!r} auroc={a!r}")


def test_criterion_10_determinism(recipes, verdict, tmp_path):
    differing = []
    for name in list_recipes():
        first = recipes(name)
        again = run_experiment(recipe_config(name), tmp_path / name)
        for key, path in first.files.items():
            if path.endswith(".csv"):
                with open(path, "rb") as a, open(again.files[key], "rb") as b:
                    if a.read() != b.read():
                        differing.append(f"{name}/{key}")
    verdict(10, not differing, f"{len(list_recipes())} recipes rerun; "
                               f"differing payloads: {differing or 'none'}")
