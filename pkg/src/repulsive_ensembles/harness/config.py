"""Experiment configuration: a YAML mapping validated strictly before any run.

``name``, ``seed``, ``method``, ``steps`` and ``n`` (particle count, or kept
draws for the ``hmc`` oracle) are required. Every other section has
documented defaults, and unknown keys anywhere are rejected with the dotted
path of the offending key.
"""
from __future__ import annotations

from pathlib import Path
from typing import Annotated, Literal, Optional, Union

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from ..dynamics import METHODS, DynamicsConfig
from ..errors import InvalidConfig, RepulsiveEnsembleError
from ..kernels import RbfKernel

ORACLE_METHOD = "hmc"
PosFloat = Annotated[float, Field(gt=0)]
PosInt = Annotated[int, Field(gt=0)]


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", strict=False, frozen=True)


class GaussianTask(_Strict):
    kind: Literal["gaussian"]
    mean: tuple[float, ...] = (2.0, -1.0)
    cov: tuple[tuple[float, ...], ...] = ((1.0, 0.0), (0.0, 0.5))
    reference_samples: PosInt = 2000


class FunnelTask(_Strict):
    kind: Literal["funnel"]
    scale: PosFloat = 3.0
    x_dim: PosInt = 1


class Regression1dTask(_Strict):
    kind: Literal["regression_1d"]
    n_per_cluster: PosInt = 20
    gap: tuple[float, float] = (-0.7, 0.7)
    cluster_width: PosFloat = 0.8
    noise_std: Annotated[float, Field(ge=0)] = 0.1
    gap_margin: Annotated[float, Field(ge=0)] = 0.2
    grid: tuple[float, float, PosInt] = (-2.5, 2.5, 101)


class Classification2dTask(_Strict):
    kind: Literal["classification_2d"]
    n: PosInt = 100
    layout: Literal["blobs", "moons"] = "blobs"
    spread: PosFloat = 0.35
    separation: PosFloat = 2.0
    ring_factor: Annotated[float, Field(ge=3.0)] = 3.5
    n_test: PosInt = 100
    n_ood: PosInt = 200
    grid_size: PosInt = 41


Task = Annotated[Union[GaussianTask, FunnelTask, Regression1dTask, Classification2dTask],
                 Field(discriminator="kind")]


class ModelSpec(_Strict):
    hidden: tuple[PosInt, ...] = (50, 50)
    activation: Literal["tanh", "relu"] = "tanh"
    prior_std: PosFloat = 1.0
    noise_std: PosFloat = 0.1
    batch_size: Optional[PosInt] = None


class BandwidthSpec(_Strict):
    mode: Literal["fixed", "median", "median_over_log_n"] = "median"
    lengthscale: Optional[PosFloat] = None
    floor: Annotated[float, Field(ge=0)] = 1e-6


class DynamicsSpec(_Strict):
    step_size: PosFloat = 0.05
    schedule: Literal["constant", "inverse"] = "constant"
    decay: Annotated[float, Field(ge=0)] = 0.0
    optimizer: Literal["plain", "adaptive"] = "plain"
    rms_decay: Annotated[float, Field(gt=0, lt=1)] = 0.9
    rms_eps: PosFloat = 1e-8
    bandwidth: BandwidthSpec = BandwidthSpec()
    sge_eta: PosFloat = DynamicsConfig.sge_eta
    ssge_energy: Annotated[float, Field(gt=0, le=1)] = DynamicsConfig.ssge_energy
    ssge_eigencount: Optional[PosInt] = None
    repulsion: Annotated[float, Field(ge=0)] = 1.0
    repulsion_warmup: Annotated[int, Field(ge=0)] = 0
    svgd_normalize: bool = True
    functional_prior: bool = True
    prior_samples: PosInt = 100
    prior_estimator: Literal["kde", "ssge"] = "kde"
    extra_inputs: Annotated[int, Field(ge=0)] = 0
    extra_bounds: Optional[tuple[tuple[float, float], ...]] = None
    snapshot_stride: Optional[PosInt] = None


class HmcSpec(_Strict):
    step_size: PosFloat = 0.1
    n_leapfrog: PosInt = 20
    burn_in: Optional[Annotated[int, Field(ge=0)]] = None
    step_jitter: Annotated[float, Field(ge=0, lt=1)] = 0.0
    # optional gradient-ascent warm start (single adaptive member) for network posteriors
    warm_start_steps: Annotated[int, Field(ge=0)] = 0
    warm_start_step_size: PosFloat = 1e-3


METRICS = {
    "gaussian": ("moments", "mmd"),
    "funnel": ("moments",),
    "regression_1d": ("gap_ratio", "rmse", "nll"),
    "classification_2d": ("accuracy", "nll", "ece", "auroc"),
}


class ExperimentConfig(_Strict):
    name: str
    seed: Annotated[int, Field(ge=0)]
    method: str
    steps: Annotated[int, Field(ge=0)]
    n: PosInt
    task: Task
    model: ModelSpec = ModelSpec()
    dynamics: DynamicsSpec = DynamicsSpec()
    hmc: HmcSpec = HmcSpec()
    metrics: Optional[tuple[str, ...]] = None
    output: Optional[str] = None
    ece_bins: PosInt = 15

    @field_validator("method")
    @classmethod
    def _known_method(cls, v):
        if v not in METHODS and v != ORACLE_METHOD:
            raise ValueError(f"unknown method {v!r}; expected one of {METHODS + (ORACLE_METHOD,)}")
        return v

    @model_validator(mode="after")
    def _consistent(self):
        kind = self.task.kind
        if self.method in ("svgd_f", "fwgd_kde", "fwgd_sge", "fwgd_ssge") and kind in ("gaussian", "funnel"):
            raise ValueError(f"function-space method {self.method} needs a network task")
        if self.metrics is not None:
            bad = [m for m in self.metrics if m not in METRICS[kind]]
            if bad:
                raise ValueError(f"metrics {bad} not available for {kind}; choose from {METRICS[kind]}")
        if self.dynamics.extra_inputs > 0 and self.dynamics.extra_bounds is None:
            raise ValueError("dynamics.extra_inputs needs dynamics.extra_bounds")
        if self.method == ORACLE_METHOD and self.steps == 0:
            raise ValueError("the hmc oracle needs at least one iteration")
        if self.method.endswith("sge") and self.n < 2 and self.dynamics.repulsion > 0:
            raise ValueError("Stein estimators need at least two particles")
        return self

    @property
    def selected_metrics(self) -> tuple[str, ...]:
        return METRICS[self.task.kind] if self.metrics is None else self.metrics

    def dynamics_config(self) -> DynamicsConfig:
        d = self.dynamics
        kernel = RbfKernel(d.bandwidth.lengthscale, d.bandwidth.mode, d.bandwidth.floor)
        fields = d.model_dump(exclude={"bandwidth", "snapshot_stride"})
        stride = d.snapshot_stride or max(self.steps, 1)
        return DynamicsConfig(method=self.method, steps=self.steps, kernel=kernel,
                              snapshot_stride=stride, **fields)

    def with_overrides(self, **overrides) -> "ExperimentConfig":
        """Copy with top-level fields replaced (``None`` values are ignored), revalidated."""
        data = self.model_dump()
        data.update({k: v for k, v in overrides.items() if v is not None})
        return parse_config(data)


def _dotted(loc) -> str:
    parts = [str(p) for p in loc if not (isinstance(p, str) and p in
                                         ("gaussian", "funnel", "regression_1d", "classification_2d"))]
    return ".".join(parts) if parts else "<root>"


def parse_config(data) -> ExperimentConfig:
    """Validate a mapping; raises :class:`InvalidConfig` naming the first bad key."""
    if not isinstance(data, dict):
        raise InvalidConfig("configuration must be a mapping", "<root>")
    try:
        cfg = ExperimentConfig.model_validate(data)
    except ValidationError as exc:
        err = exc.errors()[0]
        key = _dotted(err["loc"])
        if err["type"] == "extra_forbidden":
            raise InvalidConfig(f"unknown key {key!r}", key) from None
        if err["type"] == "missing":
            raise InvalidConfig(f"required key {key!r} is missing", key) from None
        msg = err["msg"].removeprefix("Value error, ")
        raise InvalidConfig(f"{key}: {msg}", key) from None
    if cfg.method == ORACLE_METHOD:
        return cfg
    try:
        cfg.dynamics_config()
    except InvalidConfig as exc:
        raise InvalidConfig(str(exc), f"dynamics.{exc.key}") from None
    except (RepulsiveEnsembleError, ValueError) as exc:
        raise InvalidConfig(str(exc), "dynamics.bandwidth") from None
    return cfg


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise InvalidConfig(f"cannot read {path}: {exc.strerror}", "<file>") from None
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise InvalidConfig(f"not valid YAML: {exc}", "<file>") from None
    return parse_config(data)


def config_record(cfg: ExperimentConfig) -> dict:
    """JSON-ready mapping of ``cfg`` without the output location."""
    return cfg.model_dump(mode="json", exclude={"output"})


def dump_config(cfg: ExperimentConfig) -> str:
    return yaml.safe_dump(config_record(cfg), sort_keys=False)
