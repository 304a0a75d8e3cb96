"""Experiment Configuration - JSON experiment documents validated by pydantic.

Every section rejects unknown keys. Section seeds left unset are derived
from the experiment seed (see src.utils.seeding).
"""

import json
from pathlib import Path
from typing import Any, Literal

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from src.contracts.geodata import CsvSchema, GeneratorSpec
from src.core.encoding import CODE_DIM
from src.utils.errors import ConfigError
from src.utils.seeding import derive_seed

PREDICTOR_NAMES = ("stfnn", "stfnn_idw_ses", "knn", "idw_ses", "mean")


class StrictModel(BaseModel):
    """Base for config sections: unknown keys are errors."""

    model_config = ConfigDict(extra="forbid", populate_by_name=True)


class DataConfig(StrictModel):
    """Where observations come from and how they are prepared."""

    path: Path | None = Field(None, description="Observation CSV")
    csv_schema: CsvSchema = Field(default_factory=CsvSchema, alias="schema")
    synthetic: GeneratorSpec | None = Field(None, description="Synthetic scene")
    missing_threshold: float = Field(0.5, gt=0.0, le=1.0)
    time_scale: float = Field(1.0, gt=0.0, description="Days per tau unit")
    train_fraction: float = Field(0.6, gt=0.0, le=1.0)
    val_fraction: float = Field(0.2, gt=0.0, le=1.0)
    test_fraction: float = Field(0.1, gt=0.0, le=1.0)

    @model_validator(mode="after")
    def validate_source(self) -> "DataConfig":
        if (self.path is None) == (self.synthetic is None):
            raise ValueError("data needs exactly one of 'path' or 'synthetic'")
        if self.train_fraction + self.val_fraction + self.test_fraction > 1.0 + 1e-9:
            raise ValueError("split fractions sum above 1")
        return self


class ModelConfig(StrictModel):
    """Architecture of the field model."""

    hidden_dim: int = Field(64, ge=1, description="Perceptron and feed-forward width")
    n_heads: int = Field(2, ge=1)
    n_layers: int = Field(2, ge=1, description="Layers per attention decoder")
    m_steps: int = Field(16, ge=1, description="Ring steps per path")
    feature_dim: int = Field(0, ge=0, description="Length of X^src after one-hot expansion")
    dropout: float = Field(0.0, ge=0.0, lt=1.0)
    period_scale: float = Field(1.0, gt=0.0, description="Scaling index a of the periods")
    use_features: bool = Field(True, description="Feed X^src to the initial head")
    aggregation: Literal["learned", "idw_ses"] = "learned"
    idw_power: float = Field(2.0, gt=0.0)
    ses_alpha: float = Field(0.3, gt=0.0, le=1.0)
    unit_step_literal: bool = Field(
        False, description="Advance by the unit direction each step instead of 1/m of the path"
    )
    include_d0_in_sum: bool = Field(
        False, description="Add the initial difference to the integrated sum"
    )
    seed: int | None = Field(None, ge=0)

    @model_validator(mode="after")
    def validate_heads(self) -> "ModelConfig":
        if self.hidden_dim % self.n_heads:
            raise ValueError("hidden_dim must be divisible by n_heads")
        if CODE_DIM % self.n_heads:
            raise ValueError(f"n_heads must divide the code width {CODE_DIM}")
        return self


class TrainConfig(StrictModel):
    """Optimization protocol."""

    epochs: int = Field(200, ge=1)
    batch_size: int = Field(32, ge=1)
    base_lr: float = Field(1e-3, gt=0.0)
    lr_halving_period: int = Field(40, ge=1)
    mask_ratio: float = Field(0.5, gt=0.0, lt=1.0)
    k_spatial: int = Field(6, ge=1)
    t_hist: int = Field(6, ge=1)
    loss_kind: Literal["mae", "mse"] = "mae"
    grad_clip_norm: float = Field(5.0, gt=0.0)
    max_samples_per_epoch: int | None = Field(None, ge=1)
    max_val_samples: int | None = Field(None, ge=1)
    context_workers: int = Field(1, ge=1)
    checkpoint_every: int = Field(1, ge=0, description="Epoch checkpoint period; 0 disables")
    seed: int | None = Field(None, ge=0)


class BaselineConfig(StrictModel):
    """Non-learned reference predictors."""

    knn_k: int = Field(5, ge=1)
    idw_power: float = Field(2.0, gt=0.0)
    ses_alpha: float = Field(0.3, gt=0.0, le=1.0)


class EvalConfig(StrictModel):
    """Mask-ratio sweep."""

    models: list[str] = Field(default_factory=lambda: ["stfnn", "knn", "idw_ses", "mean"])
    ratios: list[float] = Field(default_factory=lambda: [0.25, 0.5, 0.75])
    max_samples_per_ratio: int | None = Field(None, ge=1)
    write_predictions: bool = False
    seed: int | None = Field(None, ge=0)

    @model_validator(mode="after")
    def validate_models(self) -> "EvalConfig":
        unknown = [m for m in self.models if m not in PREDICTOR_NAMES]
        if unknown:
            raise ValueError(f"unknown models {unknown}; choose from {PREDICTOR_NAMES}")
        if any(not 0.0 < r < 1.0 for r in self.ratios):
            raise ValueError("mask ratios must lie in (0, 1)")
        if not self.models or not self.ratios:
            raise ValueError("eval needs at least one model and one ratio")
        return self


class DiagnosticsConfig(StrictModel):
    """Curl and gradient diagnostics."""

    n_samples: int = Field(512, ge=1, description="Q, curl sample count")
    fd_step: float = Field(1e-3, gt=0.0, description="Central-difference step h")
    curl_every_n_epochs: int = Field(0, ge=0, description="0 disables curl tracking in training")
    gradient_check_samples: int = Field(512, ge=1)
    seed: int | None = Field(None, ge=0)


class ExperimentConfig(StrictModel):
    """Complete experiment: data, model, training, evaluation, diagnostics."""

    data: DataConfig
    model: ModelConfig = Field(default_factory=ModelConfig)
    train: TrainConfig = Field(default_factory=TrainConfig)
    baselines: BaselineConfig = Field(default_factory=BaselineConfig)
    eval: EvalConfig = Field(default_factory=EvalConfig)
    diagnostics: DiagnosticsConfig = Field(default_factory=DiagnosticsConfig)
    output_dir: Path = Path("runs/default")
    seed: int = Field(0, ge=0)

    model_config = ConfigDict(
        extra="forbid",
        json_schema_extra={
            "example": {
                "data": {"synthetic": {"n_stations": 100, "hours": 336}},
                "train": {"epochs": 50},
                "output_dir": "runs/synthetic",
                "seed": 7,
            }
        },
    )

    @model_validator(mode="after")
    def resolve_seeds(self) -> "ExperimentConfig":
        if self.data.synthetic is not None and self.data.synthetic.seed is None:
            self.data.synthetic.seed = derive_seed(self.seed, "synthetic")
        if self.model.seed is None:
            self.model.seed = derive_seed(self.seed, "model")
        if self.train.seed is None:
            self.train.seed = derive_seed(self.seed, "train")
        if self.eval.seed is None:
            self.eval.seed = derive_seed(self.seed, "eval")
        if self.diagnostics.seed is None:
            self.diagnostics.seed = derive_seed(self.seed, "diagnostics")
        return self


def _apply_override(document: dict[str, Any], assignment: str) -> None:
    """Apply one dotted 'a.b.c=value' override; value is parsed as JSON when possible."""
    if "=" not in assignment:
        raise ConfigError("override must look like key.path=value", [assignment])
    dotted, raw = assignment.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    keys = dotted.strip().split(".")
    node = document
    for key in keys[:-1]:
        child = node.setdefault(key, {})
        if not isinstance(child, dict):
            raise ConfigError("override descends into a non-object", [dotted])
        node = child
    node[keys[-1]] = value


def error_keys(error: ValidationError) -> list[str]:
    """Dotted paths of every field a validation error names."""
    return sorted({".".join(str(p) for p in err["loc"]) or "<root>" for err in error.errors()})


def parse_experiment_config(
    document: dict[str, Any], overrides: list[str] | None = None
) -> ExperimentConfig:
    """Validate an experiment document.

    Raises:
        ConfigError: Listing the offending key paths.
    """
    for assignment in overrides or []:
        _apply_override(document, assignment)
    try:
        return ExperimentConfig.model_validate(document)
    except ValidationError as e:
        raise ConfigError("invalid experiment config", error_keys(e)) from e


def load_experiment_config(
    path: str | Path, overrides: list[str] | None = None
) -> ExperimentConfig:
    """Read and validate an experiment JSON file.

    Raises:
        FileNotFoundError: If the file does not exist.
        ConfigError: If the JSON is malformed or fails validation.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    try:
        document = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path} is not valid JSON ({e.msg} at line {e.lineno})") from e
    if not isinstance(document, dict):
        raise ConfigError(f"{path} must contain a JSON object")
    return parse_experiment_config(document, overrides)
