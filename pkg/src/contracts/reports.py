"""Report Contracts - Results written to disk and printed by the CLI."""

import math

from pydantic import BaseModel, ConfigDict, Field, model_validator


class MetricSet(BaseModel):
    """Point-error metrics of one model on one sample set (raw units)."""

    mae: float = Field(..., ge=0.0, description="Mean absolute error (µg/m³)")
    rmse: float = Field(..., ge=0.0, description="Root mean squared error (µg/m³)")
    mape: float | None = Field(
        None,
        description="Mean absolute percentage error as a ratio; absent when every truth is zero",
    )
    n: int = Field(..., ge=1, description="Number of samples")
    mape_excluded: int = Field(
        0, ge=0, description="Samples left out of MAPE because |truth| <= 1e-6"
    )

    @model_validator(mode="after")
    def validate_jensen(self) -> "MetricSet":
        # rmse >= mae up to rounding of the two reductions
        if self.rmse < self.mae - 1e-12 * max(1.0, self.mae):
            raise ValueError(f"rmse {self.rmse} below mae {self.mae}")
        return self


class ReferenceRow(BaseModel):
    """A published number shown next to a report for orientation only."""

    label: str
    mask_ratio: float
    mae: float
    rmse: float
    mape: float
    note: str = "reference only; not reproducible on this data"


class SweepCell(BaseModel):
    """Metrics of one model at one mask ratio."""

    model: str
    mask_ratio: float
    metrics: MetricSet
    n_skipped: int = Field(0, ge=0, description="Targets without usable context")


class SweepReport(BaseModel):
    """Mask-ratio sweep over a set of predictors."""

    models: list[str]
    ratios: list[float]
    cells: list[SweepCell]
    seed: int
    config: dict = Field(default_factory=dict, description="Config snapshot")
    context_fingerprints: dict[str, str] = Field(
        default_factory=dict,
        description="sha256 of the shared context cache per mask ratio",
    )
    reference: list[ReferenceRow] = Field(default_factory=list)
    notes: list[str] = Field(default_factory=list)
    wall_time: float | None = None

    @model_validator(mode="after")
    def validate_complete(self) -> "SweepReport":
        present = {(c.model, c.mask_ratio) for c in self.cells}
        missing = [
            (m, r) for m in self.models for r in self.ratios if (m, r) not in present
        ]
        if missing:
            raise ValueError(f"sweep report is missing cells: {missing}")
        return self

    def get(self, model: str, ratio: float) -> MetricSet:
        """Return the metrics of one (model, ratio) cell.

        Raises:
            KeyError: If the cell is not in the report.
        """
        for cell in self.cells:
            if cell.model == model and math.isclose(cell.mask_ratio, ratio):
                return cell.metrics
        raise KeyError((model, ratio))


class EpochRecord(BaseModel):
    """One line of the training log."""

    epoch: int = Field(..., ge=1)
    train_loss: float
    val_mae: float
    val_rmse: float
    val_mape: float | None = None
    lr: float
    curl_estimate: float | None = None
    n_samples: int = 0
    n_skipped: int = 0
    wall_time: float | None = None


class TrainLog(BaseModel):
    """Per-epoch training history."""

    records: list[EpochRecord] = Field(default_factory=list)
    initial_val: MetricSet | None = Field(
        None, description="Validation metrics of the untrained model"
    )
    best_epoch: int | None = None

    def to_jsonl(self) -> str:
        """Serialize records as JSON lines, one per epoch."""
        return "".join(record.model_dump_json() + "\n" for record in self.records)


class CurlReport(BaseModel):
    """Finite-difference curl of a vector field over uniform samples."""

    mean_curl_norm: float = Field(..., ge=0.0)
    mean_jacobian_norm: float = Field(0.0, ge=0.0, description="Mean Frobenius norm of the Jacobian")
    relative_curl: float | None = Field(
        None, ge=0.0, description="mean_curl_norm / mean_jacobian_norm; None for a constant field"
    )
    curl_vectors: list[list[float]]
    sample_coords: list[list[float]]
    fd_step: float = Field(..., gt=0.0)
    epoch_tag: int | None = None

    model_config = ConfigDict(
        json_schema_extra={
            "example": {
                "mean_curl_norm": 0.012,
                "mean_jacobian_norm": 0.4,
                "relative_curl": 0.03,
                "curl_vectors": [[0.0, 0.0, 0.01]],
                "sample_coords": [[0.1, -0.2, 3.0]],
                "fd_step": 0.001,
                "epoch_tag": 10,
            }
        }
    )


class GradientCheckReport(BaseModel):
    """Agreement of a probed vector field with an analytic gradient."""

    mean_angle_deg: float | None = None
    max_angle_deg: float | None = None
    mean_relative_magnitude_error: float | None = None
    coverage: float = Field(
        ..., ge=0.0, le=1.0, description="Fraction of samples with a defined angle"
    )
    n_samples: int = Field(..., ge=1)


class PyramidEstimate(BaseModel):
    """Per-source estimates, aggregation weights and the final inference."""

    per_source_estimates: list[float]
    weights: list[float]
    final: float
    residuals: list[float]
    source_station_ids: list[str] = Field(default_factory=list)
    source_timesteps: list[int] = Field(default_factory=list)
    source_values: list[float] = Field(default_factory=list)
    steps: list[list[list[float]]] | None = Field(
        None, description="Differences D at every ring step (diagnostics mode)"
    )

    @model_validator(mode="after")
    def validate_simplex(self) -> "PyramidEstimate":
        if any(w < 0.0 for w in self.weights):
            raise ValueError("aggregation weights must be nonnegative")
        if abs(sum(self.weights) - 1.0) > 1e-6:
            raise ValueError("aggregation weights must sum to one")
        return self


class NeighborProvenance(BaseModel):
    """One source of a single-point inference, in raw units."""

    station_id: str
    timestamp: str
    value: float
    estimate: float
    weight: float


class InferenceResult(BaseModel):
    """Single-point inference with per-neighbor provenance."""

    lng: float
    lat: float
    time: str
    value: float
    neighbors: list[NeighborProvenance]


class CheckResult(BaseModel):
    """Outcome of one invariant check."""

    name: str
    passed: bool
    detail: str = ""
