"""Geodata Contracts - Schemas for coordinates, ingestion and synthetic scenes."""

import math
from datetime import datetime

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


class Coordinate(BaseModel):
    """A point in normalized spacetime (x, y, tau).

    x and y are z-normalized longitude and latitude; tau is days since the
    dataset epoch divided by the time scale.
    """

    x: float = Field(..., description="z-normalized longitude")
    y: float = Field(..., description="z-normalized latitude")
    tau: float = Field(..., description="normalized time")

    model_config = ConfigDict(frozen=True)

    @field_validator("x", "y", "tau")
    @classmethod
    def validate_finite(cls, v: float) -> float:
        if not math.isfinite(v):
            raise ValueError("coordinate components must be finite")
        return v

    def as_array(self) -> np.ndarray:
        """Return the coordinate as a float64 vector of length 3."""
        return np.array([self.x, self.y, self.tau], dtype=np.float64)

    @classmethod
    def from_array(cls, values: np.ndarray) -> "Coordinate":
        """Build a coordinate from any length-3 sequence."""
        x, y, tau = (float(v) for v in np.asarray(values, dtype=np.float64).ravel())
        return cls(x=x, y=y, tau=tau)


class CsvSchema(BaseModel):
    """Column mapping for the observation CSV."""

    station_id_column: str = "station_id"
    timestamp_column: str = "timestamp"
    lng_column: str = "lng"
    lat_column: str = "lat"
    target_column: str = "target"
    feature_columns: list[str] = Field(
        default_factory=list,
        description="Real-valued feature columns, in order",
    )
    categorical_columns: list[str] = Field(
        default_factory=list,
        description="Categorical columns (weather, wind direction), one-hot expanded downstream",
    )

    model_config = ConfigDict(
        extra="forbid",
        json_schema_extra={
            "example": {
                "feature_columns": ["temperature", "wind_speed"],
                "categorical_columns": ["wind_direction"],
            }
        },
    )

    @model_validator(mode="after")
    def validate_unique_columns(self) -> "CsvSchema":
        columns = [
            self.station_id_column,
            self.timestamp_column,
            self.lng_column,
            self.lat_column,
            self.target_column,
            *self.feature_columns,
            *self.categorical_columns,
        ]
        if len(set(columns)) != len(columns):
            raise ValueError("column names in the schema must be distinct")
        return self


class PlumeSpec(BaseModel):
    """One drifting Gaussian plume, in the unit-square frame of a scene."""

    amplitude: float = Field(..., description="Peak concentration above baseline (µg/m³)")
    center_x: float = Field(..., description="Center x at tau=0 (unit square)")
    center_y: float = Field(..., description="Center y at tau=0 (unit square)")
    drift_vx: float = Field(0.0, description="Center drift along x per day")
    drift_vy: float = Field(0.0, description="Center drift along y per day")
    sigma: float = Field(..., description="Spatial spread (unit square)")

    model_config = ConfigDict(extra="forbid")


class AnalyticField(BaseModel):
    """Closed-form scalar field G: baseline plus drifting Gaussian plumes.

    Coordinates of G are (u, v, t): position in the scene's unit square and
    days since the dataset epoch. The frame fields map raw degrees onto the
    unit square.
    """

    plumes: list[PlumeSpec] = Field(default_factory=list)
    baseline: float = Field(0.0, description="Constant background (µg/m³)")
    origin_lng: float = 0.0
    origin_lat: float = 0.0
    extent_deg: float = Field(1.0, gt=0.0)

    model_config = ConfigDict(extra="forbid")

    @model_validator(mode="after")
    def validate_sigmas(self) -> "AnalyticField":
        for index, plume in enumerate(self.plumes):
            if not plume.sigma > 0.0:
                raise ValueError(f"plume {index} has non-positive sigma")
        return self


class GeneratorSpec(BaseModel):
    """Synthetic scene description: stations, timeline, plumes and noise."""

    n_stations: int = Field(100, ge=2)
    hours: int = Field(336, ge=2)
    start: datetime = Field(default=datetime(2024, 1, 1))
    origin_lng: float = 110.0
    origin_lat: float = 30.0
    extent_deg: float = Field(10.0, gt=0.0)
    baseline: float = Field(10.0, ge=0.0)
    plumes: list[PlumeSpec] | None = Field(
        None,
        description="Explicit plumes; when absent n_plumes are drawn at random",
    )
    n_plumes: int = Field(3, ge=0)
    amplitude_range: tuple[float, float] = (40.0, 60.0)
    sigma_range: tuple[float, float] = (0.12, 0.25)
    drift_range: tuple[float, float] = (-0.03, 0.03)
    noise_std: float = Field(2.5, ge=0.0, description="Target noise std (µg/m³)")
    feature_noise_std: float = Field(
        10.0, ge=0.0, description="Noise std added to gradient feature columns"
    )
    missing_rate: float = Field(0.0, ge=0.0, lt=1.0)
    seed: int | None = None

    model_config = ConfigDict(
        extra="forbid",
        json_schema_extra={
            "example": {
                "n_stations": 100,
                "hours": 336,
                "n_plumes": 3,
                "noise_std": 2.5,
                "seed": 7,
            }
        },
    )
