"""Contracts package - Pydantic schemas for data exchanged and persisted."""

from src.contracts.geodata import (
    AnalyticField,
    Coordinate,
    CsvSchema,
    GeneratorSpec,
    PlumeSpec,
)
from src.contracts.reports import (
    CheckResult,
    CurlReport,
    EpochRecord,
    GradientCheckReport,
    MetricSet,
    PyramidEstimate,
    SweepReport,
    TrainLog,
)

__all__ = [
    "AnalyticField",
    "Coordinate",
    "CsvSchema",
    "GeneratorSpec",
    "PlumeSpec",
    "CheckResult",
    "CurlReport",
    "EpochRecord",
    "GradientCheckReport",
    "MetricSet",
    "PyramidEstimate",
    "SweepReport",
    "TrainLog",
]
