"""Spatio-Temporal Encoding - 10-dim positional code p = [p_S, p_T].

p_S passes the first two components through; p_T holds a (sin, cos) pair
for each period of a day, week, month and year (times the scaling index a).
The same encoder is applied to coordinates and to difference vectors.
"""

import math

import numpy as np
import torch
from pydantic import BaseModel, ConfigDict, Field, field_validator

from src.utils.errors import NumericError

CODE_DIM = 10
TEMPORAL_DIM = 8
BASE_PERIODS = (1.0, 7.0, 30.5, 365.0)


class PeriodSet(BaseModel):
    """Periods {1a, 7a, 30.5a, 365a} in tau units."""

    scale: float = Field(1.0, gt=0.0, description="Scaling index a")

    model_config = ConfigDict(frozen=True)

    @property
    def periods(self) -> tuple[float, float, float, float]:
        a = self.scale
        return (BASE_PERIODS[0] * a, BASE_PERIODS[1] * a, BASE_PERIODS[2] * a, BASE_PERIODS[3] * a)


DEFAULT_PERIODS = PeriodSet()


class STCode(BaseModel):
    """A single code vector, split into its spatial and temporal parts."""

    p_s: tuple[float, float]
    p_t: tuple[float, float, float, float, float, float, float, float]

    model_config = ConfigDict(frozen=True)

    @field_validator("p_t")
    @classmethod
    def validate_bounded(cls, v: tuple[float, ...]) -> tuple[float, ...]:
        if any(abs(c) > 1.0 + 1e-12 for c in v):
            raise ValueError("temporal code components lie in [-1, 1]")
        return v

    @property
    def p(self) -> list[float]:
        return [*self.p_s, *self.p_t]

    @classmethod
    def from_vector(cls, code) -> "STCode":
        values = [float(c) for c in np.asarray(code, dtype=np.float64).ravel()]
        return cls(p_s=tuple(values[:2]), p_t=tuple(values[2:]))


def _as_tensor(v) -> torch.Tensor:
    if isinstance(v, torch.Tensor):
        return v
    return torch.as_tensor(np.asarray(v, dtype=np.float64))


def temporal_code(t, periods: PeriodSet = DEFAULT_PERIODS) -> torch.Tensor:
    """Sinusoidal code of normalized time.

    Args:
        t: Scalar or (...) tensor/array of tau values.
        periods: Period set.

    Returns:
        (..., 8) tensor laid out as
        [sin(2πt/T1), cos(2πt/T1), ..., sin(2πt/T4), cos(2πt/T4)].
    """
    t = _as_tensor(t)
    omegas = torch.tensor(
        [2.0 * math.pi / p for p in periods.periods], dtype=t.dtype, device=t.device
    )
    phase = t.unsqueeze(-1) * omegas
    return torch.stack([torch.sin(phase), torch.cos(phase)], dim=-1).flatten(-2)


def encode(v, periods: PeriodSet = DEFAULT_PERIODS) -> torch.Tensor:
    """Encode (..., 3) vectors into (..., 10) codes.

    Differentiable in v, so it can encode the model's own differences.

    Raises:
        NumericError: If v holds a non-finite value.
    """
    v = _as_tensor(v)
    if v.shape[-1] != 3:
        raise NumericError(f"encode expects 3 components, got shape {tuple(v.shape)}")
    if not torch.isfinite(v).all():
        raise NumericError("cannot encode a non-finite vector")
    return torch.cat([v[..., :2], temporal_code(v[..., 2], periods)], dim=-1)


def encode_code(v, periods: PeriodSet = DEFAULT_PERIODS) -> STCode:
    """Encode a single vector into an STCode."""
    return STCode.from_vector(encode(v, periods).detach().cpu().numpy())
