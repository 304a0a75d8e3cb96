"""Synthetic Scenes - Drifting Gaussian plumes with an exact gradient oracle.

The analytic field is defined on (u, v, t): position inside the scene's
unit square and days since the dataset epoch. `model_frame_gradient`
re-expresses it in the normalized spacetime a trained model works in.
"""

from collections.abc import Callable

import numpy as np
import pandas as pd

from src.contracts.geodata import AnalyticField, GeneratorSpec, PlumeSpec
from src.core.geodata import Normalizer, StationDataset
from src.utils.errors import ParameterError
from src.utils.logger import get_logger

logger = get_logger(__name__)

GRADIENT_FEATURES = ["grad_u", "grad_v", "grad_t"]
DISTRACTOR_FEATURES = ["noise_a", "noise_b"]


def analytic_eval(field: AnalyticField, c) -> tuple[np.ndarray, np.ndarray]:
    """Evaluate G and its exact gradient.

    Args:
        field: Plume field.
        c: (..., 3) coordinates (u, v, t).

    Returns:
        (value (...), gradient (..., 3)); scalars for a single coordinate
        come back as 0-d arrays.
    """
    c = np.asarray(c, dtype=np.float64)
    u, v, t = c[..., 0], c[..., 1], c[..., 2]
    value = np.full(u.shape, field.baseline, dtype=np.float64)
    gradient = np.zeros(c.shape, dtype=np.float64)

    for plume in field.plumes:
        du = u - plume.center_x - plume.drift_vx * t
        dv = v - plume.center_y - plume.drift_vy * t
        inv_var = 1.0 / plume.sigma**2
        bump = plume.amplitude * np.exp(-0.5 * (du**2 + dv**2) * inv_var)
        value = value + bump
        gradient[..., 0] -= bump * du * inv_var
        gradient[..., 1] -= bump * dv * inv_var
        # the center moves, so d/dt picks up the drift
        gradient[..., 2] += bump * (du * plume.drift_vx + dv * plume.drift_vy) * inv_var

    return value, gradient


def _random_plumes(spec: GeneratorSpec, rng: np.random.Generator) -> list[PlumeSpec]:
    plumes = []
    for _ in range(spec.n_plumes):
        plumes.append(
            PlumeSpec(
                amplitude=float(rng.uniform(*spec.amplitude_range)),
                center_x=float(rng.uniform(0.2, 0.8)),
                center_y=float(rng.uniform(0.2, 0.8)),
                drift_vx=float(rng.uniform(*spec.drift_range)),
                drift_vy=float(rng.uniform(*spec.drift_range)),
                sigma=float(rng.uniform(*spec.sigma_range)),
            )
        )
    return plumes


def generate_synthetic(spec: GeneratorSpec) -> tuple[StationDataset, AnalyticField]:
    """Generate a station dataset sampled from a random plume field.

    Stations are uniform in the unit square and reported in degrees via the
    scene's origin/extent. Targets are G plus Gaussian noise, clipped at 0.
    Features are the noisy analytic gradient plus two white-noise columns.

    Raises:
        ParameterError: On a non-positive sigma or an inverted range.
    """
    if spec.plumes is not None and any(not p.sigma > 0.0 for p in spec.plumes):
        raise ParameterError("every plume needs a positive sigma")
    if spec.plumes is None and not 0.0 < spec.sigma_range[0] <= spec.sigma_range[1]:
        raise ParameterError(f"sigma_range must be positive and ordered, got {spec.sigma_range}")

    rng = np.random.default_rng(spec.seed if spec.seed is not None else 0)
    plumes = spec.plumes if spec.plumes is not None else _random_plumes(spec, rng)
    field = AnalyticField(
        plumes=plumes,
        baseline=spec.baseline,
        origin_lng=spec.origin_lng,
        origin_lat=spec.origin_lat,
        extent_deg=spec.extent_deg,
    )

    s, t = spec.n_stations, spec.hours
    unit = rng.uniform(0.0, 1.0, size=(s, 2))
    timestamps = pd.date_range(pd.Timestamp(spec.start), periods=t, freq="h")
    days = np.arange(t, dtype=np.float64) / 24.0

    grid = np.empty((s, t, 3), dtype=np.float64)
    grid[..., 0] = unit[:, None, 0]
    grid[..., 1] = unit[:, None, 1]
    grid[..., 2] = days[None, :]
    value, gradient = analytic_eval(field, grid)

    targets = np.maximum(value + rng.normal(0.0, spec.noise_std, size=value.shape), 0.0)
    if spec.missing_rate > 0.0:
        targets[rng.uniform(size=targets.shape) < spec.missing_rate] = np.nan

    features = np.concatenate(
        [
            gradient + rng.normal(0.0, spec.feature_noise_std, size=gradient.shape),
            rng.normal(0.0, 1.0, size=(s, t, len(DISTRACTOR_FEATURES))),
        ],
        axis=-1,
    )

    dataset = StationDataset(
        station_ids=[f"S{i:03d}" for i in range(s)],
        raw_lng=spec.origin_lng + unit[:, 0] * spec.extent_deg,
        raw_lat=spec.origin_lat + unit[:, 1] * spec.extent_deg,
        timestamps=pd.DatetimeIndex(timestamps),
        targets=targets,
        features=features,
        categorical=np.zeros((s, t, 0), dtype=np.int64),
        feature_names=GRADIENT_FEATURES + DISTRACTOR_FEATURES,
        epoch=pd.Timestamp(spec.start),
    )
    logger.info(
        "synthetic_scene_generated",
        stations=s,
        hours=t,
        plumes=len(plumes),
        seed=spec.seed,
    )
    return dataset, field


def to_field_frame(field: AnalyticField, normalizer: Normalizer, c) -> np.ndarray:
    """Map normalized model coordinates (x, y, tau) to field coordinates (u, v, t)."""
    c = np.asarray(c, dtype=np.float64)
    lng, lat = normalizer.denormalize_xy(c[..., 0], c[..., 1])
    out = np.empty(c.shape, dtype=np.float64)
    out[..., 0] = (lng - field.origin_lng) / field.extent_deg
    out[..., 1] = (lat - field.origin_lat) / field.extent_deg
    out[..., 2] = c[..., 2] * normalizer.time_scale
    return out


def model_frame_gradient(
    field: AnalyticField, normalizer: Normalizer | None
) -> Callable[[np.ndarray], np.ndarray]:
    """Analytic gradient of the normalized target w.r.t. normalized coordinates.

    With normalizer None the field's own frame is used unchanged.
    """
    if normalizer is None:
        return lambda c: analytic_eval(field, c)[1]

    scale = np.array(
        [
            normalizer.lng_std / field.extent_deg,
            normalizer.lat_std / field.extent_deg,
            normalizer.time_scale,
        ]
    ) / normalizer.target_std

    def gradient(c: np.ndarray) -> np.ndarray:
        return analytic_eval(field, to_field_frame(field, normalizer, c))[1] * scale

    return gradient
