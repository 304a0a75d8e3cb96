"""Baselines - Non-learned reference predictors over a ContextSet.

All predictors work on the context's normalized values and return a convex
combination of them.
"""

import numpy as np

from src.core.geodata import ContextSet
from src.utils.errors import InsufficientContextError, ParameterError

EXACT_HIT_DISTANCE = 1e-9


def _require_sources(context: ContextSet) -> None:
    if context.n_sources < 1:
        raise InsufficientContextError("context has no sources")


def mean_infer(context: ContextSet) -> float:
    """Unweighted mean of the source values."""
    _require_sources(context)
    return float(np.mean(context.values))


def knn_infer(context: ContextSet, k: int = 5) -> float:
    """Mean value of the k sources nearest the target in normalized spacetime.

    Ties at the k-th distance are broken by source order.
    """
    _require_sources(context)
    if k < 1:
        raise ParameterError(f"k must be at least 1, got {k}")
    if k >= context.n_sources:
        return mean_infer(context)
    distance = np.linalg.norm(context.coords - context.target_array(), axis=1)
    nearest = np.argsort(distance, kind="stable")[:k]
    return float(np.mean(context.values[nearest]))


def idw_ses_weights(context: ContextSet, power: float = 2.0, alpha: float = 0.3) -> np.ndarray:
    """Per-source weights of the IDW-across-stations, SES-across-time predictor.

    Within a station, a source of age a (timesteps before the station's
    newest source) gets (1 - alpha)^a, normalized over the station. Stations
    are weighted by d^-power of their spatial distance to the target; a
    station within EXACT_HIT_DISTANCE takes all the weight.

    Returns:
        (N,) nonnegative weights summing to one.
    """
    _require_sources(context)
    if not power > 0.0:
        raise ParameterError(f"idw power must be positive, got {power}")
    if not 0.0 < alpha <= 1.0:
        raise ParameterError(f"ses alpha must be in (0, 1], got {alpha}")

    stations, inverse = np.unique(np.asarray(context.station_ids), return_inverse=True)
    inverse = inverse.ravel()
    newest = np.full(len(stations), np.iinfo(np.int64).min)
    np.maximum.at(newest, inverse, context.timesteps)
    age = (newest[inverse] - context.timesteps).astype(np.float64)

    ses = (1.0 - alpha) ** age
    ses = ses / np.bincount(inverse, weights=ses)[inverse]

    station_xy = np.zeros((len(stations), 2))
    station_xy[inverse] = context.coords[:, :2]
    target = context.target_array()[:2]
    distance = np.linalg.norm(station_xy - target, axis=1)

    hits = distance < EXACT_HIT_DISTANCE
    if hits.any():
        station_weight = hits.astype(np.float64)
    else:
        station_weight = distance**-power
    station_weight = station_weight / station_weight.sum()

    return station_weight[inverse] * ses


def idw_ses_infer(context: ContextSet, power: float = 2.0, alpha: float = 0.3) -> float:
    """IDW across stations of each station's SES-smoothed history."""
    weights = idw_ses_weights(context, power, alpha)
    return float(np.dot(weights, context.values))
