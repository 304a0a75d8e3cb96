"""Diagnostics - Curl, path independence and gradient agreement of a vector field.

A probe is any batched function mapping (Q, 3) coordinates to (Q, 3)
vectors, typically FieldModel.probe or an analytic gradient.
"""

from collections.abc import Callable

import numpy as np
from pydantic import BaseModel, ConfigDict, model_validator

from src.contracts.geodata import AnalyticField
from src.contracts.reports import CurlReport, GradientCheckReport
from src.core.field_model import FieldModel
from src.core.geodata import ContextBuilder, Normalizer
from src.core.synthetic import model_frame_gradient
from src.utils.errors import ParameterError
from src.utils.logger import get_logger

logger = get_logger(__name__)

Probe = Callable[[np.ndarray], np.ndarray]

ZERO_GRADIENT = 1e-6
ZERO_PROBE = 1e-12


class Domain(BaseModel):
    """Axis-aligned box in (x, y, tau)."""

    lo: tuple[float, float, float]
    hi: tuple[float, float, float]

    model_config = ConfigDict(frozen=True)

    @model_validator(mode="after")
    def validate_box(self) -> "Domain":
        if any(not a <= b for a, b in zip(self.lo, self.hi, strict=True)):
            raise ValueError("domain lower corner must not exceed the upper corner")
        return self

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return rng.uniform(self.lo, self.hi, size=(n, 3))


UNIT_CUBE = Domain(lo=(0.0, 0.0, 0.0), hi=(1.0, 1.0, 1.0))


def observation_domain(builder: ContextBuilder, timesteps: range | None = None) -> Domain:
    """Bounding box of the stations over the given timesteps (all by default)."""
    tau = builder.tau if timesteps is None else builder.tau[list(timesteps)]
    lo = builder.xy.min(axis=0)
    hi = builder.xy.max(axis=0)
    return Domain(
        lo=(float(lo[0]), float(lo[1]), float(tau.min())),
        hi=(float(hi[0]), float(hi[1]), float(tau.max())),
    )


def _evaluate(probe: Probe, points: np.ndarray) -> np.ndarray:
    values = np.asarray(probe(points), dtype=np.float64)
    return values.reshape(points.shape)


def curl_estimate(
    probe: Probe,
    domain: Domain,
    n_samples: int = 512,
    h: float = 1e-3,
    seed: int = 0,
    epoch_tag: int | None = None,
) -> CurlReport:
    """Central-difference curl at n_samples uniform points of the domain.

    relative_curl divides the mean curl norm by the mean Frobenius norm of
    the Jacobian, so it does not grow with the field's overall scale. It is
    0 for a gradient field and near 1 for an unstructured one.

    Raises:
        ParameterError: If h <= 0 or n_samples < 1.
    """
    if not h > 0.0:
        raise ParameterError(f"finite-difference step must be positive, got {h}")
    if n_samples < 1:
        raise ParameterError(f"n_samples must be at least 1, got {n_samples}")

    coords = domain.sample(n_samples, np.random.default_rng(seed))
    shifts = h * np.eye(3)
    points = np.concatenate([coords + sign * shifts[k] for k in range(3) for sign in (1.0, -1.0)])
    values = _evaluate(probe, points).reshape(3, 2, n_samples, 3)

    # jac[q, i, k] = dF_i / dx_k
    jac = np.moveaxis((values[:, 0] - values[:, 1]) / (2.0 * h), 0, -1)
    curl = np.stack(
        [
            jac[:, 2, 1] - jac[:, 1, 2],
            jac[:, 0, 2] - jac[:, 2, 0],
            jac[:, 1, 0] - jac[:, 0, 1],
        ],
        axis=-1,
    )
    mean_curl = float(np.linalg.norm(curl, axis=1).mean())
    mean_jacobian = float(np.linalg.norm(jac, axis=(1, 2)).mean())
    report = CurlReport(
        mean_curl_norm=mean_curl,
        mean_jacobian_norm=mean_jacobian,
        relative_curl=mean_curl / mean_jacobian if mean_jacobian > ZERO_PROBE else None,
        curl_vectors=curl.tolist(),
        sample_coords=coords.tolist(),
        fd_step=h,
        epoch_tag=epoch_tag,
    )
    logger.debug(
        "curl_estimated",
        mean_curl_norm=report.mean_curl_norm,
        relative_curl=report.relative_curl,
        epoch=epoch_tag,
    )
    return report


def line_integral(probe: Probe, src: np.ndarray, tar: np.ndarray, m: int) -> float:
    """Midpoint-rule integral of probe along the segment src -> tar."""
    delta = tar - src
    midpoints = src + ((np.arange(m) + 0.5) / m)[:, None] * delta
    return float(_evaluate(probe, midpoints).sum(axis=0) @ delta / m)


def path_independence(
    probe: Probe, src, tar, n_paths: int = 8, m: int = 64, seed: int = 0
) -> float:
    """Spread of line integrals over the straight path and n_paths - 1 bent ones.

    Each bent path goes through one bend point: the segment midpoint moved
    perpendicular to the segment by L * U(0.25, 0.75) in a random direction.
    Each leg uses m midpoint steps.

    Returns:
        Max minus min of the integrals.

    Raises:
        ParameterError: If n_paths < 2 or m < 1.
    """
    if n_paths < 2:
        raise ParameterError(f"n_paths must be at least 2, got {n_paths}")
    if m < 1:
        raise ParameterError(f"m must be at least 1, got {m}")
    src = np.asarray(src, dtype=np.float64)
    tar = np.asarray(tar, dtype=np.float64)
    delta = tar - src
    length = float(np.linalg.norm(delta))
    if length == 0.0:
        return 0.0

    axis = delta / length
    rng = np.random.default_rng(seed)
    integrals = [line_integral(probe, src, tar, m)]
    while len(integrals) < n_paths:
        direction = rng.normal(size=3)
        direction -= (direction @ axis) * axis
        norm = np.linalg.norm(direction)
        if norm < 1e-8:
            continue
        bend = src + 0.5 * delta + direction / norm * length * rng.uniform(0.25, 0.75)
        integrals.append(line_integral(probe, src, bend, m) + line_integral(probe, bend, tar, m))

    return float(max(integrals) - min(integrals))


def gradient_check(
    model: FieldModel | Probe,
    field: AnalyticField,
    normalizer: Normalizer | None = None,
    n_samples: int = 512,
    seed: int = 0,
    domain: Domain = UNIT_CUBE,
) -> GradientCheckReport:
    """Compare a probed field with the exact gradient of an analytic scene.

    Samples whose exact gradient is below ZERO_GRADIENT are skipped for both
    statistics; a zero probe has no angle and lowers the coverage.
    """
    probe = model.probe if isinstance(model, FieldModel) else model
    reference = model_frame_gradient(field, normalizer)

    coords = domain.sample(n_samples, np.random.default_rng(seed))
    got = _evaluate(probe, coords)
    want = reference(coords)

    got_norm = np.linalg.norm(got, axis=1)
    want_norm = np.linalg.norm(want, axis=1)
    usable = want_norm >= ZERO_GRADIENT
    angled = usable & (got_norm > ZERO_PROBE)

    angles = np.zeros(0)
    if angled.any():
        cosine = np.einsum("ij,ij->i", got[angled], want[angled]) / (
            got_norm[angled] * want_norm[angled]
        )
        angles = np.degrees(np.arccos(np.clip(cosine, -1.0, 1.0)))
    magnitude = None
    if usable.any():
        magnitude = float(
            np.mean(np.abs(got_norm[usable] - want_norm[usable]) / want_norm[usable])
        )

    return GradientCheckReport(
        mean_angle_deg=float(angles.mean()) if angles.size else None,
        max_angle_deg=float(angles.max()) if angles.size else None,
        mean_relative_magnitude_error=magnitude,
        coverage=float(angled.sum()) / n_samples,
        n_samples=n_samples,
    )
