"""Invariant Suite - Self-checks run by `stfnn check`.

Each check exercises one property on seeded random inputs and reports a
CheckResult instead of raising, so a single run lists every failure.
"""

from collections.abc import Callable, Iterator
from contextlib import contextmanager

import numpy as np
import torch

from src.config.experiment import ModelConfig
from src.contracts.geodata import AnalyticField, Coordinate, PlumeSpec
from src.contracts.reports import CheckResult
from src.core.baselines import idw_ses_infer, knn_infer, mean_infer
from src.core.diagnostics import UNIT_CUBE, curl_estimate, path_independence
from src.core.encoding import DEFAULT_PERIODS, encode, temporal_code
from src.core.evalsuite import metrics
from src.core.field_model import FieldModel, collate_contexts, ring_estimate
from src.core.geodata import ContextSet
from src.core.synthetic import analytic_eval
from src.core.training import loss
from src.utils.errors import ParameterError
from src.utils.logger import get_logger

logger = get_logger(__name__)

Check = Callable[[np.random.Generator], tuple[bool, str]]


def random_context(
    rng: np.random.Generator,
    n_sources: int,
    feature_dim: int = 0,
    low: float = -1.0,
    high: float = 1.0,
) -> ContextSet:
    """A context with uniform coordinates and standard-normal values."""
    target = rng.uniform(low, high, size=3)
    return ContextSet(
        coords=rng.uniform(low, high, size=(n_sources, 3)),
        features=rng.normal(size=(n_sources, feature_dim)),
        values=rng.normal(size=n_sources),
        station_ids=[f"R{i:03d}" for i in range(n_sources)],
        timesteps=np.zeros(n_sources, dtype=np.int64),
        target_coord=Coordinate.from_array(target),
        target_timestep=0,
    )


@contextmanager
def stubbed_ring_step(model: FieldModel, fn: Callable[[np.ndarray], np.ndarray]) -> Iterator[None]:
    """Replace the model's ring step by a fixed vector field of C_end."""

    def ring_step(c_end, d_prev, padding=None, step=None):
        values = fn(c_end.detach().cpu().numpy())
        return torch.as_tensor(np.array(values), dtype=c_end.dtype).expand_as(c_end)

    model.ring_step = ring_step  # type: ignore[method-assign]
    try:
        yield
    finally:
        del model.ring_step


def tiny_model(seed: int, m_steps: int = 2, hidden_dim: int = 16, feature_dim: int = 0) -> FieldModel:
    """Small float64 model for numeric checks."""
    config = ModelConfig(
        hidden_dim=hidden_dim, n_heads=2, n_layers=1, m_steps=m_steps, feature_dim=feature_dim, seed=seed
    )
    return FieldModel(config).double().eval()


def randomize_(model: FieldModel, rng: np.random.Generator, scale: float = 0.5) -> None:
    """Overwrite every parameter with uniform noise in [-scale, scale]."""
    with torch.no_grad():
        for p in model.parameters():
            p.copy_(torch.as_tensor(rng.uniform(-scale, scale, size=tuple(p.shape))))


def plume_field(rng: np.random.Generator, n: int = 3, gentle: bool = False) -> AnalyticField:
    """Random plume field in the unit cube; gentle fields keep third derivatives small."""
    amplitude, sigma = ((0.5, 1.0), (0.4, 0.6)) if gentle else ((40.0, 60.0), (0.25, 0.35))
    plumes = [
        PlumeSpec(
            amplitude=float(rng.uniform(*amplitude)),
            center_x=float(rng.uniform(0.2, 0.8)),
            center_y=float(rng.uniform(0.2, 0.8)),
            drift_vx=float(rng.uniform(-0.1, 0.1)),
            drift_vy=float(rng.uniform(-0.1, 0.1)),
            sigma=float(rng.uniform(*sigma)),
        )
        for _ in range(n)
    ]
    return AnalyticField(plumes=plumes, baseline=10.0)


def check_encoding(rng: np.random.Generator) -> tuple[bool, str]:
    zero = temporal_code(0.0).numpy()
    if not np.array_equal(zero, [0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0]):
        return False, f"temporal_code(0) = {zero.tolist()}"
    t = rng.uniform(-100.0, 100.0, size=64)
    year = DEFAULT_PERIODS.periods[3]
    drift = np.abs(temporal_code(t).numpy()[:, 6:] - temporal_code(t + year).numpy()[:, 6:]).max()
    if drift > 1e-9:
        return False, f"year pair drifts by {drift:.3g} over one period"
    v = rng.normal(size=(64, 3))
    if not np.array_equal(encode(v).numpy()[:, :2], v[:, :2]):
        return False, "spatial components are not passed through"
    return True, "temporal_code(0), year periodicity and pass-through hold"


def check_quadrature(rng: np.random.Generator) -> tuple[bool, str]:
    worst = 0.0
    for m in (1, 2, 4, 8, 16):
        model = tiny_model(0, m_steps=m)
        for _ in range(100):
            g = rng.normal(size=3)
            context = random_context(rng, int(rng.integers(1, 8)))
            with stubbed_ring_step(model, lambda c, g=g: np.broadcast_to(g, c.shape)):
                residuals = ring_estimate(model, context).residuals[0].numpy()
            expected = (context.target_array() - context.coords) @ g
            worst = max(worst, float(np.abs(residuals - expected).max()))
    return worst <= 1e-6, f"max |Δy - g·Δc| = {worst:.3g} over m in 1..16"


def single_source(src: np.ndarray, tar: np.ndarray, value: float = 0.0) -> ContextSet:
    """A one-source context from src to tar."""
    return ContextSet(
        coords=np.asarray(src, dtype=np.float64).reshape(1, 3),
        features=np.zeros((1, 0)),
        values=np.array([value]),
        station_ids=["P0"],
        timesteps=np.zeros(1, dtype=np.int64),
        target_coord=Coordinate.from_array(tar),
        target_timestep=0,
    )


def check_conservative(rng: np.random.Generator) -> tuple[bool, str]:
    field = plume_field(rng)

    def gradient(c: np.ndarray) -> np.ndarray:
        return analytic_eval(field, c)[1]

    pairs = [(rng.uniform(0, 1, size=3), rng.uniform(0, 1, size=3)) for _ in range(500)]
    batch = collate_contexts([single_source(src, tar) for src, tar in pairs], torch.float64)
    truth = np.array(
        [analytic_eval(field, tar)[0] - analytic_eval(field, src)[0] for src, tar in pairs]
    )
    errors = {}
    for m in (2, 16):
        model = tiny_model(0, m_steps=m)
        with stubbed_ring_step(model, gradient):
            residuals = ring_estimate(model, batch).residuals[:, 0].numpy()
        errors[m] = np.abs(residuals - truth)
    improved = float(np.mean(errors[16] < errors[2]))

    plume = field.plumes[0]
    src, tar = np.array([plume.center_x, plume.center_y, 0.0]), np.array([0.95, 0.05, 0.5])
    delta_g = abs(float(analytic_eval(field, tar)[0] - analytic_eval(field, src)[0]))
    spread = path_independence(gradient, src, tar, n_paths=8, m=256, seed=int(rng.integers(1 << 31)))

    passed = bool(improved >= 0.95 and spread <= 1e-3 * delta_g + 1e-6)
    return passed, (
        f"m=16 beats m=2 on {improved:.1%} of pairs; path spread {spread:.3g} vs ΔG {delta_g:.3g}"
    )


def check_curl(rng: np.random.Generator) -> tuple[bool, str]:
    # The absolute bound needs a gentle field: fourth derivatives of the
    # default plumes push the h^2 error well above 1e-4. Default plumes are
    # held to a bound relative to their Jacobian instead.
    gentle = plume_field(rng, gentle=True)
    analytic = curl_estimate(
        lambda c: analytic_eval(gentle, c)[1], UNIT_CUBE, 256, 1e-3, int(rng.integers(1 << 31))
    )
    default = plume_field(rng)
    steep = curl_estimate(
        lambda c: analytic_eval(default, c)[1], UNIT_CUBE, 256, 1e-3, int(rng.integers(1 << 31))
    )
    rotational = curl_estimate(
        lambda c: np.stack([-c[:, 1], c[:, 0], np.zeros(len(c))], axis=1), UNIT_CUBE, 64, 1e-3, 0
    )
    rot_error = float(np.abs(np.array(rotational.curl_vectors) - [0.0, 0.0, 2.0]).max())
    steep_relative = steep.relative_curl or 0.0
    passed = bool(
        analytic.mean_curl_norm <= 1e-4 and steep_relative <= 1e-3 and rot_error <= 1e-6
    )
    return passed, (
        f"gradient-field curl {analytic.mean_curl_norm:.3g}; default-field curl "
        f"{steep.mean_curl_norm:.3g} (relative {steep_relative:.3g}); rotational error {rot_error:.3g}"
    )


def check_simplex(rng: np.random.Generator) -> tuple[bool, str]:
    model = tiny_model(0, hidden_dim=8, feature_dim=2)
    worst_sum, worst_neg = 0.0, 0.0
    for _ in range(50):
        randomize_(model, rng, scale=float(rng.uniform(0.1, 3.0)))
        contexts = [random_context(rng, int(rng.integers(1, 13)), feature_dim=2) for _ in range(20)]
        with torch.no_grad():
            weights = model(collate_contexts(contexts, torch.float64)).weights.numpy()
        worst_sum = max(worst_sum, float(np.abs(weights.sum(axis=1) - 1.0).max()))
        worst_neg = min(worst_neg, float(weights.min()))

    fresh = tiny_model(int(rng.integers(1 << 31)), hidden_dim=8, feature_dim=2)
    contexts = [random_context(rng, int(rng.integers(1, 13)), feature_dim=2) for _ in range(50)]
    with torch.no_grad():
        final = fresh(collate_contexts(contexts, torch.float64)).final.numpy()
    means = np.array([c.values.mean() for c in contexts])
    mean_gap = float(np.abs(final - means).max())

    zero = tiny_model(0, hidden_dim=8, feature_dim=2)
    randomize_(zero, rng)
    with stubbed_ring_step(zero, np.zeros_like), torch.no_grad():
        out = zero(collate_contexts(contexts, torch.float64)).final.numpy()
    lo = np.array([c.values.min() for c in contexts])
    hi = np.array([c.values.max() for c in contexts])
    convex = bool(np.all(out >= lo - 1e-9) and np.all(out <= hi + 1e-9))

    passed = bool(worst_sum <= 1e-6 and worst_neg >= 0.0 and mean_gap <= 1e-9 and convex)
    return passed, (
        f"weight-sum error {worst_sum:.3g}; untrained vs mean {mean_gap:.3g}; "
        f"zero-gradient estimates convex: {convex}"
    )


def check_loss_gradient(rng: np.random.Generator) -> tuple[bool, str]:
    model = tiny_model(0, m_steps=2, hidden_dim=16, feature_dim=2)
    randomize_(model, rng)
    batch = collate_contexts([random_context(rng, 4, feature_dim=2) for _ in range(3)], torch.float64)
    truth = torch.as_tensor(rng.normal(size=3))

    def objective() -> torch.Tensor:
        return loss(model(batch).final, truth, "mse")

    model.zero_grad()
    objective().backward()
    params = [p for p in model.parameters() if p.requires_grad]
    sizes = np.array([p.numel() for p in params])
    picks = rng.choice(sizes.sum(), size=20, replace=False)
    offsets = np.concatenate([[0], np.cumsum(sizes)])

    h, worst = 1e-4, 0.0
    with torch.no_grad():
        for flat in picks:
            k = int(np.searchsorted(offsets, flat, side="right") - 1)
            p, i = params[k].view(-1), int(flat - offsets[k])
            analytic = float(params[k].grad.view(-1)[i])
            original = float(p[i])
            p[i] = original + h
            up = float(objective())
            p[i] = original - h
            down = float(objective())
            p[i] = original
            numeric = (up - down) / (2 * h)
            scale = max(abs(analytic), abs(numeric), 1e-6)
            worst = max(worst, abs(analytic - numeric) / scale)
    return bool(worst <= 1e-3), f"max relative error {worst:.3g} over 20 parameters"


def check_baselines(rng: np.random.Generator) -> tuple[bool, str]:
    worst_gap, convex = 0.0, True
    for _ in range(100):
        context = random_context(rng, int(rng.integers(1, 20)))
        context = context.model_copy(update={"timesteps": rng.integers(0, 6, size=context.n_sources)})
        worst_gap = max(worst_gap, abs(knn_infer(context, context.n_sources) - mean_infer(context)))
        lo, hi = context.values.min() - 1e-9, context.values.max() + 1e-9
        for value in (knn_infer(context, 3), idw_ses_infer(context), mean_infer(context)):
            convex &= bool(lo <= value <= hi)
    return bool(worst_gap == 0.0 and convex), f"knn(k=N) vs mean gap {worst_gap:.3g}; convex: {convex}"


def check_metrics(rng: np.random.Generator) -> tuple[bool, str]:
    worst = 0.0
    for _ in range(100):
        n = int(rng.integers(1, 50))
        preds, truths = rng.normal(size=n) * 10, np.abs(rng.normal(size=n)) * 10 + 0.1
        got = metrics(preds, truths)
        errors = [p - t for p, t in zip(preds, truths, strict=True)]
        mae = sum(abs(e) for e in errors) / n
        rmse = (sum(e * e for e in errors) / n) ** 0.5
        mape = sum(abs(e) / abs(t) for e, t in zip(errors, truths, strict=True)) / n
        worst = max(worst, abs(got.mae - mae), abs(got.rmse - rmse), abs((got.mape or 0.0) - mape))
    return bool(worst <= 1e-12), f"max deviation from per-sample recomputation {worst:.3g}"


CHECKS: dict[str, Check] = {
    "encoding": check_encoding,
    "quadrature_exactness": check_quadrature,
    "conservative_convergence": check_conservative,
    "curl_correctness": check_curl,
    "simplex_and_identity": check_simplex,
    "loss_gradient": check_loss_gradient,
    "baseline_invariants": check_baselines,
    "metrics_recomputation": check_metrics,
}


def run_checks(seed: int = 0, names: list[str] | None = None) -> list[CheckResult]:
    """Run the selected checks (all by default), each with its own seeded generator."""
    unknown = sorted(set(names or []) - set(CHECKS))
    if unknown:
        raise ParameterError(f"unknown checks {unknown}; choose from {list(CHECKS)}")
    results = []
    for index, (name, check) in enumerate(CHECKS.items()):
        if names is not None and name not in names:
            continue
        try:
            passed, detail = check(np.random.default_rng(seed + index))
            passed = bool(passed)
        except Exception as e:  # a crashing check is a failing check
            passed, detail = False, f"{type(e).__name__}: {e}"
        results.append(CheckResult(name=name, passed=passed, detail=detail))
        logger.info("check_completed", check=name, passed=passed, detail=detail)
    return results
