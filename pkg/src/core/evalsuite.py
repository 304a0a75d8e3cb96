"""Evaluation Suite - Metrics and the mask-ratio sweep.

Every predictor in a sweep receives the very same ContextSets; predictions
are made in normalized units and scored in raw units.
"""

import hashlib
from collections.abc import Callable, Mapping, Sequence
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd
import torch

from src.config.experiment import BaselineConfig
from src.contracts.reports import MetricSet, ReferenceRow, SweepCell, SweepReport
from src.core.baselines import idw_ses_infer, knn_infer, mean_infer
from src.core.field_model import FieldModel, collate_contexts
from src.core.geodata import ContextBuilder, ContextSet, StationDataset, TimeSplit, epoch_mask
from src.utils.errors import InsufficientContextError, ParameterError, ShapeError
from src.utils.logger import get_logger
from src.utils.seeding import stream_seed

logger = get_logger(__name__)

MAPE_FLOOR = 1e-6
MODEL_BATCH = 256

PUBLISHED_REFERENCE = ReferenceRow(
    label="STFNN, nationwide PM2.5 (published)",
    mask_ratio=0.25,
    mae=11.14,
    rmse=19.75,
    mape=0.39,
)

# contexts -> normalized predictions
Predictor = Callable[[Sequence[ContextSet]], np.ndarray]


def metrics(preds, truths) -> MetricSet:
    """MAE, RMSE and MAPE of predictions against truths.

    Truths with |truth| <= MAPE_FLOOR are left out of MAPE only.

    Raises:
        ShapeError: On a length mismatch.
        ParameterError: On empty input.
    """
    preds = np.asarray(preds, dtype=np.float64).ravel()
    truths = np.asarray(truths, dtype=np.float64).ravel()
    if preds.shape != truths.shape:
        raise ShapeError(f"{preds.size} predictions for {truths.size} truths")
    if preds.size == 0:
        raise ParameterError("metrics need at least one sample")

    errors = preds - truths
    mae = float(np.mean(np.abs(errors)))
    rmse = float(np.sqrt(np.mean(errors**2)))
    usable = np.abs(truths) > MAPE_FLOOR
    mape = float(np.mean(np.abs(errors[usable]) / np.abs(truths[usable]))) if usable.any() else None
    return MetricSet(
        mae=mae, rmse=rmse, mape=mape, n=int(preds.size), mape_excluded=int((~usable).sum())
    )


def _pointwise(fn: Callable[[ContextSet], float]) -> Predictor:
    def predict(contexts: Sequence[ContextSet]) -> np.ndarray:
        return np.array([fn(c) for c in contexts], dtype=np.float64)

    return predict


def baseline_predictors(config: BaselineConfig) -> dict[str, Predictor]:
    """The non-learned predictors, keyed by report name."""
    return {
        "knn": _pointwise(lambda c: knn_infer(c, config.knn_k)),
        "idw_ses": _pointwise(lambda c: idw_ses_infer(c, config.idw_power, config.ses_alpha)),
        "mean": _pointwise(mean_infer),
    }


def model_predictor(model: FieldModel) -> Predictor:
    """Batched pyramidal inference with a fixed model."""

    def predict(contexts: Sequence[ContextSet]) -> np.ndarray:
        model.eval()
        out = []
        with torch.no_grad():
            for start in range(0, len(contexts), MODEL_BATCH):
                batch = collate_contexts(contexts[start : start + MODEL_BATCH], dtype=model.dtype)
                out.append(model(batch).final.to(torch.float64).cpu().numpy())
        return np.concatenate(out) if out else np.zeros(0)

    return predict


def with_aggregation(model: FieldModel, aggregation: str) -> FieldModel:
    """Same weights, different Neighbor Aggregation mode."""
    if model.config.aggregation == aggregation:
        return model
    swapped = FieldModel(model.config.model_copy(update={"aggregation": aggregation}))
    swapped.to(model.dtype)
    swapped.load_state_dict(model.state_dict())
    swapped.eval()
    return swapped


@dataclass
class SweepOutcome:
    report: SweepReport
    predictions: pd.DataFrame


def _fingerprint(contexts: Sequence[ContextSet]) -> str:
    digest = hashlib.sha256()
    for context in contexts:
        digest.update(context.fingerprint().encode())
    return digest.hexdigest()


def mask_sweep(
    dataset: StationDataset,
    models: Mapping[str, Predictor],
    ratios: Sequence[float],
    seed: int,
    split: TimeSplit,
    k_spatial: int = 6,
    t_hist: int = 6,
    max_samples_per_ratio: int | None = None,
    config_snapshot: dict | None = None,
) -> SweepOutcome:
    """Score every predictor at every mask ratio on the test time range.

    One mask is drawn per ratio, seeded by (seed, ratio index). Masked stations at test
    timesteps are the targets; contexts come from observed stations only.

    Raises:
        ParameterError: If some ratio leaves no masked or no observed station
            (raised before any evaluation).
        InsufficientContextError: If a ratio ends with no usable target.
    """
    if not models:
        raise ParameterError("mask_sweep needs at least one predictor")
    masks = [
        epoch_mask(dataset.station_ids, ratio, stream_seed(seed, "sweep_mask", i))
        for i, ratio in enumerate(ratios)
    ]

    builder = ContextBuilder(dataset)
    normalizer = builder.normalizer
    cells: list[SweepCell] = []
    fingerprints: dict[str, str] = {}
    rows: list[pd.DataFrame] = []

    for i, (ratio, (_, masked)) in enumerate(zip(ratios, masks, strict=True)):
        targets = builder.targets(masked, split.test, t_hist)
        if max_samples_per_ratio is not None and len(targets) > max_samples_per_ratio:
            rng = np.random.default_rng(stream_seed(seed, "sweep_sample", i))
            keep = np.sort(rng.choice(len(targets), size=max_samples_per_ratio, replace=False))
            targets = [targets[j] for j in keep]

        contexts: list[ContextSet] = []
        kept: list[tuple[str, int]] = []
        for sid, t in targets:
            try:
                context = builder.build(
                    builder.station_coordinate(sid, t),
                    t,
                    k_spatial,
                    t_hist,
                    exclude=masked,
                    target_station_id=sid,
                )
                contexts.append(context)
                kept.append((sid, t))
            except InsufficientContextError:
                continue
        n_skipped = len(targets) - len(kept)
        if not contexts:
            raise InsufficientContextError(f"no usable test target at mask ratio {ratio}")
        fingerprints[f"{ratio:g}"] = _fingerprint(contexts)

        truths = np.array([dataset.targets[dataset.station_index(s), t] for s, t in kept])
        for name, predict in models.items():
            preds = normalizer.denormalize_target(predict(contexts))
            cell = SweepCell(
                model=name, mask_ratio=ratio, metrics=metrics(preds, truths), n_skipped=n_skipped
            )
            cells.append(cell)
            logger.info(
                "sweep_cell_scored",
                model=name,
                mask_ratio=ratio,
                mae=cell.metrics.mae,
                rmse=cell.metrics.rmse,
                n=cell.metrics.n,
            )
            rows.append(
                pd.DataFrame(
                    {
                        "model": name,
                        "mask_ratio": ratio,
                        "station_id": [s for s, _ in kept],
                        "timestamp": [dataset.timestamps[t].isoformat() for _, t in kept],
                        "truth": truths,
                        "prediction": preds,
                    }
                )
            )

    notes = [
        "knn is a geometry-only variant: mean of the k nearest sources in normalized spacetime",
    ]
    if len(split.holdout):
        notes.append(
            f"the last {len(split.holdout)} timesteps are held out unused by every split"
        )

    report = SweepReport(
        models=list(models),
        ratios=list(ratios),
        cells=cells,
        seed=seed,
        config=config_snapshot or {},
        context_fingerprints=fingerprints,
        reference=[PUBLISHED_REFERENCE],
        notes=notes,
    )
    return SweepOutcome(report=report, predictions=pd.concat(rows, ignore_index=True))


def format_table(report: SweepReport) -> str:
    """Aligned plain-text table: one row per model, MAE/RMSE/MAPE per ratio."""
    header = ["model"]
    for ratio in report.ratios:
        tag = f"{ratio:.0%}"
        header += [f"MAE@{tag}", f"RMSE@{tag}", f"MAPE@{tag}"]
    body = []
    for model in report.models:
        row = [model]
        for ratio in report.ratios:
            m = report.get(model, ratio)
            row += [f"{m.mae:.3f}", f"{m.rmse:.3f}", "-" if m.mape is None else f"{m.mape:.3f}"]
        body.append(row)
    for ref in report.reference:
        row = [f"{ref.label}*"]
        for ratio in report.ratios:
            if abs(ratio - ref.mask_ratio) < 1e-12:
                row += [f"{ref.mae:.2f}", f"{ref.rmse:.2f}", f"{ref.mape:.2f}"]
            else:
                row += ["", "", ""]
        body.append(row)

    widths = [max(len(r[c]) for r in [header, *body]) for c in range(len(header))]
    lines = [
        "  ".join(cell.ljust(w) for cell, w in zip(r, widths, strict=True)).rstrip()
        for r in [header, *body]
    ]
    lines.insert(1, "  ".join("-" * w for w in widths))
    if report.reference:
        lines.append("")
        lines.append(f"* {report.reference[0].note}")
    lines.extend(f"note: {n}" for n in report.notes)
    return "\n".join(lines) + "\n"


def write_sweep(outcome: SweepOutcome, output_dir: Path, write_predictions: bool = False) -> None:
    """Write sweep_report.json, sweep_report.txt and optionally predictions.csv."""
    output_dir.mkdir(parents=True, exist_ok=True)
    (output_dir / "sweep_report.json").write_text(
        outcome.report.model_dump_json(indent=2) + "\n", encoding="utf-8"
    )
    (output_dir / "sweep_report.txt").write_text(format_table(outcome.report), encoding="utf-8")
    if write_predictions:
        outcome.predictions.to_csv(output_dir / "predictions.csv", index=False, float_format="%.6f")
