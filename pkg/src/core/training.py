"""Training - Epoch-masked optimization of the field model.

Each epoch hides a fresh random fraction of the stations; their readings at
training timesteps become targets inferred from the remaining stations.
Validation uses one fixed mask over the validation range. The parameters
with the lowest validation MAE are returned.
"""

import copy
import math
import time
from collections.abc import Callable, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
import torch

from src.config.experiment import DiagnosticsConfig, TrainConfig
from src.contracts.reports import CurlReport, EpochRecord, MetricSet, TrainLog
from src.core.diagnostics import curl_estimate, observation_domain
from src.core.evalsuite import metrics, model_predictor
from src.core.field_model import FieldModel, collate_contexts
from src.core.geodata import ContextBuilder, ContextSet, StationDataset, TimeSplit, epoch_mask
from src.utils.errors import (
    InsufficientContextError,
    NumericError,
    ParameterError,
    ShapeError,
    TrainingDivergedError,
)
from src.utils.logger import get_logger
from src.utils.seeding import stream_seed

logger = get_logger(__name__)

# hook(epoch, context, masked_station_ids), called for every training context
ContextHook = Callable[[int, ContextSet, frozenset[str]], None]
# callback(epoch, model) after each completed epoch
EpochCallback = Callable[[int, FieldModel], None]


def lr_schedule(epoch: int, base_lr: float, period: int) -> float:
    """Step decay: base_lr halved every period epochs (epoch counted from 0)."""
    if period < 1:
        raise ParameterError(f"lr halving period must be at least 1, got {period}")
    return base_lr * 0.5 ** (epoch // period)


def loss(pred: torch.Tensor, truth: torch.Tensor, kind: str = "mae") -> torch.Tensor:
    """Mean absolute or squared error in normalized target units.

    Raises:
        ShapeError: On a length mismatch.
        ParameterError: On empty input or an unknown kind.
    """
    if pred.shape != truth.shape:
        raise ShapeError(f"pred {tuple(pred.shape)} != truth {tuple(truth.shape)}")
    if pred.numel() == 0:
        raise ParameterError("loss needs at least one sample")
    if kind == "mae":
        return (pred - truth).abs().mean()
    if kind == "mse":
        return ((pred - truth) ** 2).mean()
    raise ParameterError(f"unknown loss kind '{kind}'")


@dataclass
class TrainResult:
    model: FieldModel
    log: TrainLog
    curl_series: list[CurlReport]


def _subsample(pairs: list[tuple[str, int]], limit: int | None, seed: int) -> list[tuple[str, int]]:
    """Seeded shuffle, truncated to limit."""
    order = np.random.default_rng(seed).permutation(len(pairs))
    if limit is not None:
        order = order[:limit]
    return [pairs[i] for i in order]


class _ContextSource:
    """Builds contexts for (station, timestep) targets, optionally in threads."""

    def __init__(self, builder: ContextBuilder, cfg: TrainConfig) -> None:
        self.builder = builder
        self.cfg = cfg

    def _one(self, pair: tuple[str, int], masked: frozenset[str]) -> ContextSet | None:
        sid, t = pair
        try:
            return self.builder.build(
                self.builder.station_coordinate(sid, t),
                t,
                self.cfg.k_spatial,
                self.cfg.t_hist,
                exclude=masked,
                target_station_id=sid,
            )
        except InsufficientContextError:
            return None

    def build(
        self, pairs: Sequence[tuple[str, int]], masked: frozenset[str]
    ) -> tuple[list[ContextSet], int]:
        """Contexts in target order, plus the number of skipped targets."""
        if self.cfg.context_workers > 1:
            with ThreadPoolExecutor(max_workers=self.cfg.context_workers) as pool:
                built = list(pool.map(lambda p: self._one(p, masked), pairs))
        else:
            built = [self._one(p, masked) for p in pairs]
        contexts = [c for c in built if c is not None]
        return contexts, len(built) - len(contexts)

    def truth(self, context: ContextSet) -> float:
        s = self.builder.index_of(context.target_station_id or "")
        return float(self.builder.values[s, context.target_timestep])


def _validate(
    model: FieldModel, contexts: Sequence[ContextSet], truths_raw: np.ndarray, builder: ContextBuilder
) -> MetricSet:
    preds = builder.normalizer.denormalize_target(model_predictor(model)(contexts))
    return metrics(preds, truths_raw)


def train(
    dataset: StationDataset,
    model: FieldModel,
    cfg: TrainConfig,
    split: TimeSplit,
    diagnostics: DiagnosticsConfig | None = None,
    context_hook: ContextHook | None = None,
    on_epoch_end: EpochCallback | None = None,
    record_wall_time: bool = False,
) -> TrainResult:
    """Optimize model on the training range and select by validation MAE.

    Args:
        dataset: Filtered dataset carrying its normalizer.
        model: Model to optimize in place.
        cfg: Training protocol.
        split: Chronological split; targets come from split.train, the
            fixed validation mask from split.val.
        diagnostics: Enables curl tracking when curl_every_n_epochs > 0.
        context_hook: Instrumentation called for every training context.
        on_epoch_end: Called after each epoch with the current parameters.
        record_wall_time: Store per-epoch durations in the log.

    Returns:
        The model loaded with its best parameters, the log and the curl series.

    Raises:
        TrainingDivergedError: On a non-finite loss or difference.
        InsufficientContextError: If no validation target has a usable context.
    """
    if cfg.seed is None:
        raise ParameterError("train seed must be resolved before training")
    builder = ContextBuilder(dataset)
    source = _ContextSource(builder, cfg)
    seed = cfg.seed

    _, val_masked = epoch_mask(
        dataset.station_ids, cfg.mask_ratio, stream_seed(seed, "validation_mask")
    )
    val_pairs = sorted(
        _subsample(
            builder.targets(val_masked, split.val, cfg.t_hist),
            cfg.max_val_samples,
            stream_seed(seed, "validation_sample"),
        ),
        key=lambda p: (p[0], p[1]),
    )
    val_contexts, val_skipped = source.build(val_pairs, val_masked)
    if not val_contexts:
        raise InsufficientContextError("no validation target has a usable context")
    val_truths = builder.normalizer.denormalize_target([source.truth(c) for c in val_contexts])

    curl_every = diagnostics.curl_every_n_epochs if diagnostics else 0
    domain = observation_domain(builder, split.train)

    log = TrainLog(initial_val=_validate(model, val_contexts, val_truths, builder))
    logger.info(
        "training_started",
        parameters=model.parameter_count(),
        epochs=cfg.epochs,
        val_targets=len(val_contexts),
        val_skipped=val_skipped,
        initial_val_mae=log.initial_val.mae if log.initial_val else None,
    )

    optimizer = torch.optim.Adam(model.parameters(), lr=cfg.base_lr)
    best_mae = math.inf
    best_state = copy.deepcopy(model.state_dict())
    curl_series: list[CurlReport] = []

    for epoch in range(cfg.epochs):
        started = time.perf_counter()
        lr = lr_schedule(epoch, cfg.base_lr, cfg.lr_halving_period)
        for group in optimizer.param_groups:
            group["lr"] = lr

        _, masked = epoch_mask(
            dataset.station_ids, cfg.mask_ratio, stream_seed(seed, "epoch_mask", epoch)
        )
        pairs = _subsample(
            builder.targets(masked, split.train, cfg.t_hist),
            cfg.max_samples_per_epoch,
            stream_seed(seed, "epoch_sample", epoch),
        )
        contexts, skipped = source.build(pairs, masked)
        if context_hook is not None:
            for context in contexts:
                context_hook(epoch + 1, context, masked)

        model.train()
        total, seen = 0.0, 0
        for index, start in enumerate(range(0, len(contexts), cfg.batch_size)):
            chunk = contexts[start : start + cfg.batch_size]
            batch = collate_contexts(chunk, dtype=model.dtype)
            truth = torch.tensor([source.truth(c) for c in chunk], dtype=model.dtype)
            try:
                value = loss(model(batch).final, truth, cfg.loss_kind)
            except NumericError as e:
                raise TrainingDivergedError(epoch + 1, index) from e
            if not torch.isfinite(value):
                raise TrainingDivergedError(epoch + 1, index)

            optimizer.zero_grad()
            value.backward()
            torch.nn.utils.clip_grad_norm_(model.parameters(), cfg.grad_clip_norm)
            optimizer.step()
            total += value.detach().item() * len(chunk)
            seen += len(chunk)

        model.eval()
        val = _validate(model, val_contexts, val_truths, builder)
        curl = None
        if curl_every and (epoch + 1) % curl_every == 0 and diagnostics is not None:
            report = curl_estimate(
                model.probe,
                domain,
                diagnostics.n_samples,
                diagnostics.fd_step,
                diagnostics.seed or 0,
                epoch_tag=epoch + 1,
            )
            curl_series.append(report)
            curl = report.mean_curl_norm

        record = EpochRecord(
            epoch=epoch + 1,
            train_loss=total / seen if seen else math.nan,
            val_mae=val.mae,
            val_rmse=val.rmse,
            val_mape=val.mape,
            lr=lr,
            curl_estimate=curl,
            n_samples=seen,
            n_skipped=skipped,
            wall_time=time.perf_counter() - started if record_wall_time else None,
        )
        log.records.append(record)
        logger.info(
            "epoch_completed",
            epoch=record.epoch,
            train_loss=record.train_loss,
            val_mae=record.val_mae,
            lr=lr,
            skipped=skipped,
        )

        if val.mae < best_mae:
            best_mae = val.mae
            best_state = copy.deepcopy(model.state_dict())
            log.best_epoch = epoch + 1
        if on_epoch_end is not None:
            on_epoch_end(epoch + 1, model)

    model.load_state_dict(best_state)
    model.eval()
    logger.info("training_finished", best_epoch=log.best_epoch, best_val_mae=best_mae)
    return TrainResult(model=model, log=log, curl_series=curl_series)
