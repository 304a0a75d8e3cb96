"""Command Handlers - One function per CLI subcommand.

Handlers receive parsed argparse namespaces, write artifacts into the
experiment's output_dir and return a process exit code. Results meant for
the user go to stdout; logs go to stderr.
"""

import argparse
import json
import re
import sys
import time
from dataclasses import dataclass
from pathlib import Path

import pandas as pd
from pydantic import ValidationError

from src.config.experiment import (
    ExperimentConfig,
    TrainConfig,
    error_keys,
    load_experiment_config,
)
from src.config.settings import get_settings
from src.contracts.geodata import AnalyticField, CsvSchema
from src.contracts.reports import CheckResult, InferenceResult, NeighborProvenance
from src.core.checkpoint import load_checkpoint, save_checkpoint
from src.core.checks import run_checks
from src.core.diagnostics import curl_estimate, gradient_check, observation_domain
from src.core.evalsuite import (
    Predictor,
    baseline_predictors,
    mask_sweep,
    model_predictor,
    with_aggregation,
    write_sweep,
)
from src.core.field_model import FieldModel, pyramidal_infer
from src.core.geodata import (
    ContextBuilder,
    StationDataset,
    TimeSplit,
    chronological_split,
    filter_missing,
    fit_normalizer,
    load_observations,
    write_observations,
)
from src.core.synthetic import generate_synthetic
from src.core.training import train
from src.utils.errors import CheckpointError, ConfigError, ParameterError
from src.utils.logger import get_logger

logger = get_logger(__name__)

CHECKPOINT_PATTERN = re.compile(r"epoch_(\d+)\.pt$")


@dataclass
class PreparedData:
    dataset: StationDataset
    split: TimeSplit
    field: AnalyticField | None


def _load_config(args: argparse.Namespace) -> ExperimentConfig:
    return load_experiment_config(args.config, args.set)


def _raw_dataset(config: ExperimentConfig) -> tuple[StationDataset, AnalyticField | None]:
    data = config.data
    if data.synthetic is not None:
        return generate_synthetic(data.synthetic)
    assert data.path is not None
    return load_observations(data.path, data.csv_schema), None


def prepare_data(config: ExperimentConfig) -> PreparedData:
    """Load or generate, filter, normalize on the training range and split."""
    data = config.data
    dataset, field = _raw_dataset(config)
    dataset = filter_missing(dataset, data.missing_threshold)
    normalizer = fit_normalizer(dataset, data.train_fraction, data.time_scale)
    split = chronological_split(
        dataset.n_timesteps, data.train_fraction, data.val_fraction, data.test_fraction
    )
    return PreparedData(dataset=dataset.with_normalizer(normalizer), split=split, field=field)


def _write_json(path: Path, payload: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(payload + "\n", encoding="utf-8")


def handle_synth(args: argparse.Namespace) -> int:
    """Write dataset.csv and field.json for a synthetic data section."""
    config = _load_config(args)
    if config.data.synthetic is None:
        raise ConfigError("synth needs a synthetic data section", ["data.synthetic"])
    dataset, field = generate_synthetic(config.data.synthetic)
    out = config.output_dir
    write_observations(dataset, out / "dataset.csv")
    _write_json(out / "field.json", field.model_dump_json(indent=2))
    print(f"wrote {out / 'dataset.csv'} ({dataset.n_stations} stations, {dataset.n_timesteps} steps)")
    print(f"wrote {out / 'field.json'} ({len(field.plumes)} plumes)")
    return 0


def _epoch_saver(out: Path, cfg: TrainConfig, prepared: PreparedData, seed: int | None):
    def save(epoch: int, model: FieldModel) -> None:
        every = cfg.checkpoint_every
        if every and (epoch == 1 or epoch % every == 0 or epoch == cfg.epochs):
            save_checkpoint(
                out / "checkpoints" / f"epoch_{epoch:03d}.pt",
                model,
                prepared.dataset.normalizer,
                seed=seed,
                epoch=epoch,
            )

    return save


def handle_train(args: argparse.Namespace) -> int:
    """Train, writing model.pt, epoch checkpoints, trainlog.jsonl and train_curl_series.jsonl."""
    config = _load_config(args)
    settings = get_settings()
    prepared = prepare_data(config)
    out = config.output_dir

    model_config = config.model.model_copy(update={"feature_dim": prepared.dataset.feature_dim})
    model = FieldModel(model_config)
    result = train(
        prepared.dataset,
        model,
        config.train,
        prepared.split,
        diagnostics=config.diagnostics,
        on_epoch_end=_epoch_saver(out, config.train, prepared, config.seed),
        record_wall_time=settings.record_wall_time,
    )

    save_checkpoint(
        out / "model.pt",
        result.model,
        prepared.dataset.normalizer,
        seed=config.seed,
        epoch=result.log.best_epoch,
    )
    (out / "trainlog.jsonl").write_text(result.log.to_jsonl(), encoding="utf-8")
    if result.log.initial_val is not None:
        _write_json(out / "initial_val.json", result.log.initial_val.model_dump_json(indent=2))
    if result.curl_series:
        (out / "train_curl_series.jsonl").write_text(
            "".join(r.model_dump_json() + "\n" for r in result.curl_series), encoding="utf-8"
        )

    last = result.log.records[-1]
    print(
        f"trained {len(result.log.records)} epochs; best epoch {result.log.best_epoch}; "
        f"final val MAE {last.val_mae:.4f}; wrote {out / 'model.pt'}"
    )
    return 0


def _predictors(
    names: list[str], config: ExperimentConfig, model: FieldModel | None
) -> dict[str, Predictor]:
    baselines = baseline_predictors(config.baselines)
    predictors: dict[str, Predictor] = {}
    for name in names:
        if name in baselines:
            predictors[name] = baselines[name]
            continue
        if model is None:
            raise CheckpointError(f"predictor '{name}' needs a trained checkpoint")
        aggregation = "idw_ses" if name == "stfnn_idw_ses" else "learned"
        predictors[name] = model_predictor(with_aggregation(model, aggregation))
    return predictors


def _checkpoint_path(args: argparse.Namespace, config: ExperimentConfig | None) -> Path:
    if getattr(args, "checkpoint", None):
        return Path(args.checkpoint)
    if config is None:
        raise ConfigError("infer needs --checkpoint when no --config is given", ["checkpoint"])
    return config.output_dir / "model.pt"


def handle_eval(args: argparse.Namespace) -> int:
    """Run the mask-ratio sweep and write sweep_report.json/.txt."""
    config = _load_config(args)
    settings = get_settings()
    prepared = prepare_data(config)
    out = config.output_dir

    names = config.eval.models
    model = None
    if any(n.startswith("stfnn") for n in names):
        checkpoint = load_checkpoint(_checkpoint_path(args, config))
        model = checkpoint.model
        if checkpoint.normalizer is not None:
            prepared.dataset = prepared.dataset.with_normalizer(checkpoint.normalizer)

    started = time.perf_counter()
    outcome = mask_sweep(
        prepared.dataset,
        _predictors(names, config, model),
        config.eval.ratios,
        seed=config.eval.seed or 0,
        split=prepared.split,
        k_spatial=config.train.k_spatial,
        t_hist=config.train.t_hist,
        max_samples_per_ratio=config.eval.max_samples_per_ratio,
        config_snapshot=config.model_dump(mode="json", by_alias=True),
    )
    if settings.record_wall_time:
        outcome.report = outcome.report.model_copy(
            update={"wall_time": time.perf_counter() - started}
        )

    write_sweep(outcome, out, write_predictions=config.eval.write_predictions)
    print((out / "sweep_report.txt").read_text(encoding="utf-8"), end="")
    return 0


def _infer_dataset(
    args: argparse.Namespace, config: ExperimentConfig | None
) -> StationDataset:
    if args.data:
        schema = CsvSchema()
        if args.schema:
            schema_path = Path(args.schema)
            if not schema_path.exists():
                raise FileNotFoundError(schema_path)
            try:
                schema = CsvSchema.model_validate_json(schema_path.read_text(encoding="utf-8"))
            except ValidationError as e:
                raise ConfigError(f"invalid CSV schema {schema_path}", error_keys(e)) from e
        return load_observations(args.data, schema)
    if config is None:
        raise ConfigError("infer needs --data or --config", ["data"])
    dataset, _ = _raw_dataset(config)
    return filter_missing(dataset, config.data.missing_threshold)


def handle_infer(args: argparse.Namespace) -> int:
    """Single-point inference with per-neighbor provenance, printed as JSON."""
    config = _load_config(args) if args.config else None
    dataset = _infer_dataset(args, config)
    checkpoint = load_checkpoint(_checkpoint_path(args, config))
    normalizer = checkpoint.normalizer or fit_normalizer(dataset)
    dataset = dataset.with_normalizer(normalizer)

    train_cfg = config.train if config else TrainConfig()
    builder = ContextBuilder(dataset)
    try:
        when = pd.Timestamp(args.time)
    except ValueError as e:
        raise ParameterError(f"cannot parse --time '{args.time}'") from e
    if pd.isna(when):
        raise ParameterError(f"--time '{args.time}' is not a point in time")
    if when.tzinfo is not None:
        when = when.tz_convert("UTC").tz_localize(None)
    target, timestep = builder.coordinate_at(args.lng, args.lat, when)
    context = builder.build(target, timestep, train_cfg.k_spatial, train_cfg.t_hist)
    estimate = pyramidal_infer(checkpoint.model, context)

    raw_values = normalizer.denormalize_target(estimate.source_values)
    raw_estimates = normalizer.denormalize_target(estimate.per_source_estimates)
    result = InferenceResult(
        lng=args.lng,
        lat=args.lat,
        time=when.isoformat(),
        value=float(normalizer.denormalize_target(estimate.final)),
        neighbors=[
            NeighborProvenance(
                station_id=sid,
                timestamp=dataset.timestamps[t].isoformat(),
                value=float(v),
                estimate=float(e),
                weight=w,
            )
            for sid, t, v, e, w in zip(
                estimate.source_station_ids,
                estimate.source_timesteps,
                raw_values,
                raw_estimates,
                estimate.weights,
                strict=True,
            )
        ],
    )
    print(result.model_dump_json(indent=2))
    return 0


def _epoch_checkpoints(out: Path) -> list[tuple[int, Path]]:
    found = []
    for path in sorted((out / "checkpoints").glob("epoch_*.pt")):
        match = CHECKPOINT_PATTERN.search(path.name)
        if match:
            found.append((int(match.group(1)), path))
    return sorted(found)


def handle_curl_report(args: argparse.Namespace) -> int:
    """Curl of the probed field at every saved epoch checkpoint."""
    config = _load_config(args)
    prepared = prepare_data(config)
    out = config.output_dir
    checkpoints = _epoch_checkpoints(out)
    if not checkpoints:
        raise CheckpointError(f"no epoch checkpoints under {out / 'checkpoints'}")

    diag = config.diagnostics
    domain = observation_domain(ContextBuilder(prepared.dataset), prepared.split.train)
    series = []
    for epoch, path in checkpoints:
        model = load_checkpoint(path).model
        report = curl_estimate(
            model.probe, domain, diag.n_samples, diag.fd_step, diag.seed or 0, epoch_tag=epoch
        )
        series.append(report)
        relative = "n/a" if report.relative_curl is None else f"{report.relative_curl:.6g}"
        print(f"epoch {epoch:>4d}  mean_curl_norm {report.mean_curl_norm:.6g}  relative {relative}")
    (out / "curl_series.jsonl").write_text(
        "".join(r.model_dump_json() + "\n" for r in series), encoding="utf-8"
    )

    if prepared.field is not None:
        final = out / "model.pt"
        model = load_checkpoint(final if final.exists() else checkpoints[-1][1]).model
        check = gradient_check(
            model,
            prepared.field,
            prepared.dataset.normalizer,
            n_samples=diag.gradient_check_samples,
            seed=diag.seed or 0,
            domain=domain,
        )
        _write_json(out / "gradient_check.json", check.model_dump_json(indent=2))
        print(f"gradient check: mean angle {check.mean_angle_deg}, coverage {check.coverage:.2f}")
    return 0


def handle_check(args: argparse.Namespace) -> int:
    """Run the invariant suite; exit 1 if any check fails."""
    config = _load_config(args)
    results: list[CheckResult] = run_checks(config.seed, args.only or None)
    payload = json.dumps([r.model_dump() for r in results], indent=2)
    _write_json(config.output_dir / "check_report.json", payload)
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'}  {r.name}: {r.detail}")
    failed = [r.name for r in results if not r.passed]
    if failed:
        print(f"{len(failed)} check(s) failed: {', '.join(failed)}", file=sys.stderr)
        return 1
    return 0


def handle_schema(args: argparse.Namespace) -> int:
    """Print the experiment config JSON schema."""
    print(json.dumps(ExperimentConfig.model_json_schema(by_alias=True), indent=2))
    return 0
