"""Geodata - Observation ingestion, normalization, masking and context construction.

Raw degrees appear only at ingestion. Everything downstream works in the
normalized spacetime of the fitted Normalizer: z-normalized longitude and
latitude plus tau = days since the dataset epoch / time_scale.
"""

import hashlib
import math
from collections.abc import Iterable, Sequence
from pathlib import Path

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from src.contracts.geodata import Coordinate, CsvSchema
from src.utils.errors import (
    InsufficientContextError,
    NoUsableDataError,
    ParameterError,
    ParseError,
    SchemaError,
)
from src.utils.logger import get_logger

logger = get_logger(__name__)

STD_FLOOR = 1e-6
GRID_STEP = pd.Timedelta(hours=1)
MISSING_CATEGORY = -1
ONE_DAY = pd.Timedelta(days=1)
MISSING_TOKENS = ("", "nan", "na", "null", "none")


class StationRecord(BaseModel):
    """One station's metadata and aligned series."""

    station_id: str
    raw_lng: float
    raw_lat: float
    timestamps: pd.DatetimeIndex
    targets: np.ndarray = Field(..., description="(T,) target values, NaN = missing")
    features: np.ndarray = Field(..., description="(T, F) real features")
    categorical: np.ndarray = Field(..., description="(T, C) category indices, -1 = missing")

    model_config = ConfigDict(arbitrary_types_allowed=True)


class Normalizer(BaseModel):
    """z-normalization statistics fitted on the training time range."""

    lng_mean: float
    lng_std: float = Field(..., gt=0.0)
    lat_mean: float
    lat_std: float = Field(..., gt=0.0)
    feature_means: list[float] = Field(default_factory=list)
    feature_stds: list[float] = Field(default_factory=list)
    target_mean: float
    target_std: float = Field(..., gt=0.0)
    time_scale: float = Field(1.0, gt=0.0, description="Days per tau unit")
    warnings: list[str] = Field(default_factory=list)

    @field_validator("feature_stds")
    @classmethod
    def validate_positive(cls, v: list[float]) -> list[float]:
        if any(not s > 0.0 for s in v):
            raise ValueError("feature stds must be strictly positive")
        return v

    def normalize_xy(self, lng, lat) -> tuple[np.ndarray, np.ndarray]:
        """Map degrees to z-normalized (x, y)."""
        x = (np.asarray(lng, dtype=np.float64) - self.lng_mean) / self.lng_std
        y = (np.asarray(lat, dtype=np.float64) - self.lat_mean) / self.lat_std
        return x, y

    def denormalize_xy(self, x, y) -> tuple[np.ndarray, np.ndarray]:
        """Map z-normalized (x, y) back to degrees."""
        lng = np.asarray(x, dtype=np.float64) * self.lng_std + self.lng_mean
        lat = np.asarray(y, dtype=np.float64) * self.lat_std + self.lat_mean
        return lng, lat

    def normalize_target(self, values) -> np.ndarray:
        return (np.asarray(values, dtype=np.float64) - self.target_mean) / self.target_std

    def denormalize_target(self, values) -> np.ndarray:
        return np.asarray(values, dtype=np.float64) * self.target_std + self.target_mean

    def normalize_features(self, values) -> np.ndarray:
        """Normalize along the last axis (one entry per feature column)."""
        values = np.asarray(values, dtype=np.float64)
        if values.shape[-1] == 0:
            return values
        return (values - np.asarray(self.feature_means)) / np.asarray(self.feature_stds)

    def denormalize_features(self, values) -> np.ndarray:
        values = np.asarray(values, dtype=np.float64)
        if values.shape[-1] == 0:
            return values
        return values * np.asarray(self.feature_stds) + np.asarray(self.feature_means)

    def tau(self, timestamps, epoch: pd.Timestamp) -> np.ndarray:
        """Normalized time of timestamps relative to the dataset epoch."""
        delta = pd.DatetimeIndex(timestamps) - epoch
        return np.asarray(delta / ONE_DAY, dtype=np.float64) / self.time_scale

    def timestamp(self, tau: float, epoch: pd.Timestamp) -> pd.Timestamp:
        """Inverse of tau for a single value."""
        return epoch + ONE_DAY * (tau * self.time_scale)


class StationDataset(BaseModel):
    """Station metadata plus aligned series on a shared timestamp grid."""

    station_ids: list[str]
    raw_lng: np.ndarray
    raw_lat: np.ndarray
    timestamps: pd.DatetimeIndex
    targets: np.ndarray = Field(..., description="(S, T), NaN = missing")
    features: np.ndarray = Field(..., description="(S, T, F)")
    categorical: np.ndarray = Field(..., description="(S, T, C), -1 = missing")
    feature_names: list[str] = Field(default_factory=list)
    categorical_names: list[str] = Field(default_factory=list)
    categorical_levels: list[list[str]] = Field(default_factory=list)
    epoch: pd.Timestamp
    normalizer: Normalizer | None = None

    model_config = ConfigDict(arbitrary_types_allowed=True)

    @model_validator(mode="after")
    def validate_shapes(self) -> "StationDataset":
        s, t = len(self.station_ids), len(self.timestamps)
        if len(set(self.station_ids)) != s:
            raise ValueError("station ids must be unique")
        if self.raw_lng.shape != (s,) or self.raw_lat.shape != (s,):
            raise ValueError("one longitude and latitude per station required")
        if self.targets.shape != (s, t):
            raise ValueError(f"targets must be ({s}, {t}), got {self.targets.shape}")
        if self.features.shape != (s, t, len(self.feature_names)):
            raise ValueError("features must be (stations, timesteps, feature_names)")
        if self.categorical.shape != (s, t, len(self.categorical_names)):
            raise ValueError("categorical must be (stations, timesteps, categorical_names)")
        if len(self.categorical_levels) != len(self.categorical_names):
            raise ValueError("one level list per categorical column required")
        if t > 1 and (not self.timestamps.is_monotonic_increasing or self.timestamps.has_duplicates):
            raise ValueError("timestamps must be strictly increasing")
        finite = self.targets[np.isfinite(self.targets)]
        if finite.size and finite.min() < 0.0:
            raise ValueError("target values must be nonnegative")
        return self

    @property
    def n_stations(self) -> int:
        return len(self.station_ids)

    @property
    def n_timesteps(self) -> int:
        return len(self.timestamps)

    @property
    def feature_dim(self) -> int:
        """Length of X^src after one-hot expansion of categorical columns."""
        return len(self.feature_names) + sum(len(levels) for levels in self.categorical_levels)

    @property
    def stations(self) -> list[StationRecord]:
        """Per-station view of the aligned arrays."""
        return [
            StationRecord(
                station_id=sid,
                raw_lng=float(self.raw_lng[i]),
                raw_lat=float(self.raw_lat[i]),
                timestamps=self.timestamps,
                targets=self.targets[i],
                features=self.features[i],
                categorical=self.categorical[i],
            )
            for i, sid in enumerate(self.station_ids)
        ]

    def station_index(self, station_id: str) -> int:
        try:
            return self.station_ids.index(station_id)
        except ValueError:
            raise KeyError(station_id) from None

    def with_normalizer(self, normalizer: Normalizer) -> "StationDataset":
        """Return a copy carrying the given normalizer."""
        return self.model_copy(update={"normalizer": normalizer})


class TimeSplit(BaseModel):
    """Chronological partition of the timestep grid (end indices exclusive)."""

    n_timesteps: int = Field(..., ge=1)
    train_end: int
    val_end: int
    test_end: int

    @property
    def train(self) -> range:
        return range(0, self.train_end)

    @property
    def val(self) -> range:
        return range(self.train_end, self.val_end)

    @property
    def test(self) -> range:
        return range(self.val_end, self.test_end)

    @property
    def holdout(self) -> range:
        """Trailing timesteps not assigned to any split."""
        return range(self.test_end, self.n_timesteps)


def chronological_split(
    n_timesteps: int,
    train_fraction: float = 0.6,
    val_fraction: float = 0.2,
    test_fraction: float = 0.1,
) -> TimeSplit:
    """Split the timeline into consecutive train/val/test ranges.

    Fractions need not sum to one; the remainder is held out unused.

    Raises:
        ParameterError: If a fraction is out of range or a split is empty.
    """
    fractions = (train_fraction, val_fraction, test_fraction)
    if any(not 0.0 < f <= 1.0 for f in fractions) or sum(fractions) > 1.0 + 1e-9:
        raise ParameterError(f"invalid split fractions {fractions}")

    def _end(cumulative: float) -> int:
        return min(n_timesteps, int(math.floor(cumulative * n_timesteps + 1e-9)))

    train_end = _end(train_fraction)
    val_end = _end(train_fraction + val_fraction)
    test_end = _end(train_fraction + val_fraction + test_fraction)
    if not 0 < train_end < val_end < test_end:
        raise ParameterError(
            f"{n_timesteps} timesteps are too few for split fractions {fractions}"
        )
    return TimeSplit(
        n_timesteps=n_timesteps, train_end=train_end, val_end=val_end, test_end=test_end
    )


def _parse_numeric(
    raw: pd.Series, lines: np.ndarray, column: str, required: bool
) -> np.ndarray:
    """Parse a string column into floats, naming the first bad line."""
    empty = raw.str.lower().isin(MISSING_TOKENS).to_numpy()
    values = pd.to_numeric(raw.where(~empty, None), errors="coerce").to_numpy(
        dtype=np.float64
    )
    bad = np.isnan(values) & ~empty
    if required:
        bad |= empty
    if bad.any():
        first = int(np.flatnonzero(bad)[0])
        raise ParseError(
            f"column '{column}' has unparseable value '{raw.iloc[first]}'",
            line=int(lines[first]),
        )
    return values


def load_observations(path: str | Path, schema: CsvSchema | None = None) -> StationDataset:
    """Load a long-format observation CSV onto a uniform hourly grid.

    Args:
        path: CSV with one row per (station, timestamp).
        schema: Column mapping; defaults to the standard column names.

    Returns:
        Dataset with absent readings marked missing (NaN target).

    Raises:
        FileNotFoundError: If path does not exist.
        ParseError: On a malformed row (message names the line).
        SchemaError: On missing columns, duplicate (station, timestamp) or a
            non-uniform timestamp grid.
    """
    schema = schema or CsvSchema()
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)

    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False, encoding="utf-8")
    except pd.errors.ParserError as e:
        raise ParseError(str(e)) from e
    except UnicodeDecodeError as e:
        raise ParseError(f"{path} is not valid UTF-8 (byte offset {e.start})") from e
    except pd.errors.EmptyDataError as e:
        raise NoUsableDataError(f"{path} is empty") from e
    frame = frame.apply(lambda col: col.str.strip())

    required = [
        schema.station_id_column,
        schema.timestamp_column,
        schema.lng_column,
        schema.lat_column,
        schema.target_column,
        *schema.feature_columns,
        *schema.categorical_columns,
    ]
    absent = [c for c in required if c not in frame.columns]
    if absent:
        raise SchemaError(f"missing columns: {', '.join(absent)}")
    if frame.empty:
        raise NoUsableDataError(f"{path} has no rows")

    # header is line 1
    lines = frame.index.to_numpy() + 2

    station = frame[schema.station_id_column]
    if (station == "").any():
        first = int(np.flatnonzero(station.to_numpy() == "")[0])
        raise ParseError("empty station id", line=int(lines[first]))

    # Offsets may differ per row; everything is compared in naive UTC.
    stamps = pd.to_datetime(
        frame[schema.timestamp_column], format="ISO8601", utc=True, errors="coerce"
    )
    if stamps.isna().any():
        first = int(np.flatnonzero(stamps.isna().to_numpy())[0])
        raise ParseError(
            f"unparseable timestamp '{frame[schema.timestamp_column].iloc[first]}'",
            line=int(lines[first]),
        )
    stamps = stamps.dt.tz_localize(None)

    lng = _parse_numeric(frame[schema.lng_column], lines, schema.lng_column, required=True)
    lat = _parse_numeric(frame[schema.lat_column], lines, schema.lat_column, required=True)
    target = _parse_numeric(
        frame[schema.target_column], lines, schema.target_column, required=False
    )
    bad_target = ~np.isnan(target) & (~np.isfinite(target) | (target < 0.0))
    if bad_target.any():
        first = int(np.flatnonzero(bad_target)[0])
        raise ParseError("target must be finite and nonnegative", line=int(lines[first]))

    tidy = pd.DataFrame(
        {
            "station_id": station.to_numpy(),
            "timestamp": stamps.to_numpy(),
            "lng": lng,
            "lat": lat,
            "target": target,
        }
    )
    for column in schema.feature_columns:
        tidy[f"f:{column}"] = _parse_numeric(frame[column], lines, column, required=False)

    levels: list[list[str]] = []
    for column in schema.categorical_columns:
        raw = frame[column]
        column_levels = sorted(v for v in raw.unique() if v != "")
        lookup = {v: i for i, v in enumerate(column_levels)}
        tidy[f"c:{column}"] = raw.map(lambda v, lookup=lookup: lookup.get(v, MISSING_CATEGORY))
        levels.append(column_levels)

    duplicated = tidy.duplicated(["station_id", "timestamp"])
    if duplicated.any():
        first = int(np.flatnonzero(duplicated.to_numpy())[0])
        raise SchemaError(
            f"duplicate reading for station '{tidy['station_id'].iloc[first]}' "
            f"at {tidy['timestamp'].iloc[first]} (line {lines[first]})"
        )

    grid = pd.DatetimeIndex(np.sort(tidy["timestamp"].unique()))
    if len(grid) > 1:
        steps = grid[1:] - grid[:-1]
        if (steps != GRID_STEP).any():
            gap = int(np.flatnonzero(steps != GRID_STEP)[0])
            raise SchemaError(
                f"timestamp grid is not uniform hourly: {grid[gap]} -> {grid[gap + 1]}"
            )

    station_ids = sorted(tidy["station_id"].unique())
    positions = tidy.groupby("station_id")[["lng", "lat"]].agg(["min", "max"])
    spread = (positions.xs("max", axis=1, level=1) - positions.xs("min", axis=1, level=1)).abs()
    if (spread.to_numpy() > 1e-9).any():
        moving = spread[(spread > 1e-9).any(axis=1)].index[0]
        raise SchemaError(f"station '{moving}' reports more than one position")
    positions = positions.xs("min", axis=1, level=1).loc[station_ids]

    index = pd.MultiIndex.from_product([station_ids, grid], names=["station_id", "timestamp"])
    aligned = tidy.set_index(["station_id", "timestamp"]).reindex(index)
    s, t = len(station_ids), len(grid)

    targets = aligned["target"].to_numpy(dtype=np.float64).reshape(s, t)
    feature_cols = [f"f:{c}" for c in schema.feature_columns]
    features = aligned[feature_cols].to_numpy(dtype=np.float64).reshape(s, t, len(feature_cols))
    cat_cols = [f"c:{c}" for c in schema.categorical_columns]
    categorical = (
        aligned[cat_cols].fillna(MISSING_CATEGORY).to_numpy(dtype=np.int64).reshape(s, t, len(cat_cols))
    )

    dataset = StationDataset(
        station_ids=list(station_ids),
        raw_lng=positions["lng"].to_numpy(dtype=np.float64),
        raw_lat=positions["lat"].to_numpy(dtype=np.float64),
        timestamps=grid,
        targets=targets,
        features=features,
        categorical=categorical,
        feature_names=list(schema.feature_columns),
        categorical_names=list(schema.categorical_columns),
        categorical_levels=levels,
        epoch=grid[0],
    )
    logger.info(
        "observations_loaded",
        path=str(path),
        stations=s,
        timesteps=t,
        missing_fraction=float(np.isnan(targets).mean()),
    )
    return dataset


def write_observations(dataset: StationDataset, path: str | Path) -> CsvSchema:
    """Write the dataset as a long-format CSV that load_observations reads back.

    Missing targets are written as empty cells.

    Returns:
        The schema describing the written columns.
    """
    s, t = dataset.n_stations, dataset.n_timesteps
    frame = pd.DataFrame(
        {
            "station_id": np.repeat(dataset.station_ids, t),
            "timestamp": np.tile(dataset.timestamps.strftime("%Y-%m-%dT%H:%M:%S"), s),
            "lng": np.repeat(dataset.raw_lng, t),
            "lat": np.repeat(dataset.raw_lat, t),
            "target": dataset.targets.ravel(),
        }
    )
    for k, name in enumerate(dataset.feature_names):
        frame[name] = dataset.features[:, :, k].ravel()
    for c, name in enumerate(dataset.categorical_names):
        levels = np.array([*dataset.categorical_levels[c], ""], dtype=object)
        frame[name] = levels[dataset.categorical[:, :, c].ravel()]

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, float_format="%.10g")
    logger.info("observations_written", path=str(path), rows=len(frame))
    return CsvSchema(
        feature_columns=list(dataset.feature_names),
        categorical_columns=list(dataset.categorical_names),
    )


def filter_missing(dataset: StationDataset, threshold: float = 0.5) -> StationDataset:
    """Drop every timestep where the missing-target fraction exceeds threshold.

    Args:
        dataset: Observations.
        threshold: Maximum tolerated fraction of stations missing, in (0, 1].

    Returns:
        Dataset restricted to retained timesteps (re-indexed from 0).

    Raises:
        ParameterError: If threshold is out of range.
        NoUsableDataError: If nothing usable remains.
    """
    if not 0.0 < threshold <= 1.0:
        raise ParameterError(f"threshold must be in (0, 1], got {threshold}")

    missing_fraction = np.isnan(dataset.targets).mean(axis=0)
    keep = missing_fraction <= threshold
    if not keep.any() or not np.isfinite(dataset.targets[:, keep]).any():
        raise NoUsableDataError(
            f"no usable data after filtering timesteps at threshold {threshold}"
        )

    dropped = int((~keep).sum())
    logger.info("missing_filter_applied", threshold=threshold, dropped_timesteps=dropped)
    if dropped == 0:
        return dataset
    return dataset.model_copy(
        update={
            "timestamps": dataset.timestamps[keep],
            "targets": dataset.targets[:, keep],
            "features": dataset.features[:, keep],
            "categorical": dataset.categorical[:, keep],
        }
    )


def _robust_stats(values: np.ndarray, name: str, warnings: list[str]) -> tuple[float, float]:
    """Population mean/std ignoring NaN, std clamped at STD_FLOOR."""
    finite = values[np.isfinite(values)]
    if finite.size == 0:
        warnings.append(f"{name}: no finite values in the training range; using mean 0, std 1")
        logger.warning("normalizer_column_empty", column=name)
        return 0.0, 1.0
    mean = float(finite.mean())
    std = float(finite.std())
    if std < STD_FLOOR:
        warnings.append(f"{name}: std {std:.3g} clamped to {STD_FLOOR:g}")
        logger.warning("normalizer_std_clamped", column=name, std=std)
        std = STD_FLOOR
    return mean, std


def fit_normalizer(
    dataset: StationDataset, train_fraction: float = 0.6, time_scale: float = 1.0
) -> Normalizer:
    """Fit z-normalization statistics on the first train_fraction of the timeline.

    Raises:
        ParameterError: If train_fraction or time_scale is out of range.
        NoUsableDataError: If the dataset is empty.
    """
    if not 0.0 < train_fraction <= 1.0:
        raise ParameterError(f"train_fraction must be in (0, 1], got {train_fraction}")
    if not time_scale > 0.0:
        raise ParameterError(f"time_scale must be positive, got {time_scale}")
    if dataset.n_stations == 0 or dataset.n_timesteps == 0:
        raise NoUsableDataError("cannot fit a normalizer on an empty dataset")

    n_train = max(1, int(math.floor(train_fraction * dataset.n_timesteps + 1e-9)))
    warnings: list[str] = []

    lng_mean, lng_std = _robust_stats(dataset.raw_lng, "lng", warnings)
    lat_mean, lat_std = _robust_stats(dataset.raw_lat, "lat", warnings)
    target_mean, target_std = _robust_stats(dataset.targets[:, :n_train], "target", warnings)

    feature_means, feature_stds = [], []
    for k, name in enumerate(dataset.feature_names):
        mean, std = _robust_stats(dataset.features[:, :n_train, k], name, warnings)
        feature_means.append(mean)
        feature_stds.append(std)

    normalizer = Normalizer(
        lng_mean=lng_mean,
        lng_std=lng_std,
        lat_mean=lat_mean,
        lat_std=lat_std,
        feature_means=feature_means,
        feature_stds=feature_stds,
        target_mean=target_mean,
        target_std=target_std,
        time_scale=time_scale,
        warnings=warnings,
    )
    logger.info("normalizer_fitted", train_steps=n_train, warnings=len(warnings))
    return normalizer


class ContextSet(BaseModel):
    """The local spatio-temporal neighborhood of one target coordinate.

    Arrays are row-aligned: source i sits at coords[i] with features[i],
    normalized value values[i], from station station_ids[i] at grid index
    timesteps[i].
    """

    coords: np.ndarray = Field(..., description="(N, 3) source coordinates")
    features: np.ndarray = Field(..., description="(N, F) normalized features X^src")
    values: np.ndarray = Field(..., description="(N,) normalized target values y^src")
    station_ids: list[str]
    timesteps: np.ndarray = Field(..., description="(N,) grid indices")
    target_coord: Coordinate
    target_timestep: int
    target_station_id: str | None = None

    model_config = ConfigDict(arbitrary_types_allowed=True)

    @model_validator(mode="after")
    def validate_sources(self) -> "ContextSet":
        n = self.values.shape[0]
        if n < 1:
            raise ValueError("a context needs at least one source")
        if self.coords.shape != (n, 3) or self.features.shape[0] != n:
            raise ValueError("source arrays are not row-aligned")
        if len(self.station_ids) != n or self.timesteps.shape != (n,):
            raise ValueError("source provenance is not row-aligned")
        if not np.isfinite(self.values).all():
            raise ValueError("source values must be non-missing")
        return self

    @property
    def n_sources(self) -> int:
        return int(self.values.shape[0])

    @property
    def feature_dim(self) -> int:
        return int(self.features.shape[1])

    @property
    def sources(self) -> list[tuple[Coordinate, np.ndarray, float]]:
        """(coord, features, value) per source."""
        return [
            (Coordinate.from_array(self.coords[i]), self.features[i], float(self.values[i]))
            for i in range(self.n_sources)
        ]

    def target_array(self) -> np.ndarray:
        return self.target_coord.as_array()

    def fingerprint(self) -> str:
        """sha256 over every array and identifier of the context."""
        digest = hashlib.sha256()
        for array in (self.coords, self.features, self.values, self.timesteps):
            digest.update(np.ascontiguousarray(array).tobytes())
        digest.update(self.target_array().tobytes())
        digest.update("\x1f".join(self.station_ids).encode())
        digest.update(f"{self.target_timestep}|{self.target_station_id}".encode())
        return digest.hexdigest()


class ContextBuilder:
    """Context construction over one normalized dataset.

    Normalized positions, tau, targets and the one-hot feature tensor are
    computed once, so building many contexts stays cheap.
    """

    def __init__(self, dataset: StationDataset) -> None:
        if dataset.normalizer is None:
            raise ParameterError("dataset has no normalizer; fit one first")
        self.dataset = dataset
        self.normalizer = dataset.normalizer
        x, y = self.normalizer.normalize_xy(dataset.raw_lng, dataset.raw_lat)
        self.xy = np.column_stack([x, y])
        self.tau = self.normalizer.tau(dataset.timestamps, dataset.epoch)
        self.values = self.normalizer.normalize_target(dataset.targets)
        self.valid = np.isfinite(self.values)
        self.features = self._encode_features()
        self._station_index = {sid: i for i, sid in enumerate(dataset.station_ids)}

    def _encode_features(self) -> np.ndarray:
        """Normalized numeric features followed by one-hot categoricals."""
        data = self.dataset
        numeric = np.nan_to_num(self.normalizer.normalize_features(data.features), nan=0.0)
        blocks = [numeric]
        for c, levels in enumerate(data.categorical_levels):
            # extra all-zero row absorbs MISSING_CATEGORY (-1)
            table = np.vstack([np.eye(len(levels)), np.zeros((1, len(levels)))])
            blocks.append(table[data.categorical[:, :, c]])
        return np.concatenate(blocks, axis=-1)

    def index_of(self, station_id: str) -> int:
        return self._station_index[station_id]

    def station_coordinate(self, station_id: str, timestep: int) -> Coordinate:
        """Spacetime coordinate of a station at a grid timestep."""
        s = self._station_index[station_id]
        return Coordinate(
            x=float(self.xy[s, 0]), y=float(self.xy[s, 1]), tau=float(self.tau[timestep])
        )

    def coordinate_at(self, lng: float, lat: float, when: pd.Timestamp) -> tuple[Coordinate, int]:
        """Coordinate of an arbitrary raw point and the latest grid index at or before it.

        Raises:
            ParameterError: If lng or lat is not finite, or when precedes the
                first grid timestamp.
        """
        if not (math.isfinite(lng) and math.isfinite(lat)):
            raise ParameterError(f"coordinates must be finite, got lng={lng} lat={lat}")
        timestep = int(self.dataset.timestamps.searchsorted(when, side="right")) - 1
        if timestep < 0:
            raise ParameterError(f"{when} precedes the first observation")
        x, y = self.normalizer.normalize_xy(lng, lat)
        tau = float(self.normalizer.tau(pd.DatetimeIndex([when]), self.dataset.epoch)[0])
        return Coordinate(x=float(x), y=float(y), tau=tau), timestep

    def targets(
        self, station_ids: Iterable[str], timesteps: Iterable[int], t_hist: int
    ) -> list[tuple[str, int]]:
        """(station, timestep) pairs with a known target and a full history window."""
        steps = [t for t in timesteps if t >= t_hist - 1]
        pairs = []
        for sid in sorted(station_ids):
            s = self._station_index[sid]
            pairs.extend((sid, t) for t in steps if self.valid[s, t])
        return pairs

    def build(
        self,
        target: Coordinate,
        target_timestep: int,
        k_spatial: int,
        t_hist: int,
        exclude: Iterable[str] = frozenset(),
        target_station_id: str | None = None,
    ) -> ContextSet:
        """Select the K nearest usable stations and expand each over T_hist steps.

        Raises:
            ParameterError: On non-positive K/T or a window before the grid start.
            InsufficientContextError: If no usable source remains.
        """
        if k_spatial < 1 or t_hist < 1:
            raise ParameterError("k_spatial and t_hist must be at least 1")
        if not t_hist - 1 <= target_timestep < self.dataset.n_timesteps:
            raise ParameterError(
                f"target_timestep {target_timestep} leaves no full window of {t_hist} steps"
            )

        window = np.arange(target_timestep - t_hist + 1, target_timestep + 1)
        excluded = set(exclude)
        allowed = np.array([sid not in excluded for sid in self.dataset.station_ids])
        candidates = np.flatnonzero(allowed & self.valid[:, window].any(axis=1))
        if candidates.size == 0:
            raise InsufficientContextError(
                f"no usable source around timestep {target_timestep}"
            )

        distance = np.linalg.norm(self.xy[candidates] - [target.x, target.y], axis=1)
        chosen = candidates[np.argsort(distance, kind="stable")][:k_spatial]

        s_idx, t_idx = (a.ravel() for a in np.meshgrid(chosen, window, indexing="ij"))
        usable = self.valid[s_idx, t_idx]
        s_idx, t_idx = s_idx[usable], t_idx[usable]

        return ContextSet(
            coords=np.column_stack([self.xy[s_idx], self.tau[t_idx]]),
            features=self.features[s_idx, t_idx],
            values=self.values[s_idx, t_idx],
            station_ids=[self.dataset.station_ids[s] for s in s_idx],
            timesteps=t_idx.astype(np.int64),
            target_coord=target,
            target_timestep=int(target_timestep),
            target_station_id=target_station_id,
        )


def build_context(
    dataset: StationDataset,
    target: Coordinate,
    target_timestep: int,
    k_spatial: int = 6,
    t_hist: int = 6,
    exclude: Iterable[str] = frozenset(),
    target_station_id: str | None = None,
) -> ContextSet:
    """One-off context construction; see ContextBuilder.build."""
    return ContextBuilder(dataset).build(
        target, target_timestep, k_spatial, t_hist, exclude, target_station_id
    )


def epoch_mask(
    station_ids: Sequence[str], alpha: float, seed: int
) -> tuple[frozenset[str], frozenset[str]]:
    """Partition stations into observed and masked sets.

    Args:
        station_ids: All station identifiers.
        alpha: Mask ratio in (0, 1).
        seed: Seed of the partition.

    Returns:
        (observed, masked), disjoint and covering station_ids, with
        |masked| = round(alpha * |station_ids|).

    Raises:
        ParameterError: If alpha is out of range or leaves either side empty.
    """
    if not 0.0 < alpha < 1.0:
        raise ParameterError(f"mask ratio must be in (0, 1), got {alpha}")
    ids = list(station_ids)
    if len(set(ids)) != len(ids):
        raise ParameterError("station ids must be unique")
    n_masked = int(math.floor(alpha * len(ids) + 0.5))
    if n_masked == 0 or n_masked == len(ids):
        raise ParameterError(
            f"mask ratio {alpha} over {len(ids)} stations leaves no masked or no observed station"
        )
    order = np.random.default_rng(seed).permutation(len(ids))
    masked = frozenset(ids[i] for i in order[:n_masked])
    return frozenset(ids) - masked, masked
