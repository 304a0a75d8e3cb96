"""Unit Tests - Geodata (ingestion, normalization, masking, contexts)."""

import numpy as np
import pandas as pd
import pytest

from src.contracts.geodata import Coordinate, CsvSchema
from src.core.geodata import (
    STD_FLOOR,
    ContextBuilder,
    StationDataset,
    build_context,
    chronological_split,
    epoch_mask,
    filter_missing,
    fit_normalizer,
    load_observations,
    write_observations,
)
from src.utils.errors import (
    InsufficientContextError,
    NoUsableDataError,
    ParameterError,
    ParseError,
    SchemaError,
)

CSV = """station_id,timestamp,lng,lat,target,temp,wind
A,2024-01-01T00:00:00,116.0,39.0,10,1.0,N
A,2024-01-01T01:00:00,116.0,39.0,12,2.0,S
B,2024-01-01T00:00:00,117.0,40.0,,3.0,
B,2024-01-01T01:00:00,117.0,40.0,20,NaN,N
"""

SCHEMA = CsvSchema(feature_columns=["temp"], categorical_columns=["wind"])


def _write(tmp_path, text: str):
    path = tmp_path / "obs.csv"
    path.write_text(text, encoding="utf-8")
    return path


def _dataset(targets: np.ndarray) -> StationDataset:
    s, t = targets.shape
    return StationDataset(
        station_ids=[f"S{i}" for i in range(s)],
        raw_lng=np.arange(s, dtype=np.float64),
        raw_lat=np.zeros(s),
        timestamps=pd.date_range("2024-01-01", periods=t, freq="h"),
        targets=targets,
        features=np.zeros((s, t, 0)),
        categorical=np.zeros((s, t, 0), dtype=np.int64),
        epoch=pd.Timestamp("2024-01-01"),
    )


class TestLoadObservations:
    """Tests for CSV ingestion."""

    def test_aligns_rows_on_hourly_grid(self, tmp_path) -> None:
        """Test that readings land on a (station, timestep) grid with gaps as NaN."""
        dataset = load_observations(_write(tmp_path, CSV), SCHEMA)

        assert dataset.station_ids == ["A", "B"]
        assert dataset.n_timesteps == 2
        np.testing.assert_array_equal(dataset.targets[0], [10.0, 12.0])
        assert np.isnan(dataset.targets[1, 0])
        assert dataset.targets[1, 1] == 20.0

    def test_missing_tokens_become_nan(self, tmp_path) -> None:
        """Test that a 'NaN' feature cell is missing rather than a parse error."""
        dataset = load_observations(_write(tmp_path, CSV), SCHEMA)

        assert np.isnan(dataset.features[1, 1, 0])
        assert dataset.features[0, 1, 0] == 2.0

    def test_categorical_levels_sorted_with_missing_marker(self, tmp_path) -> None:
        """Test that categories map to sorted level indices and blanks to -1."""
        dataset = load_observations(_write(tmp_path, CSV), SCHEMA)

        assert dataset.categorical_levels == [["N", "S"]]
        assert dataset.categorical[0, :, 0].tolist() == [0, 1]
        assert dataset.categorical[1, 0, 0] == -1
        assert dataset.feature_dim == 3

    def test_unparseable_number_names_line(self, tmp_path) -> None:
        """Test that a malformed longitude reports its file line."""
        bad = CSV.replace("A,2024-01-01T01:00:00,116.0", "A,2024-01-01T01:00:00,abc")

        with pytest.raises(ParseError) as exc_info:
            load_observations(_write(tmp_path, bad), SCHEMA)

        assert exc_info.value.line == 3
        assert "line 3" in str(exc_info.value)

    def test_negative_target_rejected(self, tmp_path) -> None:
        """Test that negative concentrations are parse errors."""
        bad = CSV.replace(",10,1.0,N", ",-10,1.0,N")

        with pytest.raises(ParseError):
            load_observations(_write(tmp_path, bad), SCHEMA)

    def test_duplicate_reading_rejected(self, tmp_path) -> None:
        """Test that two readings for one (station, timestamp) are a schema error."""
        text = CSV + "A,2024-01-01T00:00:00,116.0,39.0,11,1.0,N\n"

        with pytest.raises(SchemaError) as exc_info:
            load_observations(_write(tmp_path, text), SCHEMA)

        assert "duplicate" in str(exc_info.value)

    def test_non_uniform_grid_rejected(self, tmp_path) -> None:
        """Test that a two-hour gap in the global grid is a schema error."""
        text = CSV.replace("01:00:00", "02:00:00")

        with pytest.raises(SchemaError):
            load_observations(_write(tmp_path, text), SCHEMA)

    def test_missing_column_rejected(self, tmp_path) -> None:
        """Test that a schema column absent from the header is reported."""
        with pytest.raises(SchemaError) as exc_info:
            load_observations(_write(tmp_path, CSV), CsvSchema(feature_columns=["humidity"]))

        assert "humidity" in str(exc_info.value)

    def test_mixed_utc_offsets_are_aligned(self, tmp_path) -> None:
        """Test that readings with different offsets land on one UTC grid."""
        text = (
            "station_id,timestamp,lng,lat,target\n"
            "A,2024-01-01T00:00+00:00,116.0,39.0,10\n"
            "A,2024-01-01T02:00+01:00,116.0,39.0,12\n"
            "B,2024-01-01T08:00+08:00,117.0,40.0,20\n"
            "B,2024-01-01T01:00+00:00,117.0,40.0,22\n"
        )

        dataset = load_observations(_write(tmp_path, text))

        assert dataset.timestamps.tz is None
        assert list(dataset.timestamps) == [
            pd.Timestamp("2024-01-01T00:00"),
            pd.Timestamp("2024-01-01T01:00"),
        ]
        np.testing.assert_array_equal(dataset.targets, [[10.0, 12.0], [20.0, 22.0]])

    def test_non_utf8_bytes_are_parse_error(self, tmp_path) -> None:
        """Test that an undecodable file raises ParseError."""
        path = tmp_path / "obs.csv"
        path.write_bytes(CSV.encode("utf-8") + b"C,2024-01-01T00:00:00,1\xff.0,39.0,1,1.0,N\n")

        with pytest.raises(ParseError) as exc_info:
            load_observations(path, SCHEMA)

        assert "UTF-8" in str(exc_info.value)

    def test_empty_file_has_no_usable_data(self, tmp_path) -> None:
        """Test that a zero-byte file raises NoUsableDataError."""
        with pytest.raises(NoUsableDataError):
            load_observations(_write(tmp_path, ""))

    def test_missing_file(self, tmp_path) -> None:
        """Test that a missing path raises FileNotFoundError."""
        with pytest.raises(FileNotFoundError):
            load_observations(tmp_path / "absent.csv")

    def test_written_observations_load_back(self, small_scene, tmp_path) -> None:
        """Test that write_observations produces a CSV load_observations accepts."""
        dataset, _ = small_scene
        schema = write_observations(dataset, tmp_path / "dataset.csv")

        loaded = load_observations(tmp_path / "dataset.csv", schema)

        assert loaded.station_ids == dataset.station_ids
        assert loaded.feature_names == dataset.feature_names
        np.testing.assert_allclose(loaded.targets, dataset.targets, rtol=1e-9)


class TestFilterMissing:
    """Tests for the missing-data filter."""

    def test_drops_timesteps_over_threshold(self) -> None:
        """Test that a timestep with 3 of 4 stations missing is dropped at 0.5."""
        targets = np.array(
            [[1.0, np.nan, 1.0], [1.0, np.nan, 1.0], [1.0, np.nan, np.nan], [1.0, 2.0, 1.0]]
        )

        filtered = filter_missing(_dataset(targets), threshold=0.5)

        assert filtered.n_timesteps == 2
        assert np.isnan(filtered.targets).sum() == 1

    def test_keeps_timestep_at_threshold(self) -> None:
        """Test that exactly half the stations missing survives a 0.5 threshold."""
        targets = np.array([[1.0, np.nan], [1.0, np.nan], [1.0, 3.0], [1.0, 4.0]])

        filtered = filter_missing(_dataset(targets), threshold=0.5)

        assert filtered.n_timesteps == 2
        np.testing.assert_array_equal(np.isnan(filtered.targets).sum(axis=0), [0, 2])

    def test_everything_missing_raises(self) -> None:
        """Test that an all-missing dataset has no usable data."""
        with pytest.raises(NoUsableDataError):
            filter_missing(_dataset(np.full((3, 4), np.nan)))

    def test_threshold_range(self) -> None:
        """Test that a threshold of 0 is rejected."""
        with pytest.raises(ParameterError):
            filter_missing(_dataset(np.ones((2, 2))), threshold=0.0)


class TestNormalizer:
    """Tests for fit_normalizer."""

    def test_statistics_use_training_range_only(self) -> None:
        """Test that target stats ignore timesteps after the training fraction."""
        targets = np.tile(np.array([1.0, 3.0, 1.0, 3.0, 100.0]), (2, 1))

        normalizer = fit_normalizer(_dataset(targets), train_fraction=0.8)

        assert normalizer.target_mean == pytest.approx(2.0)
        assert normalizer.target_std == pytest.approx(1.0)

    def test_constant_column_is_clamped_and_recorded(self) -> None:
        """Test that zero variance is clamped to STD_FLOOR with a warning."""
        normalizer = fit_normalizer(_dataset(np.full((3, 4), 5.0)))

        assert normalizer.target_std == STD_FLOOR
        assert any("target" in w for w in normalizer.warnings)

    def test_round_trip_of_every_field(self) -> None:
        """Test that denormalize inverts normalize for target, xy and features."""
        rng = np.random.default_rng(4)
        dataset = _dataset(np.arange(12.0).reshape(3, 4)).model_copy(
            update={
                "raw_lat": np.array([30.0, 31.5, 29.0]),
                "features": rng.normal(5.0, 2.0, size=(3, 4, 2)),
                "feature_names": ["temp", "humidity"],
            }
        )
        normalizer = fit_normalizer(dataset)
        values = np.array([0.5, 7.0, 11.0])
        lng, lat = np.array([0.0, 1.7, -3.0]), np.array([29.5, 30.0, 33.0])
        features = rng.normal(size=(5, 2)) * 10.0

        np.testing.assert_allclose(
            normalizer.denormalize_target(normalizer.normalize_target(values)), values
        )
        back_lng, back_lat = normalizer.denormalize_xy(*normalizer.normalize_xy(lng, lat))
        np.testing.assert_allclose(back_lng, lng, atol=1e-12)
        np.testing.assert_allclose(back_lat, lat, atol=1e-12)
        np.testing.assert_allclose(
            normalizer.denormalize_features(normalizer.normalize_features(features)), features
        )

    def test_two_station_longitudes(self) -> None:
        """Test that longitudes 110 and 120 give mean 115 and std 5."""
        dataset = _dataset(np.ones((2, 3))).model_copy(
            update={"raw_lng": np.array([110.0, 120.0])}
        )

        normalizer = fit_normalizer(dataset)

        assert normalizer.lng_mean == 115.0
        assert normalizer.lng_std == 5.0
        x, _ = normalizer.normalize_xy([110.0, 120.0], [0.0, 0.0])
        np.testing.assert_allclose(x, [-1.0, 1.0])


class TestChronologicalSplit:
    """Tests for the train/val/test split."""

    def test_sixty_twenty_ten(self) -> None:
        """Test that 100 steps split at 60/80/90 with 10 held out."""
        split = chronological_split(100)

        assert split.train == range(0, 60)
        assert split.val == range(60, 80)
        assert split.test == range(80, 90)
        assert len(split.holdout) == 10

    def test_too_short_timeline(self) -> None:
        """Test that an empty split is an error."""
        with pytest.raises(ParameterError):
            chronological_split(3)


class TestEpochMask:
    """Tests for station masking."""

    def test_partition_sizes(self) -> None:
        """Test that 25% of 100 stations are masked and the sets partition the ids."""
        ids = [f"S{i}" for i in range(100)]

        observed, masked = epoch_mask(ids, 0.25, seed=1)

        assert len(masked) == 25
        assert observed.isdisjoint(masked)
        assert observed | masked == set(ids)

    def test_deterministic_per_seed(self) -> None:
        """Test that the same seed gives the same mask and another seed differs."""
        ids = [f"S{i}" for i in range(50)]

        assert epoch_mask(ids, 0.5, 7) == epoch_mask(ids, 0.5, 7)
        assert epoch_mask(ids, 0.5, 7) != epoch_mask(ids, 0.5, 8)

    def test_rounding_half_up(self) -> None:
        """Test that 0.5 of 3 stations masks 2."""
        _, masked = epoch_mask(["a", "b", "c"], 0.5, seed=0)

        assert len(masked) == 2

    def test_degenerate_ratio_rejected(self) -> None:
        """Test that a ratio leaving no observed station is rejected."""
        with pytest.raises(ParameterError):
            epoch_mask(["a", "b"], 0.9, seed=0)


class TestContextBuilder:
    """Tests for context construction."""

    def test_selects_nearest_stations_over_window(self, normalized_dataset) -> None:
        """Test that sources come from the K nearest stations and the last T_hist steps."""
        builder = ContextBuilder(normalized_dataset)
        target = builder.station_coordinate("S000", 10)

        context = builder.build(target, 10, k_spatial=3, t_hist=2, exclude={"S000"})

        distance = np.linalg.norm(builder.xy - builder.xy[0], axis=1)
        distance[0] = np.inf
        nearest = {normalized_dataset.station_ids[i] for i in np.argsort(distance)[:3]}
        assert set(context.station_ids) == nearest
        assert set(context.timesteps.tolist()) == {9, 10}
        assert context.n_sources == 6

    def test_excluded_station_never_appears(self, normalized_dataset) -> None:
        """Test that masked stations are never sources."""
        excluded = set(normalized_dataset.station_ids[:6])
        target = Coordinate(x=0.0, y=0.0, tau=0.5)

        context = build_context(normalized_dataset, target, 12, 4, 3, exclude=excluded)

        assert excluded.isdisjoint(context.station_ids)

    def test_source_coordinates_and_values(self, normalized_dataset) -> None:
        """Test that each source row carries its station position, tau and normalized value."""
        builder = ContextBuilder(normalized_dataset)
        context = builder.build(Coordinate(x=0.0, y=0.0, tau=0.0), 5, 2, 1)

        for row, (sid, t) in enumerate(zip(context.station_ids, context.timesteps, strict=True)):
            s = builder.index_of(sid)
            np.testing.assert_allclose(context.coords[row], [*builder.xy[s], builder.tau[t]])
            assert context.values[row] == pytest.approx(builder.values[s, t])

    def test_all_excluded_is_insufficient(self, normalized_dataset) -> None:
        """Test that excluding every station raises InsufficientContextError."""
        with pytest.raises(InsufficientContextError):
            build_context(
                normalized_dataset,
                Coordinate(x=0.0, y=0.0, tau=0.0),
                5,
                exclude=set(normalized_dataset.station_ids),
            )

    def test_window_before_start_rejected(self, normalized_dataset) -> None:
        """Test that a window reaching before the first timestep is rejected."""
        with pytest.raises(ParameterError):
            build_context(normalized_dataset, Coordinate(x=0.0, y=0.0, tau=0.0), 1, t_hist=3)

    def test_coordinate_at_picks_latest_grid_step(self, normalized_dataset) -> None:
        """Test that a time between grid points maps to the earlier timestep."""
        builder = ContextBuilder(normalized_dataset)
        when = normalized_dataset.timestamps[4] + pd.Timedelta(minutes=30)

        coord, timestep = builder.coordinate_at(115.0, 35.0, when)

        assert timestep == 4
        assert coord.tau == pytest.approx((4.5 / 24.0) / builder.normalizer.time_scale)

    def test_coordinate_at_rejects_non_finite_position(self, normalized_dataset) -> None:
        """Test that a NaN longitude is a parameter error, not a validation crash."""
        builder = ContextBuilder(normalized_dataset)

        with pytest.raises(ParameterError):
            builder.coordinate_at(float("nan"), 35.0, normalized_dataset.timestamps[4])

    def test_fingerprint_is_stable(self, normalized_dataset) -> None:
        """Test that rebuilding a context reproduces its fingerprint."""
        builder = ContextBuilder(normalized_dataset)
        target = builder.station_coordinate("S001", 20)

        first = builder.build(target, 20, 4, 3, exclude={"S001"})
        second = builder.build(target, 20, 4, 3, exclude={"S001"})

        assert first.fingerprint() == second.fingerprint()
