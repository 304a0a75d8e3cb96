"""Unit Tests - Metrics and the mask-ratio sweep."""

import json

import numpy as np
import pytest

from src.config.experiment import BaselineConfig
from src.core.checks import tiny_model
from src.core.evalsuite import (
    PUBLISHED_REFERENCE,
    baseline_predictors,
    format_table,
    mask_sweep,
    metrics,
    model_predictor,
    with_aggregation,
    write_sweep,
)
from src.core.geodata import ContextBuilder, StationDataset, TimeSplit
from src.utils.errors import ParameterError, ShapeError


def _oracle(dataset: StationDataset):
    builder = ContextBuilder(dataset)

    def predict(contexts):
        return np.array(
            [builder.values[builder.index_of(c.target_station_id), c.target_timestep] for c in contexts]
        )

    return predict


class TestMetrics:
    """Tests for MAE, RMSE and MAPE."""

    def test_worked_example(self) -> None:
        """Test the three metrics on a hand-computed example."""
        result = metrics([1.0, 2.0, 4.0], [2.0, 2.0, 2.0])

        assert result.mae == pytest.approx(1.0)
        assert result.rmse == pytest.approx(np.sqrt(5.0 / 3.0))
        assert result.mape == pytest.approx(0.5)
        assert result.n == 3

    def test_perfect_predictions(self) -> None:
        """Test that identical arrays score zero everywhere."""
        result = metrics([5.0, 7.0], [5.0, 7.0])

        assert result.mae == result.rmse == result.mape == 0.0

    def test_zero_truths_left_out_of_mape(self) -> None:
        """Test that truths at zero are excluded from MAPE only."""
        result = metrics([1.0, 3.0], [0.0, 2.0])

        assert result.mape == pytest.approx(0.5)
        assert result.mape_excluded == 1
        assert result.mae == pytest.approx(1.0)

    def test_all_zero_truths(self) -> None:
        """Test that MAPE is absent when every truth is zero."""
        assert metrics([1.0], [0.0]).mape is None

    def test_rmse_at_least_mae(self) -> None:
        """Test RMSE >= MAE on random data."""
        rng = np.random.default_rng(0)
        result = metrics(rng.normal(size=50), rng.normal(size=50))

        assert result.rmse >= result.mae

    def test_invalid_input(self) -> None:
        """Test that length mismatch and empty input are rejected."""
        with pytest.raises(ShapeError):
            metrics([1.0, 2.0], [1.0])
        with pytest.raises(ParameterError):
            metrics([], [])


class TestMaskSweep:
    """Tests for the sweep over mask ratios."""

    def test_oracle_scores_zero(self, normalized_dataset: StationDataset, small_split: TimeSplit) -> None:
        """Test that the truth itself scores zero in every cell."""
        outcome = mask_sweep(
            normalized_dataset,
            {"oracle": _oracle(normalized_dataset)},
            [0.25, 0.5],
            seed=1,
            split=small_split,
            k_spatial=3,
            t_hist=2,
        )

        for ratio in (0.25, 0.5):
            cell = outcome.report.get("oracle", ratio)
            assert cell.mae == pytest.approx(0.0, abs=1e-9)
            assert cell.rmse == pytest.approx(0.0, abs=1e-9)

    def test_report_has_every_cell(self, normalized_dataset: StationDataset, small_split: TimeSplit) -> None:
        """Test that three predictors and two ratios yield six cells and shared fingerprints."""
        predictors = baseline_predictors(BaselineConfig())

        outcome = mask_sweep(
            normalized_dataset, predictors, [0.25, 0.5], seed=2, split=small_split, k_spatial=3, t_hist=2
        )

        assert len(outcome.report.cells) == 6
        assert set(outcome.report.context_fingerprints) == {"0.25", "0.5"}
        assert outcome.report.reference == [PUBLISHED_REFERENCE]
        assert set(outcome.predictions["model"]) == {"knn", "idw_ses", "mean"}

    def test_every_predictor_sees_the_same_contexts(
        self, normalized_dataset: StationDataset, small_split: TimeSplit
    ) -> None:
        """Test that each predictor receives identical context lists per ratio."""
        seen: dict[str, list[list[str]]] = {"a": [], "b": []}

        def recorder(name):
            def predict(contexts):
                seen[name].append([c.fingerprint() for c in contexts])
                return np.zeros(len(contexts))

            return predict

        mask_sweep(
            normalized_dataset,
            {"a": recorder("a"), "b": recorder("b")},
            [0.25, 0.5],
            seed=3,
            split=small_split,
            k_spatial=3,
            t_hist=2,
        )

        assert len(seen["a"]) == 2
        assert seen["a"] == seen["b"]

    def test_masked_targets_only(self, normalized_dataset: StationDataset, small_split: TimeSplit) -> None:
        """Test that targets lie in the test range and never appear among their sources."""
        contexts = []

        def capture(batch):
            contexts.extend(batch)
            return np.zeros(len(batch))

        mask_sweep(
            normalized_dataset, {"c": capture}, [0.5], seed=4, split=small_split, k_spatial=3, t_hist=2
        )

        assert contexts
        for context in contexts:
            assert context.target_timestep in small_split.test
            assert context.target_station_id not in context.station_ids

    def test_bad_ratio_fails_before_evaluation(
        self, normalized_dataset: StationDataset, small_split: TimeSplit
    ) -> None:
        """Test that a ratio masking every station raises before any predictor runs."""
        calls = []

        with pytest.raises(ParameterError):
            mask_sweep(
                normalized_dataset,
                {"spy": lambda cs: calls.append(len(cs)) or np.zeros(len(cs))},
                [0.25, 0.99],
                seed=0,
                split=small_split,
            )

        assert calls == []

    def test_sample_cap(self, normalized_dataset: StationDataset, small_split: TimeSplit) -> None:
        """Test that max_samples_per_ratio bounds the number of scored targets."""
        outcome = mask_sweep(
            normalized_dataset,
            {"mean": baseline_predictors(BaselineConfig())["mean"]},
            [0.5],
            seed=5,
            split=small_split,
            k_spatial=3,
            t_hist=2,
            max_samples_per_ratio=4,
        )

        assert outcome.report.get("mean", 0.5).n <= 4

    def test_untrained_model_matches_mean(
        self, normalized_dataset: StationDataset, small_split: TimeSplit
    ) -> None:
        """Test that the zero-initialized model scores like the mean baseline."""
        model = tiny_model(0, feature_dim=normalized_dataset.feature_dim)
        predictors = {
            "stfnn": model_predictor(model),
            "mean": baseline_predictors(BaselineConfig())["mean"],
        }

        report = mask_sweep(
            normalized_dataset, predictors, [0.5], seed=6, split=small_split, k_spatial=3, t_hist=2
        ).report

        assert report.get("stfnn", 0.5).mae == pytest.approx(report.get("mean", 0.5).mae, rel=1e-9)


class TestReportOutput:
    """Tests for tables and files."""

    def test_same_seed_same_bytes(
        self, normalized_dataset: StationDataset, small_split: TimeSplit, tmp_path
    ) -> None:
        """Test that two sweeps with one seed write identical reports."""
        predictors = baseline_predictors(BaselineConfig())
        for name in ("first", "second"):
            outcome = mask_sweep(
                normalized_dataset, predictors, [0.25, 0.5], seed=7, split=small_split, k_spatial=3, t_hist=2
            )
            write_sweep(outcome, tmp_path / name, write_predictions=True)

        for filename in ("sweep_report.json", "sweep_report.txt", "predictions.csv"):
            assert (tmp_path / "first" / filename).read_bytes() == (tmp_path / "second" / filename).read_bytes()
        report = json.loads((tmp_path / "first" / "sweep_report.json").read_text())
        assert report["seed"] == 7

    def test_table_layout(self, normalized_dataset: StationDataset, small_split: TimeSplit) -> None:
        """Test that the table has a row per model plus the marked reference."""
        outcome = mask_sweep(
            normalized_dataset,
            baseline_predictors(BaselineConfig()),
            [0.25, 0.5],
            seed=8,
            split=small_split,
            k_spatial=3,
            t_hist=2,
        )

        table = format_table(outcome.report)

        lines = table.splitlines()
        assert lines[0].split()[:4] == ["model", "MAE@25%", "RMSE@25%", "MAPE@25%"]
        assert any(line.startswith("knn") for line in lines)
        assert "11.14" in table
        assert "not reproducible" in table


class TestWithAggregation:
    """Tests for swapping the aggregation mode."""

    def test_same_weights_new_mode(self) -> None:
        """Test that the swapped model shares parameters but aggregates statically."""
        model = tiny_model(0)

        swapped = with_aggregation(model, "idw_ses")

        assert swapped.config.aggregation == "idw_ses"
        assert with_aggregation(model, "learned") is model
        for a, b in zip(model.parameters(), swapped.parameters(), strict=True):
            assert (a == b).all()
