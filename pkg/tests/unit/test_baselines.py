"""Unit Tests - Baseline predictors."""

import numpy as np
import pytest

from src.contracts.geodata import Coordinate
from src.core.baselines import idw_ses_infer, idw_ses_weights, knn_infer, mean_infer
from src.core.checks import random_context
from src.core.geodata import ContextSet
from src.utils.errors import ParameterError


class TestMeanInfer:
    """Tests for the unweighted mean."""

    def test_symmetric_stations(self, two_station_context: ContextSet) -> None:
        """Test that two stations reading 0 and 10 average to 5."""
        assert mean_infer(two_station_context) == pytest.approx(5.0)


class TestKnnInfer:
    """Tests for k-nearest neighbors in spacetime."""

    def test_two_nearest(self, two_station_context: ContextSet) -> None:
        """Test that k=2 picks one reading from each station."""
        assert knn_infer(two_station_context, k=2) == pytest.approx(5.0)

    def test_tie_broken_by_order(self, two_station_context: ContextSet) -> None:
        """Test that k=1 with equidistant sources picks the earlier one."""
        assert knn_infer(two_station_context, k=1) == 0.0

    def test_large_k_is_mean(self) -> None:
        """Test that k >= N falls back to the mean."""
        context = random_context(np.random.default_rng(0), 4)

        assert knn_infer(context, k=10) == pytest.approx(mean_infer(context))

    def test_zero_k_rejected(self, two_station_context: ContextSet) -> None:
        """Test that k=0 is a parameter error."""
        with pytest.raises(ParameterError):
            knn_infer(two_station_context, k=0)


class TestIdwSes:
    """Tests for inverse distance weighting with exponential smoothing."""

    def test_symmetric_stations(self, two_station_context: ContextSet) -> None:
        """Test that equidistant stations share the weight evenly."""
        assert idw_ses_infer(two_station_context) == pytest.approx(5.0)

    def test_weights_form_a_simplex(self) -> None:
        """Test nonnegative weights summing to one on random contexts."""
        rng = np.random.default_rng(1)
        for _ in range(20):
            weights = idw_ses_weights(random_context(rng, int(rng.integers(1, 10))))

            assert (weights >= 0).all()
            assert weights.sum() == pytest.approx(1.0)

    def test_recent_readings_weigh_more(self, two_station_context: ContextSet) -> None:
        """Test that within a station the newest reading gets 1/(1 + (1 - alpha))."""
        weights = idw_ses_weights(two_station_context, alpha=0.3)

        assert weights[1] == pytest.approx(0.5 / 1.7)
        assert weights[0] == pytest.approx(0.5 * 0.7 / 1.7)

    def test_closer_station_dominates(self) -> None:
        """Test that the d^-2 weights favor the nearer station 4:1."""
        context = ContextSet(
            coords=np.array([[1.0, 0.0, 0.0], [-2.0, 0.0, 0.0]]),
            features=np.zeros((2, 0)),
            values=np.array([10.0, 0.0]),
            station_ids=["near", "far"],
            timesteps=np.array([0, 0]),
            target_coord=Coordinate(x=0.0, y=0.0, tau=0.0),
            target_timestep=0,
        )

        assert idw_ses_infer(context) == pytest.approx(8.0)

    def test_exact_hit_takes_all_weight(self) -> None:
        """Test that a station at the target location returns its own reading."""
        context = ContextSet(
            coords=np.array([[0.0, 0.0, 0.0], [1.0, 1.0, 0.0]]),
            features=np.zeros((2, 0)),
            values=np.array([3.0, 9.0]),
            station_ids=["here", "there"],
            timesteps=np.array([0, 0]),
            target_coord=Coordinate(x=0.0, y=0.0, tau=0.0),
            target_timestep=0,
        )

        assert idw_ses_infer(context) == pytest.approx(3.0)

    @pytest.mark.parametrize("power,alpha", [(0.0, 0.3), (2.0, 0.0), (2.0, 1.5)])
    def test_invalid_parameters(self, two_station_context: ContextSet, power: float, alpha: float) -> None:
        """Test that non-positive power and alpha outside (0, 1] are rejected."""
        with pytest.raises(ParameterError):
            idw_ses_weights(two_station_context, power, alpha)
