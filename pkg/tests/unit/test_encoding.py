"""Unit Tests - Spatio-temporal encoding."""

import math

import numpy as np
import pytest
import torch

from src.core.encoding import CODE_DIM, PeriodSet, STCode, encode, encode_code, temporal_code
from src.utils.errors import NumericError


class TestTemporalCode:
    """Tests for the sinusoidal time code."""

    def test_zero_time(self) -> None:
        """Test that t=0 gives sin 0 / cos 1 for every period."""
        code = temporal_code(0.0).numpy()

        np.testing.assert_array_equal(code, [0, 1, 0, 1, 0, 1, 0, 1])

    def test_one_day(self) -> None:
        """Test that t = one day returns the day pair to its start, other pairs at partial phase."""
        code = temporal_code(1.0).numpy()

        np.testing.assert_allclose(code[:2], [0.0, 1.0], atol=1e-12)
        np.testing.assert_allclose(
            code[2:4], [math.sin(2 * math.pi / 7), math.cos(2 * math.pi / 7)], atol=1e-12
        )

    def test_year_periodicity(self) -> None:
        """Test that t and t + 365a share the year pair."""
        periods = PeriodSet(scale=2.0)
        t = np.linspace(-50, 50, 11)

        a = temporal_code(t, periods).numpy()[:, 6:]
        b = temporal_code(t + 365 * 2.0, periods).numpy()[:, 6:]

        np.testing.assert_allclose(a, b, atol=1e-9)

    def test_bounded(self) -> None:
        """Test that every component lies in [-1, 1]."""
        code = temporal_code(np.random.default_rng(0).uniform(-1e4, 1e4, size=100)).numpy()

        assert np.abs(code).max() <= 1.0


class TestEncode:
    """Tests for the 10-dim code."""

    def test_spatial_pass_through(self) -> None:
        """Test that the first two components are copied exactly."""
        v = np.array([[1.25, -3.5, 0.1], [1e6, -1e-6, 40.0]])

        code = encode(v).numpy()

        assert code.shape == (2, CODE_DIM)
        np.testing.assert_array_equal(code[:, :2], v[:, :2])

    def test_differentiable(self) -> None:
        """Test that gradients flow through the encoder."""
        v = torch.tensor([0.3, 0.2, 0.5], dtype=torch.float64, requires_grad=True)

        encode(v).sum().backward()

        assert v.grad is not None
        assert v.grad[0] == 1.0

    def test_non_finite_rejected(self) -> None:
        """Test that NaN input raises NumericError."""
        with pytest.raises(NumericError):
            encode([0.0, float("nan"), 1.0])

    def test_wrong_width_rejected(self) -> None:
        """Test that a 2-vector is rejected."""
        with pytest.raises(NumericError):
            encode([0.0, 1.0])

    def test_st_code_split(self) -> None:
        """Test that encode_code splits spatial and temporal parts."""
        code = encode_code([2.0, 3.0, 0.0])

        assert isinstance(code, STCode)
        assert code.p_s == (2.0, 3.0)
        assert code.p_t == (0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0)
        assert len(code.p) == CODE_DIM
