"""Pytest Configuration - Shared fixtures for tests."""

import os

import numpy as np
import pytest

from src.contracts.geodata import Coordinate, GeneratorSpec
from src.core.geodata import (
    ContextSet,
    StationDataset,
    TimeSplit,
    chronological_split,
    fit_normalizer,
)
from src.core.synthetic import generate_synthetic

# Keep test logs quiet unless asked otherwise
os.environ.setdefault("STF_LOG_LEVEL", "warn")


@pytest.fixture
def small_spec() -> GeneratorSpec:
    """A 12-station, two-day synthetic scene."""
    return GeneratorSpec(n_stations=12, hours=48, n_plumes=2, seed=3)


@pytest.fixture
def small_scene(small_spec: GeneratorSpec):
    """(dataset, field) generated from small_spec."""
    return generate_synthetic(small_spec)


@pytest.fixture
def normalized_dataset(small_scene) -> StationDataset:
    """small_scene's dataset carrying a normalizer fitted on the first 60%."""
    dataset, _ = small_scene
    return dataset.with_normalizer(fit_normalizer(dataset))


@pytest.fixture
def small_split(normalized_dataset: StationDataset) -> TimeSplit:
    return chronological_split(normalized_dataset.n_timesteps)


@pytest.fixture
def two_station_context() -> ContextSet:
    """Two stations at distance 1 from the target, constant values 0 and 10."""
    return ContextSet(
        coords=np.array(
            [[1.0, 0.0, 0.0], [1.0, 0.0, 1.0], [-1.0, 0.0, 0.0], [-1.0, 0.0, 1.0]]
        ),
        features=np.zeros((4, 0)),
        values=np.array([0.0, 0.0, 10.0, 10.0]),
        station_ids=["A", "A", "B", "B"],
        timesteps=np.array([0, 1, 0, 1]),
        target_coord=Coordinate(x=0.0, y=0.0, tau=1.0),
        target_timestep=1,
    )


@pytest.fixture
def experiment_document(tmp_path) -> dict:
    """A tiny synthetic experiment that trains in seconds."""
    return {
        "data": {"synthetic": {"n_stations": 16, "hours": 72, "n_plumes": 2}},
        "model": {"hidden_dim": 8, "n_layers": 1, "m_steps": 2},
        "train": {
            "epochs": 2,
            "batch_size": 16,
            "k_spatial": 3,
            "t_hist": 2,
            "max_samples_per_epoch": 48,
            "max_val_samples": 24,
        },
        "eval": {"ratios": [0.25, 0.5], "max_samples_per_ratio": 24},
        "diagnostics": {"n_samples": 16, "gradient_check_samples": 16},
        "output_dir": str(tmp_path / "run"),
        "seed": 5,
    }
