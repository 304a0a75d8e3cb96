"""Checkpoints - Model weights plus everything needed to rebuild the model."""

from dataclasses import dataclass
from pathlib import Path

import torch

from src.config.experiment import ModelConfig
from src.core.field_model import FieldModel
from src.core.geodata import Normalizer
from src.utils.errors import CheckpointError
from src.utils.logger import get_logger

logger = get_logger(__name__)

CHECKPOINT_FORMAT = "stfnn-ckpt-v1"


@dataclass(frozen=True)
class LoadedCheckpoint:
    model: FieldModel
    normalizer: Normalizer | None
    seed: int | None
    epoch: int | None


def save_checkpoint(
    path: str | Path,
    model: FieldModel,
    normalizer: Normalizer | None,
    seed: int | None = None,
    epoch: int | None = None,
) -> Path:
    """Write a checkpoint; parent directories are created."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {
        "format": CHECKPOINT_FORMAT,
        "model_config": model.config.model_dump(mode="json"),
        "state_dict": model.state_dict(),
        "normalizer": normalizer.model_dump(mode="json") if normalizer else None,
        "seed": seed,
        "epoch": epoch,
    }
    torch.save(payload, path)
    logger.debug("checkpoint_saved", path=str(path), epoch=epoch)
    return path


def load_checkpoint(path: str | Path) -> LoadedCheckpoint:
    """Rebuild a model (in eval mode) from a checkpoint file.

    Raises:
        CheckpointError: If the file is missing, unreadable or of another format.
    """
    path = Path(path)
    if not path.exists():
        raise CheckpointError(f"checkpoint not found: {path}")
    try:
        payload = torch.load(path, map_location="cpu", weights_only=True)
    except Exception as e:
        raise CheckpointError(f"cannot read checkpoint {path}: {e}") from e
    if not isinstance(payload, dict) or payload.get("format") != CHECKPOINT_FORMAT:
        raise CheckpointError(f"{path} is not a {CHECKPOINT_FORMAT} checkpoint")

    try:
        config = ModelConfig.model_validate(payload["model_config"])
        model = FieldModel(config)
        state = payload["state_dict"]
        dtype = state["w_g.weight"].dtype
        model.to(dtype)
        model.load_state_dict(state)
        normalizer = (
            Normalizer.model_validate(payload["normalizer"]) if payload["normalizer"] else None
        )
    except (KeyError, RuntimeError, ValueError) as e:
        raise CheckpointError(f"checkpoint {path} is inconsistent: {e}") from e

    model.eval()
    logger.debug("checkpoint_loaded", path=str(path), epoch=payload.get("epoch"))
    return LoadedCheckpoint(
        model=model, normalizer=normalizer, seed=payload.get("seed"), epoch=payload.get("epoch")
    )
