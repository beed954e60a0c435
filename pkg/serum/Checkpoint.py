"""
Desc: Saving and restoring model parameters together with the config, vocabulary and optimizer state.
"""

# Core libraries
import logging
import os
from dataclasses import dataclass
from typing import Optional

# External libraries
import torch

# Custom libraries
from serum.Errors import CheckpointError
from serum.ModelConfig import ModelConfig
from serum.model.SeRumModel import SeRumModel
from serum.Vocabulary import Vocabulary

# Constants
FORMAT_VERSION = 1

logger = logging.getLogger(__name__)


@dataclass
class Checkpoint:
    config: ModelConfig
    vocabulary: Vocabulary
    model_state: dict
    optimizer_state: Optional[dict]
    step: int
    format_version: int = FORMAT_VERSION

    def buildModel(self) -> SeRumModel:
        '''
        A model carrying this checkpoint's parameters.
        '''

        model = SeRumModel(self.config, self.vocabulary)
        model.load_state_dict(self.model_state)
        return model


def saveCheckpoint(path: str, model, optimizer=None, step: int = 0) -> None:
    '''
    Write a checkpoint.

    :param path: Destination file, parent directories are created.
    :param model: The SeRumModel.
    :param optimizer: Optimizer whose state is saved alongside, if any.
    :param step: Optimization steps taken so far.
    '''

    if os.path.dirname(path):
        os.makedirs(os.path.dirname(path), exist_ok=True)

    payload = {
        "format_version": FORMAT_VERSION,
        "config": model.config.toDict(),
        "vocabulary": model.vocabulary.toDict(),
        "model": model.state_dict(),
        "optimizer": optimizer.state_dict() if optimizer is not None else None,
        "step": step,
    }

    try:
        torch.save(payload, path)
    except OSError as error:
        raise CheckpointError(f"Could not write checkpoint {path}: {error}") from error

    logger.debug(f"Saved checkpoint at step {step} to {path}")


def loadCheckpoint(path: str, expectedConfig: Optional[ModelConfig] = None) -> Checkpoint:
    '''
    Read a checkpoint, refusing it if its config differs from the expected one.

    :param path: Checkpoint file.
    :param expectedConfig: Config the caller is about to run with, if it has one.
    '''

    if not os.path.isfile(path):
        raise CheckpointError(f"Checkpoint not found: {path}")

    try:
        payload = torch.load(path, map_location="cpu", weights_only=False)
    except Exception as error:
        raise CheckpointError(f"Could not read checkpoint {path}: {error}") from error

    version = payload.get("format_version")
    if version != FORMAT_VERSION:
        raise CheckpointError(f"Checkpoint {path} has format version {version}, expected {FORMAT_VERSION}")

    config = ModelConfig.fromDict(payload["config"])
    if expectedConfig is not None:
        differing = config.architectureDiff(expectedConfig)
        if differing:
            raise CheckpointError(f"Checkpoint {path} was saved with a different model architecture (fields: {differing})")

        # Schedule and loss settings follow the run that loads the checkpoint
        config = expectedConfig

    return Checkpoint(config, Vocabulary.fromDict(payload["vocabulary"]), payload["model"],
                      payload["optimizer"], payload["step"], version)
