# External libraries
import numpy as np
import pytest
import torch

# Custom libraries
from serum.DocumentSample import DocumentSample, TextRegion
from serum.model.SeRumModel import SeRumModel
from serum.ModelConfig import ModelConfig
from serum.Vocabulary import Vocabulary

# A 32x32 model with a 4x4 token grid and an 8x8 pixel grid
TINY_FIELDS = {
    "embed_dim": 8,
    "num_queries": 4,
    "upsample_factor": 2,
    "encoder_stage_depths": [2, 2],
    "encoder_window": 4,
    "image_height": 32,
    "image_width": 32,
    "image_channels": 3,
    "query_channel": 8,
    "max_decode_len": 24,
    "patch_size": 4,
    "encoder_head_dim": 4,
    "decoder_layers": 2,
    "decoder_heads": 2,
    "mlp_ratio": 2.0,
    "batch_size": 2,
    "dataset_size": 4,
    "keys": ["company", "total"],
}


@pytest.fixture
def tinyConfig():
    return ModelConfig.fromDict(TINY_FIELDS)


@pytest.fixture
def vocabulary(tinyConfig):
    return Vocabulary.forConfig(tinyConfig)


@pytest.fixture
def tinyModel(tinyConfig, vocabulary):
    torch.manual_seed(0)
    return SeRumModel(tinyConfig, vocabulary)


def makeSample(sampleId: str, seed: int = 0) -> DocumentSample:
    rng = np.random.default_rng(seed)
    regions = (
        TextRegion(((2, 2), (2, 20), (8, 20), (8, 2)), "COMPANY: AB"),
        TextRegion(((14, 4), (14, 28), (20, 28), (20, 4)), "TOTAL: 9.50"),
        TextRegion(((24, 8), (24, 30), (30, 30), (30, 8)), "THANK YOU"),
    )
    image = rng.random((32, 32, 3)).astype(np.float32)
    return DocumentSample(image, regions, {"company": "AB", "total": "9.50"}, sampleId)


@pytest.fixture
def tinySamples():
    return [makeSample(f"s{index}", index) for index in range(4)]


@pytest.fixture
def sampleFactory():
    return makeSample
