"""
Desc: Every dimension, count and schedule constant the model and its training need.
"""

# Core libraries
import json
import os
from dataclasses import dataclass, asdict, fields
from typing import Tuple

# Custom libraries
from serum.Errors import ConfigError

# Constants
PRESETS_DIR = os.path.join(os.path.dirname(__file__), "presets")
PRETRAIN_TASKS = ("query_to_seg", "text_to_seg", "seg_to_text")
SCHEMA_KEYS = ("company", "date", "total", "address")
DEFAULT_CHARSET = "".join(chr(code) for code in range(32, 127))

# Fields that shape the parameters, everything else may change between pretraining and fine-tuning
ARCHITECTURE_FIELDS = ("embed_dim", "num_queries", "upsample_factor", "encoder_stage_depths", "encoder_window",
                       "image_height", "image_width", "image_channels", "query_channel", "max_decode_len",
                       "charset", "patch_size", "encoder_head_dim", "decoder_layers", "decoder_heads", "mlp_ratio")


@dataclass(frozen=True)
class ModelConfig:
    embed_dim: int = 128
    num_queries: int = 8
    upsample_factor: int = 6
    encoder_stage_depths: Tuple[int, ...] = (2, 2, 2, 2)
    encoder_window: int = 4
    image_height: int = 256
    image_width: int = 256
    image_channels: int = 3
    alpha_min: float = 0.02
    alpha_max: float = 1.0
    lambda_match: float = 1.0
    lambda_decoder: float = 1.0
    lambda_text: float = 1.0
    query_channel: int = 128
    max_decode_len: int = 96
    charset: str = DEFAULT_CHARSET
    patch_size: int = 4
    encoder_head_dim: int = 16
    decoder_layers: int = 4
    decoder_heads: int = 4
    mlp_ratio: float = 4.0
    batch_size: int = 4
    learning_rate: float = 5e-5
    lr_decay: float = 0.1
    lr_decay_epochs: int = 30
    dataset_size: int = 32
    prompt_alpha: float = 0.1
    total_alpha: float = 0.5
    task_name: str = "receipt"
    pretrain_tasks: Tuple[str, ...] = PRETRAIN_TASKS
    keys: Tuple[str, ...] = SCHEMA_KEYS

    def __post_init__(self):
        # JSON hands lists back, the config must stay hashable and immutable
        for name in ("encoder_stage_depths", "pretrain_tasks", "keys"):
            object.__setattr__(self, name, tuple(getattr(self, name)))

        valid, message = validateConfig(self)
        if not valid:
            raise ConfigError(message)

    @property
    def num_stages(self) -> int:
        return len(self.encoder_stage_depths)

    @property
    def downsample(self) -> int:
        return self.patch_size * 2 ** (self.num_stages - 1)

    @property
    def grid_height(self) -> int:
        return self.image_height // self.downsample

    @property
    def grid_width(self) -> int:
        return self.image_width // self.downsample

    @property
    def num_tokens(self) -> int:
        return self.grid_height * self.grid_width

    @property
    def pixel_height(self) -> int:
        return self.upsample_factor * self.grid_height

    @property
    def pixel_width(self) -> int:
        return self.upsample_factor * self.grid_width

    @property
    def stage_dims(self) -> Tuple[int, ...]:
        base = self.embed_dim // 2 ** (self.num_stages - 1)
        return tuple(base * 2 ** i for i in range(self.num_stages))

    def stageResolution(self, stage: int) -> Tuple[int, int]:
        scale = self.patch_size * 2 ** stage
        return self.image_height // scale, self.image_width // scale

    def toDict(self) -> dict:
        data = asdict(self)
        for name in ("encoder_stage_depths", "pretrain_tasks", "keys"):
            data[name] = list(data[name])
        return data

    def architectureDiff(self, other: "ModelConfig") -> list:
        return [name for name in ARCHITECTURE_FIELDS if getattr(self, name) != getattr(other, name)]

    def replace(self, **changes) -> "ModelConfig":
        data = asdict(self)
        data.update(changes)
        return ModelConfig(**data)

    @classmethod
    def fromDict(cls, data: dict) -> "ModelConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"Unknown model config fields: {sorted(unknown)}")

        return cls(**data)

    @classmethod
    def fromPreset(cls, presetName: str, **overrides) -> "ModelConfig":
        '''
        Load a named preset from the presets directory and apply overrides.

        :param presetName: Name (or unique prefix) of the preset, e.g. "toy" or "paper-default".
        :returns: The validated configuration.
        '''

        return cls.fromDict({**loadPreset(presetName), **overrides})


def loadPreset(presetName: str) -> dict:
    '''
    Find a preset JSON file whose name starts with presetName.

    :param presetName: Preset name or prefix.
    :returns: The raw preset fields.
    '''

    for fileName in sorted(os.listdir(PRESETS_DIR)):
        if fileName.startswith(presetName) and fileName.endswith(".json"):
            with open(os.path.join(PRESETS_DIR, fileName)) as presetFile:
                return json.load(presetFile)

    raise ConfigError(f"No preset named '{presetName}' in {PRESETS_DIR}")


def validateConfig(config: ModelConfig) -> tuple:
    '''
    Validates the model configuration.

    :param config: The configuration to check.
    :returns: A tuple containing the boolean result and a message.
    '''

    positiveInts = ("embed_dim", "num_queries", "upsample_factor", "encoder_window",
                    "image_height", "image_width", "image_channels", "query_channel",
                    "max_decode_len", "patch_size", "encoder_head_dim", "decoder_layers",
                    "decoder_heads", "batch_size", "lr_decay_epochs", "dataset_size")
    for name in positiveInts:
        value = getattr(config, name)
        if not isinstance(value, int) or value <= 0:
            return (False, f"{name} must be a positive integer, got {value!r}")

    if not config.encoder_stage_depths or any(depth <= 0 for depth in config.encoder_stage_depths):
        return (False, "encoder_stage_depths must be a non-empty list of positive integers")

    if config.image_height % config.downsample or config.image_width % config.downsample:
        return (False, f"Image size {config.image_height}x{config.image_width} is not divisible "
                       f"by the encoder downsample factor {config.downsample}")

    if not (0 < config.alpha_min <= config.alpha_max <= 1):
        return (False, f"Token keep ratio range must satisfy 0 < alpha_min <= alpha_max <= 1, "
                       f"got [{config.alpha_min}, {config.alpha_max}]")

    for name in ("prompt_alpha", "total_alpha"):
        if not (0 < getattr(config, name) <= 1):
            return (False, f"{name} must lie in (0, 1]")

    if config.query_channel != config.embed_dim:
        return (False, "query_channel must equal embed_dim")

    if config.embed_dim % 2 ** (config.num_stages - 1):
        return (False, f"embed_dim {config.embed_dim} cannot be halved across {config.num_stages} stages")

    for stage, dim in enumerate(config.stage_dims):
        if dim % config.encoder_head_dim:
            return (False, f"Stage {stage} width {dim} is not divisible by encoder_head_dim {config.encoder_head_dim}")

        # Windows larger than the grid are clipped to it, smaller ones must tile it
        height, width = config.stageResolution(stage)
        for size in (height, width):
            if size > config.encoder_window and size % config.encoder_window:
                return (False, f"Window {config.encoder_window} does not divide the stage {stage} grid {height}x{width}")

    if config.embed_dim % config.decoder_heads:
        return (False, "embed_dim must be divisible by decoder_heads")

    for name in ("lambda_match", "lambda_decoder", "lambda_text"):
        if getattr(config, name) < 0:
            return (False, f"{name} must be nonnegative")

    if not config.pretrain_tasks or any(task not in PRETRAIN_TASKS for task in config.pretrain_tasks):
        return (False, f"pretrain_tasks must be a non-empty subset of {PRETRAIN_TASKS}")

    if not config.keys or len(set(config.keys)) != len(config.keys):
        return (False, "keys must be a non-empty list of unique names")

    return (True, "Configuration is valid")
