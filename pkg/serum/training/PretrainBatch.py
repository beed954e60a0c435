"""
Desc: Mixed-task pretraining batches. Every slot independently draws one of the enabled subtasks.
"""

# Core libraries
import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence

# External libraries
import numpy as np
import torch

# Custom libraries
from serum.DocumentSample import DocumentSample
from serum.model.QueryDecoder import QuerySpec
from serum.ModelConfig import PRETRAIN_TASKS

# Constants
QUERY_TO_SEG, TEXT_TO_SEG, SEG_TO_TEXT = PRETRAIN_TASKS

logger = logging.getLogger(__name__)


def imageBatch(samples: Sequence[DocumentSample], device=None) -> torch.Tensor:
    '''
    (B, H, W, C) float tensor of the samples' images.
    '''

    return torch.from_numpy(np.stack([sample.image for sample in samples])).to(device)


def largestMasks(masks: np.ndarray, limit: int, sampleId: str = None) -> np.ndarray:
    '''
    Keep at most limit masks, preferring the largest areas (lower index on ties), in their original order.
    '''

    if len(masks) <= limit:
        return masks

    logger.warning(f"Sample {sampleId} has {len(masks)} regions for {limit} queries, keeping the {limit} largest")
    areas = masks.reshape(len(masks), -1).sum(axis=1).astype(np.int64)
    keep = np.sort(np.argsort(-areas, kind="stable")[:limit])
    return masks[keep]


@dataclass
class PretrainSlot:
    task: str
    sample: DocumentSample
    queries: List[QuerySpec]
    mask_targets: np.ndarray            # (M, sh, sw), empty for seg_to_text
    text_target: Optional[str] = None   # seg_to_text only
    region_index: Optional[int] = None
    region_mask: Optional[np.ndarray] = None  # (sh, sw), seg_to_text only

    @property
    def decodesQueries(self) -> bool:
        return self.task != SEG_TO_TEXT


def assemblePretrainBatch(samples: Sequence[DocumentSample], rng: np.random.Generator, config,
                          tasks: Optional[Sequence[str]] = None) -> List[PretrainSlot]:
    '''
    Build one pretraining slot per sample.

    :param samples: The documents of the batch.
    :param rng: Seeded random source for the task and region draws.
    :param config: ModelConfig, giving the mask grid and the enabled subtasks.
    :param tasks: Subtasks to draw from, defaults to config.pretrain_tasks.
    :returns: The slots, skipping samples that have no regions.
    '''

    tasks = tuple(tasks or config.pretrain_tasks)
    unknown = set(tasks) - set(PRETRAIN_TASKS)
    if not tasks or unknown:
        raise ValueError(f"Pretraining subtasks must be a non-empty subset of {PRETRAIN_TASKS}, got {tasks}")

    slots = []
    for sample in samples:
        if not sample.regions:
            logger.warning(f"Skipping sample {sample.sample_id}: it has no text regions")
            continue

        task = tasks[rng.integers(len(tasks))]
        masks = sample.regionMasks(config.pixel_height, config.pixel_width)

        if task == QUERY_TO_SEG:
            slots.append(PretrainSlot(task, sample, [], largestMasks(masks, config.num_queries, sample.sample_id)))

        elif task == TEXT_TO_SEG:
            regionIndex = int(rng.integers(len(sample.regions)))
            query = QuerySpec.ofText(sample.regions[regionIndex].transcript)
            slots.append(PretrainSlot(task, sample, [query], masks[regionIndex:regionIndex + 1],
                                      region_index=regionIndex))

        else:
            regionIndex = int(rng.integers(len(sample.regions)))
            slots.append(PretrainSlot(task, sample, [], masks[:0], sample.regions[regionIndex].transcript,
                                      regionIndex, masks[regionIndex]))

    return slots
