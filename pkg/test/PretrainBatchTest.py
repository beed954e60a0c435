'''
Mixed-task pretraining batches.
'''

# Core libraries
from collections import Counter

# External libraries
import numpy as np
import pytest

# Custom libraries
from serum.DocumentSample import DocumentSample, TextRegion
from serum.model.QueryDecoder import QuerySpec
from serum.model.SeRumModel import SeRumModel
from serum.training.PretrainBatch import (QUERY_TO_SEG, SEG_TO_TEXT, TEXT_TO_SEG, assemblePretrainBatch,
                                          imageBatch, largestMasks)
from serum.training.Trainer import Trainer, seedEverything


def testSameSeedSameBatch(tinyConfig, tinySamples):
    first = assemblePretrainBatch(tinySamples, np.random.default_rng(3), tinyConfig)
    second = assemblePretrainBatch(tinySamples, np.random.default_rng(3), tinyConfig)

    assert [(slot.task, slot.region_index, slot.text_target) for slot in first] == \
           [(slot.task, slot.region_index, slot.text_target) for slot in second]


def testSlotTargetsMatchTheirTask(tinyConfig, tinySamples):
    slots = assemblePretrainBatch(tinySamples * 10, np.random.default_rng(0), tinyConfig)
    grid = (tinyConfig.pixel_height, tinyConfig.pixel_width)

    for slot in slots:
        masks = slot.sample.regionMasks(*grid)

        if slot.task == QUERY_TO_SEG:
            assert slot.queries == []
            assert np.array_equal(slot.mask_targets, masks)
            assert slot.decodesQueries

        elif slot.task == TEXT_TO_SEG:
            region = slot.sample.regions[slot.region_index]
            assert slot.queries == [QuerySpec.ofText(region.transcript)]
            assert np.array_equal(slot.mask_targets, masks[slot.region_index:slot.region_index + 1])

        else:
            assert not slot.decodesQueries
            assert slot.mask_targets.shape == (0,) + grid
            assert slot.text_target == slot.sample.regions[slot.region_index].transcript
            assert np.array_equal(slot.region_mask, masks[slot.region_index])


def testTasksAreDrawnUniformly(tinyConfig, tinySamples):
    slots = assemblePretrainBatch(tinySamples * 750, np.random.default_rng(1), tinyConfig)
    counts = Counter(slot.task for slot in slots)

    assert len(slots) == 3000
    for task in (QUERY_TO_SEG, TEXT_TO_SEG, SEG_TO_TEXT):
        assert counts[task] / 3000 == pytest.approx(1 / 3, abs=0.03)


def testSamplesWithoutRegionsAreSkipped(tinyConfig, tinySamples):
    blank = DocumentSample(np.ones((32, 32, 3), dtype=np.float32), (), {}, "blank")
    slots = assemblePretrainBatch([blank] + tinySamples, np.random.default_rng(0), tinyConfig)

    assert [slot.sample.sample_id for slot in slots] == [sample.sample_id for sample in tinySamples]


def testTaskSubset(tinyConfig, tinySamples):
    slots = assemblePretrainBatch(tinySamples * 5, np.random.default_rng(0), tinyConfig, tasks=[SEG_TO_TEXT])
    assert {slot.task for slot in slots} == {SEG_TO_TEXT}

    configured = tinyConfig.replace(pretrain_tasks=(TEXT_TO_SEG,))
    slots = assemblePretrainBatch(tinySamples, np.random.default_rng(0), configured)
    assert {slot.task for slot in slots} == {TEXT_TO_SEG}


def testUnknownTaskIsRefused(tinyConfig, tinySamples):
    with pytest.raises(ValueError):
        assemblePretrainBatch(tinySamples, np.random.default_rng(0), tinyConfig, tasks=["caption"])


def testImageBatch(tinySamples):
    images = imageBatch(tinySamples)

    assert tuple(images.shape) == (4, 32, 32, 3)
    assert np.array_equal(images[2].numpy(), tinySamples[2].image)


def testLargestMasksKeepsBiggestInOrder():
    masks = np.zeros((5, 4, 4), dtype=np.uint8)
    for index, area in enumerate([3, 1, 5, 3, 2]):
        masks[index].flat[:area] = 1

    kept = largestMasks(masks, 3)
    assert [int(mask.sum()) for mask in kept] == [3, 5, 3]
    assert largestMasks(masks, 9) is masks


def crowdedSample() -> DocumentSample:
    regions = tuple(TextRegion(((top, top), (top, top + 5), (top + 5, top + 5), (top + 5, top)), f"LINE {top}")
                    for top in range(0, 30, 5))
    return DocumentSample(np.ones((32, 32, 3), dtype=np.float32), regions, {}, "crowded")


def testMoreRegionsThanQueriesAreCapped(tinyConfig):
    sample = crowdedSample()
    assert len(sample.regions) == 6 and tinyConfig.num_queries == 4

    [slot] = assemblePretrainBatch([sample], np.random.default_rng(0), tinyConfig, tasks=[QUERY_TO_SEG])
    assert slot.mask_targets.shape == (4, tinyConfig.pixel_height, tinyConfig.pixel_width)


def testPretrainStepOnCrowdedDocument(tinyConfig, vocabulary):
    config = tinyConfig.replace(pretrain_tasks=(QUERY_TO_SEG,))
    trainer = Trainer(SeRumModel(config, vocabulary), seedEverything(0))

    report = trainer.pretrainStep([crowdedSample()])
    assert report is not None and report.isFinite()
