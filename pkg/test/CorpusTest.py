'''
Synthetic documents: deterministic rendering, exact region annotations and the on-disk dataset format.
'''

# Core libraries
import json
import os

# External libraries
import numpy as np
import pytest

# Custom libraries
from serum.corpus.BitmapFont import ADVANCE, GLYPH_HEIGHT, inkBounds, renderText, textExtent
from serum.corpus.DocumentGenerator import MANIFEST_FILE, DocSpec, corpusSpecs, renderDocument, writeDataset
from serum.DocumentSample import loadSamples
from serum.Errors import LayoutOverflowError
from serum.evaluation.Metrics import maskIou
from serum.ModelConfig import SCHEMA_KEYS, ModelConfig


def inkBox(image: np.ndarray, region) -> tuple:
    '''
    Bounding box of the dark pixels inside a region's box, found by scanning the page.
    '''

    top, left, bottom, right = (int(value) for value in region.bounds())
    dark = image[top:bottom, left:right, 0] < 0.5
    rows = [row for row in range(dark.shape[0]) if dark[row].any()]
    cols = [col for col in range(dark.shape[1]) if dark[:, col].any()]
    return top + rows[0], left + cols[0], top + rows[-1] + 1, left + cols[-1] + 1


def testTextExtent():
    assert textExtent("", 1) == (0, 0)
    assert textExtent("AB", 1) == (GLYPH_HEIGHT, 2 * ADVANCE - 1)
    assert textExtent("AB", 2) == (2 * GLYPH_HEIGHT, 2 * (2 * ADVANCE - 1))


def testRenderTextMatchesExtent():
    bitmap = renderText("TOTAL: 9.50", 2)
    assert bitmap.shape == textExtent("TOTAL: 9.50", 2)
    assert bitmap.dtype == bool


def testUnsupportedCharacterIsRefused():
    with pytest.raises(ValueError):
        renderText("é")


def testInkBoundsOfBlankBitmap():
    assert inkBounds(np.zeros((3, 3), dtype=bool)) is None


def testSameSeedSameDocument():
    first = renderDocument(DocSpec(seed=11))
    second = renderDocument(DocSpec(seed=11))

    assert np.array_equal(first.image, second.image)
    assert first.regions == second.regions
    assert first.kv_ground_truth == second.kv_ground_truth


def testDifferentSeedsDiffer():
    assert not np.array_equal(renderDocument(DocSpec(seed=1)).image, renderDocument(DocSpec(seed=2)).image)


def testFieldsFollowSchemaOrder():
    sample = renderDocument(DocSpec(seed=5, num_fields=4))
    assert list(sample.kv_ground_truth) == list(SCHEMA_KEYS)


def testEveryValueLivesInExactlyOneRegion():
    for seed in range(10):
        sample = renderDocument(DocSpec(seed=seed))
        for value in sample.kv_ground_truth.values():
            assert sum(value in region.transcript for region in sample.regions) == 1


def testRegionsTightlyBoundTheirInk():
    for seed in range(5):
        sample = renderDocument(DocSpec(seed=seed))
        for region in sample.regions:
            top, left, bottom, right = region.bounds()
            gtMask = np.zeros(sample.image.shape[:2], dtype=bool)
            gtMask[int(top):int(bottom), int(left):int(right)] = True

            inkTop, inkLeft, inkBottom, inkRight = inkBox(sample.image, region)
            inkMask = np.zeros_like(gtMask)
            inkMask[inkTop:inkBottom, inkLeft:inkRight] = True

            assert maskIou(gtMask, inkMask) == 1.0


def testNoiseLeavesAnnotationsUntouched():
    clean = renderDocument(DocSpec(seed=3))
    noisy = renderDocument(DocSpec(seed=3, blur_radius=1.0, salt_pepper=0.05))

    assert clean.regions == noisy.regions
    assert not np.array_equal(clean.image, noisy.image)


def testGrayscaleDocuments():
    assert renderDocument(DocSpec(seed=3, channels=1)).image.shape == (256, 256, 1)


def testTinyPageOverflows():
    with pytest.raises(LayoutOverflowError):
        renderDocument(DocSpec(seed=0, page_height=16, page_width=16))


def testInvalidSpecIsRefused():
    with pytest.raises(ValueError):
        DocSpec(seed=0, num_fields=9)

    with pytest.raises(ValueError):
        DocSpec(seed=0, channels=2)


def testCorpusSpecsAreDeterministic():
    config = ModelConfig.fromPreset("toy")
    assert corpusSpecs(config, 5, 42) == corpusSpecs(config, 5, 42)
    assert corpusSpecs(config, 0, 42) == []


def testDatasetRoundTrip(tmp_path):
    config = ModelConfig.fromPreset("toy")
    specs = corpusSpecs(config, 3, 9)
    manifest = writeDataset(specs, str(tmp_path))

    assert manifest["count"] == 3
    assert json.loads((tmp_path / MANIFEST_FILE).read_text()) == manifest

    samples = loadSamples(str(tmp_path), config)
    assert [sample.sample_id for sample in samples] == manifest["ids"]

    for spec, sample in zip(specs, samples):
        original = renderDocument(spec, sample.sample_id)
        assert np.array_equal(sample.image, original.image)
        assert sample.regions == original.regions
        assert sample.kv_ground_truth == original.kv_ground_truth


def testEmptyDataset(tmp_path):
    config = ModelConfig.fromPreset("toy")
    manifest = writeDataset([], str(tmp_path))

    assert manifest["count"] == 0
    assert loadSamples(str(tmp_path), config) == []
    assert os.path.isdir(tmp_path / "images")


def testRegionMasksAreDisjoint():
    for seed in range(10):
        sample = renderDocument(DocSpec(seed=seed))
        masks = sample.regionMasks(*sample.image.shape[:2])

        assert masks.sum(axis=0).max() <= 1
        assert all(mask.any() for mask in masks)
