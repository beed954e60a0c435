"""
Desc: Renders receipt-like synthetic documents with exact line polygons, transcripts and key-value ground truth.
"""

# Core libraries
import json
import logging
import os
from dataclasses import dataclass, asdict
from typing import List, Sequence, Tuple

# External libraries
import numpy as np
from PIL import Image, ImageFilter

# Custom libraries
from serum.DocumentSample import ANNOTATION_FILE, DocumentSample, TextRegion, sampleToRecord
from serum.Errors import LayoutOverflowError, SerumError
from serum.ModelConfig import SCHEMA_KEYS
from serum.corpus.BitmapFont import inkBounds, renderText, textExtent

# Constants
SCHEMA_VERSION = 1
MANIFEST_FILE = "manifest.json"
IMAGES_DIR = "images"
MAX_PLACEMENT_ATTEMPTS = 100
LINE_GAP = 2

COMPANIES = ("ACME MART", "BLUE OX CAFE", "SUNRISE DELI", "KOPI KITA", "METRO BOOKS",
             "GREEN LEAF", "PIXEL STORE", "NORTH STAR", "RIVER BAKERY", "OAK HARDWARE")
STREETS = ("MAIN", "HIGH", "PARK", "LAKE", "HILL", "MILL", "KING", "ELM")
DISTRACTORS = ("THANK YOU", "CASHIER", "NO REFUND", "WELCOME", "MEMBER CARD",
               "SERVED BY ANN", "COME AGAIN", "TAX INVOICE", "CASH", "CHANGE DUE")

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class DocSpec:
    seed: int
    page_height: int = 256
    page_width: int = 256
    num_fields: int = 4
    font_scale_range: Tuple[int, int] = (1, 2)
    distractor_lines: int = 2
    blur_radius: float = 0.0
    salt_pepper: float = 0.0
    channels: int = 3

    def __post_init__(self):
        object.__setattr__(self, "font_scale_range", tuple(self.font_scale_range))

        if not 0 <= self.num_fields <= len(SCHEMA_KEYS):
            raise ValueError(f"num_fields must lie in [0, {len(SCHEMA_KEYS)}], got {self.num_fields}")

        low, high = self.font_scale_range
        if not 1 <= low <= high:
            raise ValueError(f"font_scale_range must satisfy 1 <= low <= high, got {self.font_scale_range}")

        if self.distractor_lines < 0 or self.blur_radius < 0 or not 0 <= self.salt_pepper < 1:
            raise ValueError("Distractor count, blur radius and salt-and-pepper fraction must be nonnegative")

        if self.channels not in (1, 3):
            raise ValueError(f"Documents are rendered as grayscale or RGB, got {self.channels} channels")

    @classmethod
    def forConfig(cls, config, seed: int, **overrides) -> "DocSpec":
        '''
        A spec whose page matches the model input size.
        '''

        return cls(seed=seed, page_height=config.image_height, page_width=config.image_width,
                   channels=config.image_channels, **overrides)


def _fieldValue(key: str, rng: np.random.Generator) -> str:
    if key == "company":
        return COMPANIES[rng.integers(len(COMPANIES))]

    if key == "date":
        return f"{rng.integers(1, 29):02d}/{rng.integers(1, 13):02d}/{rng.integers(2015, 2024)}"

    if key == "total":
        return f"{rng.integers(1, 1000)}.{rng.integers(0, 100):02d}"

    if key == "address":
        return f"{rng.integers(1, 100)} {STREETS[rng.integers(len(STREETS))]} ST"

    raise ValueError(f"No value generator for key '{key}'")


def _overlaps(box, occupied) -> bool:
    top, left, bottom, right = box
    for otherTop, otherLeft, otherBottom, otherRight in occupied:
        if (top < otherBottom + LINE_GAP and otherTop < bottom + LINE_GAP and
                left < otherRight + LINE_GAP and otherLeft < right + LINE_GAP):
            return True

    return False


class DocumentGenerator:
    def __init__(self, spec: DocSpec):
        '''
        :param spec: Everything that determines the document, including its random seed.
        '''

        self.spec = spec
        self.rng = np.random.default_rng(spec.seed)
        self.page = np.ones((spec.page_height, spec.page_width), dtype=np.float64)
        self.occupied = []
        self.regions = []
        self.kv = {}

    def chooseFields(self) -> List[Tuple[str, str]]:
        picked = set(self.rng.choice(len(SCHEMA_KEYS), size=self.spec.num_fields, replace=False).tolist())
        return [(key, _fieldValue(key, self.rng)) for index, key in enumerate(SCHEMA_KEYS) if index in picked]

    def chooseDistractors(self, values: Sequence[str]) -> List[str]:
        # A distractor must never contain a field value or the value would be claimed by two lines
        pool = [line for line in DISTRACTORS if not any(value in line for value in values)]
        if not pool:
            return []

        return [pool[self.rng.integers(len(pool))] for _ in range(self.spec.distractor_lines)]

    def placeLine(self, text: str) -> None:
        '''
        Ink one line of text at a random free location and record its region.

        :param text: The line transcript.
        '''

        low, high = self.spec.font_scale_range
        scale = int(self.rng.integers(low, high + 1))
        bitmap = renderText(text, scale)
        height, width = textExtent(text, scale)

        if height > self.spec.page_height or width > self.spec.page_width:
            raise LayoutOverflowError(self.spec, f"Line '{text}' is larger than the page")

        for _ in range(MAX_PLACEMENT_ATTEMPTS):
            top = int(self.rng.integers(0, self.spec.page_height - height + 1))
            left = int(self.rng.integers(0, self.spec.page_width - width + 1))
            inkTop, inkLeft, inkBottom, inkRight = inkBounds(bitmap)
            box = (top + inkTop, left + inkLeft, top + inkBottom, left + inkRight)

            if not _overlaps(box, self.occupied):
                break
        else:
            raise LayoutOverflowError(self.spec, f"No free location for line '{text}' after "
                                                 f"{MAX_PLACEMENT_ATTEMPTS} attempts")

        self.page[top:top + height, left:left + width][bitmap] = 0.0
        self.occupied.append(box)

        boxTop, boxLeft, boxBottom, boxRight = box
        polygon = ((boxTop, boxLeft), (boxTop, boxRight), (boxBottom, boxRight), (boxBottom, boxLeft))
        self.regions.append(TextRegion(polygon, text))

    def addNoise(self) -> np.ndarray:
        # Runs after every region is recorded so the annotations stay exact
        page = self.page
        if self.spec.blur_radius > 0:
            blurred = Image.fromarray(np.round(page * 255).astype(np.uint8))
            blurred = blurred.filter(ImageFilter.GaussianBlur(self.spec.blur_radius))
            page = np.asarray(blurred, dtype=np.float64) / 255.0

        if self.spec.salt_pepper > 0:
            page = page.copy()
            flips = self.rng.random(page.shape) < self.spec.salt_pepper
            page[flips] = self.rng.integers(0, 2, size=int(flips.sum()))

        # Quantized to 8 bits so the PNG written later decodes to the same values
        quantized = np.round(page * 255).astype(np.uint8)
        return np.repeat(quantized[:, :, None], self.spec.channels, axis=2).astype(np.float32) / 255.0

    def render(self, sampleId: str) -> DocumentSample:
        fields = self.chooseFields()
        distractors = self.chooseDistractors([value for _, value in fields])

        for key, value in fields:
            self.placeLine(f"{key.upper()}: {value}")
            self.kv[key] = value

        for line in distractors:
            self.placeLine(line)

        return DocumentSample(self.addNoise(), tuple(self.regions), dict(self.kv), sampleId)


def renderDocument(spec: DocSpec, sampleId: str = None) -> DocumentSample:
    '''
    Render one synthetic document. The result depends only on the spec.

    :param spec: The document spec.
    :param sampleId: Identifier to give the sample, defaults to one derived from the seed.
    :returns: The rendered sample.
    '''

    return DocumentGenerator(spec).render(sampleId or f"doc_{spec.seed}")


def corpusSpecs(config, count: int, seed: int, **overrides) -> List[DocSpec]:
    '''
    Derive one DocSpec per document from a single corpus seed.
    '''

    seeds = np.random.SeedSequence(seed).generate_state(count, dtype=np.uint32) if count else []
    return [DocSpec.forConfig(config, int(documentSeed), **overrides) for documentSeed in seeds]


def writeDataset(specs: Sequence[DocSpec], outPath: str) -> dict:
    '''
    Render every spec, writing one PNG per document and one JSON-Lines annotation file.

    :param specs: The document specs, in output order.
    :param outPath: Dataset directory, created if needed.
    :returns: The manifest, which is also written next to the annotations.
    '''

    imagesDir = os.path.join(outPath, IMAGES_DIR)
    annotationPath = os.path.join(outPath, ANNOTATION_FILE)

    try:
        os.makedirs(imagesDir, exist_ok=True)

        ids = []
        with open(annotationPath, mode="w", encoding="utf-8") as annotationFile:
            for index, spec in enumerate(specs):
                sampleId = f"doc{index:05d}"
                sample = renderDocument(spec, sampleId)

                relativeImagePath = f"{IMAGES_DIR}/{sampleId}.png"
                pixels = np.round(np.asarray(sample.image) * 255).astype(np.uint8)
                if pixels.shape[2] == 1:
                    Image.fromarray(pixels[:, :, 0]).save(os.path.join(outPath, relativeImagePath))
                else:
                    Image.fromarray(pixels).save(os.path.join(outPath, relativeImagePath))

                annotationFile.write(json.dumps(sampleToRecord(sample, relativeImagePath)) + "\n")
                ids.append(sampleId)

        manifest = {
            "schema_version": SCHEMA_VERSION,
            "count": len(ids),
            "annotations": ANNOTATION_FILE,
            "ids": ids,
            "specs": [asdict(spec) for spec in specs],
        }
        with open(os.path.join(outPath, MANIFEST_FILE), mode="w") as manifestFile:
            json.dump(manifest, manifestFile, indent=2)

    except OSError as error:
        raise SerumError(f"Could not write dataset to {outPath}: {error}") from error

    logger.info(f"Wrote {len(ids)} documents to {outPath}")

    return manifest
