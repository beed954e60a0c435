"""
Desc: Document samples, their text regions, and the JSON-Lines annotation format they are stored in.
"""

# Core libraries
import json
import logging
import os
from dataclasses import dataclass
from typing import List, Mapping, Optional, Tuple, Union

# External libraries
import numpy as np
from matplotlib.path import Path as PolygonPath
from PIL import Image

# Custom libraries
from serum.Errors import SampleError

# Constants
ANNOTATION_FILE = "annotations.jsonl"

logger = logging.getLogger(__name__)

KvValue = Union[str, Mapping[str, "KvValue"]]


def renderPolygonMask(polygon, imageHeight: int, imageWidth: int, outHeight: int, outWidth: int) -> np.ndarray:
    '''
    Rasterize a polygon given in image coordinates onto an outHeight x outWidth grid.
    A cell is set when its center, mapped back to image coordinates, falls inside the polygon.

    :param polygon: (row, col) vertices in continuous image coordinates (pixel edges at integers).
    :returns: A 0/1 uint8 array of shape (outHeight, outWidth).
    '''

    rows = (np.arange(outHeight) + 0.5) * (imageHeight / outHeight)
    cols = (np.arange(outWidth) + 0.5) * (imageWidth / outWidth)
    gridRows, gridCols = np.meshgrid(rows, cols, indexing="ij")
    centers = np.stack([gridRows.ravel(), gridCols.ravel()], axis=1)

    inside = PolygonPath(np.asarray(polygon, dtype=np.float64)).contains_points(centers)
    return inside.reshape(outHeight, outWidth).astype(np.uint8)


@dataclass(frozen=True)
class TextRegion:
    polygon: Tuple[Tuple[float, float], ...]
    transcript: str

    def __post_init__(self):
        object.__setattr__(self, "polygon", tuple((float(r), float(c)) for r, c in self.polygon))

        if len(self.polygon) < 3:
            raise ValueError(f"Region polygon needs at least 3 points, got {len(self.polygon)}")

        if not self.transcript:
            raise ValueError("Region transcript must be non-empty")

    def renderMask(self, imageHeight: int, imageWidth: int, outHeight: Optional[int] = None,
                   outWidth: Optional[int] = None) -> np.ndarray:
        return renderPolygonMask(self.polygon, imageHeight, imageWidth,
                                 outHeight or imageHeight, outWidth or imageWidth)

    def bounds(self) -> Tuple[float, float, float, float]:
        rows = [point[0] for point in self.polygon]
        cols = [point[1] for point in self.polygon]
        return min(rows), min(cols), max(rows), max(cols)


def _checkKvLeaves(kv, path=()) -> None:
    for key, value in kv.items():
        if isinstance(value, Mapping):
            _checkKvLeaves(value, path + (key,))
        elif not isinstance(value, str) or not value:
            raise ValueError(f"Ground-truth leaf {'/'.join(path + (key,))} must be a non-empty string")


@dataclass(frozen=True, eq=False)
class DocumentSample:
    image: np.ndarray
    regions: Tuple[TextRegion, ...]
    kv_ground_truth: Mapping[str, KvValue]
    sample_id: str

    def __post_init__(self):
        object.__setattr__(self, "regions", tuple(self.regions))

        if self.image.ndim != 3:
            raise SampleError(self.sample_id, f"Image must be H x W x C, got shape {self.image.shape}")

        imageHeight, imageWidth = self.image.shape[:2]
        for region in self.regions:
            top, left, bottom, right = region.bounds()
            if top < 0 or left < 0 or bottom > imageHeight or right > imageWidth:
                raise SampleError(self.sample_id, f"Region '{region.transcript}' lies outside the "
                                                  f"{imageHeight}x{imageWidth} image")

        try:
            _checkKvLeaves(self.kv_ground_truth)
        except ValueError as error:
            raise SampleError(self.sample_id, str(error)) from error

        self.image.setflags(write=False)

    @property
    def height(self) -> int:
        return self.image.shape[0]

    @property
    def width(self) -> int:
        return self.image.shape[1]

    def regionMasks(self, outHeight: int, outWidth: int) -> np.ndarray:
        '''
        :returns: (num_regions, outHeight, outWidth) binary masks of every region.
        '''

        masks = [region.renderMask(self.height, self.width, outHeight, outWidth) for region in self.regions]
        if not masks:
            return np.zeros((0, outHeight, outWidth), dtype=np.uint8)

        return np.stack(masks)

    def textAreaMask(self, outHeight: int, outWidth: int, regionIndices=None) -> np.ndarray:
        '''
        Union of region masks (all regions, or only regionIndices) at the requested resolution.
        '''

        masks = self.regionMasks(outHeight, outWidth)
        if regionIndices is not None:
            masks = masks[list(regionIndices)]

        if len(masks) == 0:
            return np.zeros((outHeight, outWidth), dtype=np.uint8)

        return masks.max(axis=0)

    def valueRegionIndex(self, value: str) -> Optional[int]:
        '''
        Index of the first region whose transcript carries the given value, if any.
        '''

        for index, region in enumerate(self.regions):
            if value in region.transcript:
                return index

        return None

    def flatValues(self) -> List[Tuple[Tuple[str, ...], str]]:
        values = []

        def walk(kv, path):
            for key, value in kv.items():
                if isinstance(value, Mapping):
                    walk(value, path + (key,))
                else:
                    values.append((path + (key,), value))

        walk(self.kv_ground_truth, ())
        return values


def fitToCanvas(image: Image.Image, height: int, width: int, channels: int) -> Tuple[np.ndarray, float]:
    '''
    Aspect-preserving resize into a white height x width canvas, anchored top-left.

    :returns: The [0,1] float32 array and the scale applied to the source coordinates.
    '''

    image = image.convert("L" if channels == 1 else "RGB")
    scale = min(height / image.height, width / image.width)
    if scale != 1.0:
        newSize = (max(1, round(image.width * scale)), max(1, round(image.height * scale)))
        image = image.resize(newSize, Image.BILINEAR)

    canvas = Image.new(image.mode, (width, height), color=255 if channels == 1 else (255, 255, 255))
    canvas.paste(image, (0, 0))

    array = np.asarray(canvas, dtype=np.float32) / 255.0
    if array.ndim == 2:
        array = array[:, :, None]

    return array, scale


def sampleToRecord(sample: DocumentSample, imagePath: str) -> dict:
    return {
        "id": sample.sample_id,
        "image": imagePath,
        "regions": [{"polygon": [[r, c] for r, c in region.polygon], "text": region.transcript}
                    for region in sample.regions],
        "kv": sample.kv_ground_truth,
    }


def recordToSample(record: dict, baseDir: str, config) -> DocumentSample:
    '''
    Build a sample from one annotation record, decoding and fitting its image to the configured size.

    :param record: Parsed JSON record.
    :param baseDir: Directory the record's image path is relative to.
    :param config: ModelConfig providing image_height, image_width and image_channels.
    '''

    sampleId = str(record.get("id", "<missing id>"))
    imagePath = os.path.join(baseDir, record.get("image", ""))

    if not os.path.isfile(imagePath):
        raise SampleError(sampleId, f"Image file not found: {imagePath}")

    with Image.open(imagePath) as image:
        array, scale = fitToCanvas(image, config.image_height, config.image_width, config.image_channels)

    regions = []
    for index, regionRecord in enumerate(record.get("regions", [])):
        polygon = regionRecord.get("polygon", [])
        if len(polygon) < 3 or any(len(point) != 2 for point in polygon):
            raise SampleError(sampleId, f"Region {index} has a malformed polygon: {polygon}")

        try:
            regions.append(TextRegion(tuple((r * scale, c * scale) for r, c in polygon),
                                      regionRecord.get("text", "")))
        except ValueError as error:
            raise SampleError(sampleId, f"Region {index}: {error}") from error

    return DocumentSample(array, tuple(regions), record.get("kv", {}), sampleId)


def loadSamples(path: str, config) -> List[DocumentSample]:
    '''
    Load every sample of a JSON-Lines annotation file, in file order.

    :param path: The annotation file, or a dataset directory containing annotations.jsonl.
    :param config: ModelConfig giving the target image size.
    :returns: The samples.
    '''

    if os.path.isdir(path):
        path = os.path.join(path, ANNOTATION_FILE)

    baseDir = os.path.dirname(os.path.abspath(path))
    samples = []

    with open(path, encoding="utf-8") as annotationFile:
        for lineNumber, line in enumerate(annotationFile, start=1):
            if not line.strip():
                continue

            try:
                record = json.loads(line)
            except json.JSONDecodeError as error:
                raise SampleError(f"line {lineNumber}", f"Malformed JSON: {error}") from error

            samples.append(recordToSample(record, baseDir, config))

    logger.debug(f"Loaded {len(samples)} samples from {path}")

    return samples
