"""
Desc: Shared driver for the ways a fine-tuned model turns a document into key-value output.
Subclasses decide which queries are asked, how many decode streams run and what each stream emits.
"""

# Core libraries
import time
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

# External libraries
import numpy as np
import torch

# Custom libraries
from serum.DocumentSample import DocumentSample
from serum.evaluation.KvTree import KvTree
from serum.model.QueryDecoder import QuerySpec
from serum.model.TokenMerge import sampleAlpha
from serum.training.Losses import textConstraintLoss
from serum.training.PretrainBatch import imageBatch
from serum.training.Trainer import padTargets


@dataclass
class ExtractionResult:
    kv: KvTree
    field_tokens: Dict[str, List[int]] = field(default_factory=dict)
    malformed: bool = False


@dataclass
class ExtractionBatch:
    results: List[ExtractionResult]
    merged: object
    bundle: object
    decode_seconds: float


class GenerationManner(ABC):
    NAME = None

    def __init__(self, config, vocabulary):
        self.config = config
        self.vocabulary = vocabulary

    @abstractmethod
    def defaultAlpha(self) -> float:
        pass

    @abstractmethod
    def buildQueries(self, keys: Sequence[str]) -> List[QuerySpec]:
        '''
        The query specs asked of every document.
        '''
        pass

    @abstractmethod
    def streamRows(self, keys: Sequence[str]) -> List[List[int]]:
        '''
        For every decode stream, the query rows its cross-attention sees next to the merged context.
        '''
        pass

    @abstractmethod
    def streamTargets(self, sample: DocumentSample, keys: Sequence[str]) -> List[List[int]]:
        '''
        Gold ids of every decode stream, each ending with EOS.
        '''
        pass

    @abstractmethod
    def assemble(self, keys: Sequence[str], streams: Sequence[List[int]]) -> ExtractionResult:
        pass

    def checkKeys(self, keys: Sequence[str]) -> None:
        if not keys:
            raise ValueError("At least one key is needed")

        if len(set(keys)) != len(keys):
            raise ValueError(f"Keys must be unique, got {list(keys)}")

    def withEos(self, ids: List[int]) -> List[int]:
        # Longer targets are cut so EOS always fits
        return list(ids[:self.config.max_decode_len - 1]) + [self.vocabulary.EOS_ID]

    def valueRegions(self, sample: DocumentSample) -> List[int]:
        '''
        Regions whose transcript carries one of the ground-truth values, the area the decoder should read.
        '''

        indices = {sample.valueRegionIndex(value) for _, value in sample.flatValues()}
        return sorted(index for index in indices if index is not None)

    def trainingLoss(self, model, samples: Sequence[DocumentSample], alpha: float):
        '''
        Decoder and text-area losses of one fine-tuning batch.

        :returns: (l_decoder, l_text) tensors.
        '''

        keys = list(self.config.keys)
        device = next(model.parameters()).device
        images = imageBatch(samples, device)

        features, bundle = model.queries(images, [self.buildQueries(keys)] * len(samples))
        merged = model.merge(features, bundle, alpha)

        memories, targets = [], []
        sampleTargets = [self.streamTargets(sample, keys) for sample in samples]
        for stream, rows in enumerate(self.streamRows(keys)):
            memory, _ = model.memoryFor(merged, bundle, rows)
            memories.append(memory)
            targets.extend(perSample[stream] for perSample in sampleTargets)

        lDecoder = model.teacherForcedNll(torch.cat(memories), padTargets(targets, self.vocabulary.PAD_ID).to(device))

        textMask = np.stack([sample.textAreaMask(self.config.pixel_height, self.config.pixel_width,
                                                 self.valueRegions(sample)) for sample in samples])
        lText = textConstraintLoss(bundle.e_score, torch.as_tensor(textMask, device=device), bundle.validity)

        return lDecoder, lText

    @torch.no_grad()
    def extractBatch(self, model, images: torch.Tensor, keys: Optional[Sequence[str]] = None,
                     alpha: Optional[float] = None) -> ExtractionBatch:
        '''
        One encoder and query decoder pass for the batch, one merged context per document, then every
        decode stream.

        :param images: (B, H, W, C) images.
        :param keys: Keys to extract, defaults to the configured schema.
        :param alpha: Token keep ratio, defaults to the manner's inference ratio.
        '''

        keys = list(self.config.keys if keys is None else keys)
        self.checkKeys(keys)
        alpha = sampleAlpha(None, training=False, fixedAlpha=self.defaultAlpha() if alpha is None else alpha)

        if images.dim() == 3:
            images = images.unsqueeze(0)

        features, bundle = model.queries(images, [self.buildQueries(keys)] * images.shape[0])
        merged = model.merge(features, bundle, alpha)

        decodeSeconds = 0.0
        streams = []
        for rows in self.streamRows(keys):
            memory, padding = model.memoryFor(merged, bundle, rows)
            start = time.perf_counter()
            streams.append(model.generate(memory, padding))
            decodeSeconds += time.perf_counter() - start

        results = [self.assemble(keys, [stream[row] for stream in streams]) for row in range(images.shape[0])]
        return ExtractionBatch(results, merged, bundle, decodeSeconds)

    def extract(self, model, image: torch.Tensor, keys: Optional[Sequence[str]] = None,
                alpha: Optional[float] = None) -> ExtractionResult:
        return self.extractBatch(model, image, keys, alpha).results[0]
