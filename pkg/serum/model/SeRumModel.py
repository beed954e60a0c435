"""
Desc: The end-to-end document model: encoder, pixel upsampler, query decoder, token merge and text
decoder, with the decoder stack and text embedding shared between the two decoders.
"""

# Core libraries
import logging
from typing import List, Optional, Sequence

# External libraries
import torch
import torch.nn as nn

# Custom libraries
from serum.model.QueryDecoder import QueryBundle, QueryDecoder, QuerySpec
from serum.model.SharedDecoder import SharedDecoder
from serum.model.TextDecoder import TextDecoder, buildMemory
from serum.model.TokenMerge import MergedContext, TokenMerge
from serum.model.VisionEncoder import FeatureMap, PixelUpsampler, VisionEncoder

logger = logging.getLogger(__name__)


class SeRumModel(nn.Module):
    def __init__(self, config, vocabulary):
        '''
        :param config: ModelConfig.
        :param vocabulary: Vocabulary with every key and task prompt the model will see already registered.
        '''

        super().__init__()

        self.config = config
        self.vocabulary = vocabulary

        self.encoder = VisionEncoder(config)
        self.upsampler = PixelUpsampler(config)

        stack = SharedDecoder(config.embed_dim, config.decoder_layers, config.decoder_heads, config.mlp_ratio)
        textEmbedding = nn.Embedding(len(vocabulary), config.embed_dim)
        nn.init.trunc_normal_(textEmbedding.weight, std=0.02)

        self.queryDecoder = QueryDecoder(config, stack, textEmbedding, vocabulary)
        self.textDecoder = TextDecoder(config, stack, textEmbedding, vocabulary)
        self.tokenMerge = TokenMerge(config)

        logger.debug(f"Built model with {sum(p.numel() for p in self.parameters())} parameters")

    def encode(self, images: torch.Tensor) -> FeatureMap:
        return self.encoder(images)

    def upsampleAndPosition(self, features: FeatureMap) -> torch.Tensor:
        return self.upsampler(features)

    def decodeQueries(self, features: FeatureMap, batchQueries: Sequence[Sequence[QuerySpec]]) -> QueryBundle:
        '''
        Embed each document's queries and decode them against its features.

        :param batchQueries: One list of query specs per document in the batch.
        '''

        queries, validity = self.queryDecoder.embedBatch(batchQueries)
        return self.queryDecoder(features, queries, validity, self.upsampleAndPosition(features))

    def queries(self, images: torch.Tensor, batchQueries: Sequence[Sequence[QuerySpec]]):
        features = self.encode(images)
        return features, self.decodeQueries(features, batchQueries)

    def merge(self, features: FeatureMap, bundle: QueryBundle, alpha: float) -> MergedContext:
        return self.tokenMerge(features.tokens, bundle.e_score, bundle.validity, alpha)

    def memoryFor(self, merged: MergedContext, bundle: QueryBundle, rows: Optional[List[int]] = None):
        '''
        Cross-attention memory for text decoding: the merged context plus the live query rows,
        or only the query rows listed in rows.
        '''

        if rows is None:
            return buildMemory(merged.context, bundle.q, bundle.validity)

        index = torch.as_tensor(rows, dtype=torch.long, device=bundle.q.device)
        return buildMemory(merged.context, bundle.q[:, index])

    def generate(self, memory: torch.Tensor, memoryPadding: Optional[torch.Tensor] = None,
                 maxLen: Optional[int] = None) -> List[List[int]]:
        return self.textDecoder.generate(memory, memoryPadding, maxLen)

    def teacherForcedNll(self, memory: torch.Tensor, targets: torch.Tensor,
                         memoryPadding: Optional[torch.Tensor] = None) -> torch.Tensor:
        return self.textDecoder.teacherForcedNll(memory, targets, memoryPadding)
