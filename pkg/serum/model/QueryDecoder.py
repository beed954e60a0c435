"""
Desc: Turns query specs into query vectors and decodes them against the visual tokens into segment
embeddings, mask embeddings, class logits and score masks.
"""

# Core libraries
from dataclasses import dataclass
from typing import List, Optional, Sequence

# External libraries
import torch
import torch.nn as nn

# Custom libraries
from serum.model.SharedDecoder import SharedDecoder
from serum.model.VisionEncoder import FeatureMap

# Constants
TEXT_CLASS = 0
NO_OBJECT_CLASS = 1
NUM_CLASSES = 1
SCORE_EPS = 1e-6


@dataclass(frozen=True)
class QuerySpec:
    kind: str
    text: str = ""

    SLOT = "slot"
    TEXT = "text"
    TASK = "task"

    def __post_init__(self):
        if self.kind not in (self.SLOT, self.TEXT, self.TASK):
            raise ValueError(f"Unknown query kind '{self.kind}'")

        if self.kind != self.SLOT and not self.text:
            raise ValueError("Text and task queries must be non-empty")

    @classmethod
    def slot(cls) -> "QuerySpec":
        return cls(cls.SLOT)

    @classmethod
    def ofText(cls, text: str) -> "QuerySpec":
        return cls(cls.TEXT, text)

    @classmethod
    def ofTask(cls, taskName: str) -> "QuerySpec":
        return cls(cls.TASK, taskName)


@dataclass
class QueryBundle:
    q: torch.Tensor                      # (B, N, d)
    e_mask: torch.Tensor                 # (B, N, d)
    class_logits: torch.Tensor           # (B, N, NUM_CLASSES + 1)
    e_score: torch.Tensor                # (B, N, sh, sw)
    per_layer_e_mask: List[torch.Tensor]
    per_layer_e_score: List[torch.Tensor]
    validity: torch.Tensor               # (B, N) bool

    def liveRows(self, batchIndex: int) -> torch.Tensor:
        return self.q[batchIndex][self.validity[batchIndex]]


def predictMasks(pixelEmbedding: torch.Tensor, eMask: torch.Tensor) -> torch.Tensor:
    '''
    Score masks from the dot product of every pixel embedding with every mask embedding.

    :param pixelEmbedding: (B, sh, sw, d).
    :param eMask: (B, N, d).
    :returns: (B, N, sh, sw) sigmoid scores, kept strictly inside (0, 1).
    '''

    if pixelEmbedding.shape[-1] != eMask.shape[-1]:
        raise ValueError(f"Pixel width {pixelEmbedding.shape[-1]} does not match mask embedding width {eMask.shape[-1]}")

    scores = torch.sigmoid(torch.einsum("bhwd,bnd->bnhw", pixelEmbedding, eMask))
    return scores.clamp(SCORE_EPS, 1 - SCORE_EPS)


class QueryDecoder(nn.Module):
    def __init__(self, config, stack: SharedDecoder, textEmbedding: nn.Embedding, vocabulary):
        '''
        :param stack: The decoder stack, shared with the text decoder.
        :param textEmbedding: The text embedding table, shared with the text decoder.
        '''

        super().__init__()

        self.numQueries = config.num_queries
        self.stack = stack
        self.textEmbedding = textEmbedding
        self.vocabulary = vocabulary

        self.slots = nn.Parameter(torch.zeros(config.num_queries, config.query_channel))
        nn.init.trunc_normal_(self.slots, std=0.02)

        self.maskHead = nn.Linear(config.embed_dim, config.embed_dim)
        self.classHead = nn.Linear(config.embed_dim, NUM_CLASSES + 1)

    def embedText(self, tokenIds: Sequence[int]) -> torch.Tensor:
        ids = torch.tensor(list(tokenIds), dtype=torch.long, device=self.slots.device)
        return self.textEmbedding(ids).mean(dim=0)

    def embedQueries(self, queries: Sequence[QuerySpec]):
        '''
        Build the N query vectors for one document.

        :param queries: At most N specs. An empty list means every learnable slot is live.
        :returns: (N, C_Q) query vectors and the (N,) validity mask.
        '''

        if len(queries) > self.numQueries:
            raise ValueError(f"{len(queries)} queries exceed the {self.numQueries} available slots")

        if not queries:
            return self.slots, torch.ones(self.numQueries, dtype=torch.bool, device=self.slots.device)

        rows = []
        for index, query in enumerate(queries):
            if query.kind == QuerySpec.SLOT:
                rows.append(self.slots[index])
            elif query.kind == QuerySpec.TASK:
                rows.append(self.embedText([self.vocabulary.tokenId(self.vocabulary.promptTag(query.text))]))
            else:
                rows.append(self.embedText(self.vocabulary.encodeText(query.text)))

        # Unused slots keep their learnable parameters but are masked out everywhere
        rows.extend(self.slots[len(queries):])
        validity = torch.zeros(self.numQueries, dtype=torch.bool, device=self.slots.device)
        validity[:len(queries)] = True

        return torch.stack(rows), validity

    def embedBatch(self, batchQueries: Sequence[Sequence[QuerySpec]]):
        embedded = [self.embedQueries(queries) for queries in batchQueries]
        return torch.stack([rows for rows, _ in embedded]), torch.stack([validity for _, validity in embedded])

    def forward(self, features: FeatureMap, queries: torch.Tensor, validity: Optional[torch.Tensor],
                pixelEmbedding: torch.Tensor) -> QueryBundle:
        '''
        Decode queries against the visual tokens.

        :param features: Encoder output.
        :param queries: (B, N, C_Q) query vectors.
        :param validity: (B, N) live-slot mask, None for all live.
        :param pixelEmbedding: (B, sh, sw, d) upsampled pixel embedding.
        :returns: The query bundle.
        '''

        if queries.dim() != 3 or queries.shape[0] != features.grid.shape[0]:
            raise ValueError(f"Queries of shape {tuple(queries.shape)} do not match a batch of "
                             f"{features.grid.shape[0]} feature maps")

        if validity is None:
            validity = torch.ones(queries.shape[:2], dtype=torch.bool, device=queries.device)

        if not validity.any(dim=1).all():
            raise ValueError("Every document needs at least one live query")

        layerOutputs = self.stack(queries, features.tokens, causal=False, selfPadding=~validity)

        perLayerMask = [self.maskHead(output) for output in layerOutputs]
        perLayerScore = [predictMasks(pixelEmbedding, eMask) for eMask in perLayerMask]

        return QueryBundle(
            q=layerOutputs[-1],
            e_mask=perLayerMask[-1],
            class_logits=self.classHead(layerOutputs[-1]),
            e_score=perLayerScore[-1],
            per_layer_e_mask=perLayerMask,
            per_layer_e_score=perLayerScore,
            validity=validity,
        )
