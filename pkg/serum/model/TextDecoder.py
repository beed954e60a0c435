"""
Desc: Autoregressive text decoding over the merged visual context and the query embeddings.
"""

# Core libraries
from dataclasses import dataclass, field
from typing import List, Optional

# External libraries
import torch
import torch.nn as nn
import torch.nn.functional as F

# Custom libraries
from serum.model.SharedDecoder import SharedDecoder


@dataclass
class DecodeState:
    ids: torch.Tensor                     # (B, t) generated ids, starting with BOS
    memory: torch.Tensor                  # (B, K + Nq, d) context rows then query rows
    memory_padding: Optional[torch.Tensor] = None
    hidden: List[torch.Tensor] = field(default_factory=list)

    @property
    def step(self) -> int:
        return self.ids.shape[1]


def buildMemory(context: torch.Tensor, queryContext: torch.Tensor, queryValidity: Optional[torch.Tensor] = None):
    '''
    Cross-attention memory: the merged context rows followed by the query rows.

    :param context: (B, K, d).
    :param queryContext: (B, Nq, d), may have Nq = 0.
    :param queryValidity: (B, Nq) live-row mask, None for all live.
    :returns: The memory and its padding mask (None when nothing is padded).
    '''

    memory = torch.cat([context, queryContext], dim=1)
    if queryValidity is None or bool(queryValidity.all()):
        return memory, None

    contextPadding = torch.zeros(context.shape[:2], dtype=torch.bool, device=context.device)
    return memory, torch.cat([contextPadding, ~queryValidity], dim=1)


class TextDecoder(nn.Module):
    def __init__(self, config, stack: SharedDecoder, textEmbedding: nn.Embedding, vocabulary):
        super().__init__()

        self.maxDecodeLen = config.max_decode_len
        self.stack = stack
        self.textEmbedding = textEmbedding
        self.vocabulary = vocabulary

        self.position = nn.Parameter(torch.zeros(config.max_decode_len + 1, config.embed_dim))
        nn.init.trunc_normal_(self.position, std=0.02)
        self.head = nn.Linear(config.embed_dim, len(vocabulary))

    def startState(self, memory: torch.Tensor, memoryPadding: Optional[torch.Tensor] = None) -> DecodeState:
        ids = torch.full((memory.shape[0], 1), self.vocabulary.BOS_ID, dtype=torch.long, device=memory.device)
        return DecodeState(ids, memory, memoryPadding)

    def logits(self, ids: torch.Tensor, memory: torch.Tensor, memoryPadding: Optional[torch.Tensor] = None):
        '''
        Logits at every position of a (B, T) id prefix, each depending only on ids at or before it.
        '''

        if ids.shape[1] > self.maxDecodeLen:
            raise ValueError(f"Decode length {ids.shape[1]} exceeds max_decode_len {self.maxDecodeLen}")

        x = self.textEmbedding(ids) + self.position[:ids.shape[1]]
        hidden = self.stack(x, memory, causal=True, memoryPadding=memoryPadding)[-1]
        return self.head(hidden), hidden

    def decodeStep(self, state: DecodeState) -> torch.Tensor:
        '''
        Logits for the next token given everything generated so far. The state length counts generated
        tokens, not the leading BOS, and must stay below max_decode_len.

        :returns: (B, V) logits.
        '''

        if state.step - 1 >= self.maxDecodeLen:
            raise ValueError(f"State already holds {state.step - 1} generated tokens, max_decode_len is "
                             f"{self.maxDecodeLen}")

        logits, hidden = self.logits(state.ids, state.memory, state.memory_padding)
        state.hidden.append(hidden[:, -1])

        return logits[:, -1]

    @torch.no_grad()
    def generate(self, memory: torch.Tensor, memoryPadding: Optional[torch.Tensor] = None,
                 maxLen: Optional[int] = None) -> List[List[int]]:
        '''
        Greedy decoding from BOS until EOS or maxLen tokens.

        :returns: Generated ids per batch row, without BOS and with EOS stripped.
        '''

        maxLen = self.maxDecodeLen if maxLen is None else maxLen
        if maxLen > self.maxDecodeLen:
            raise ValueError(f"max_len {maxLen} exceeds max_decode_len {self.maxDecodeLen}")

        state = self.startState(memory, memoryPadding)
        finished = torch.zeros(memory.shape[0], dtype=torch.bool, device=memory.device)
        outputs = [[] for _ in range(memory.shape[0])]

        while state.step - 1 < maxLen and not finished.all():
            nextIds = self.decodeStep(state).argmax(dim=-1)

            for row, tokenId in enumerate(nextIds.tolist()):
                if finished[row]:
                    continue
                if tokenId == self.vocabulary.EOS_ID:
                    finished[row] = True
                else:
                    outputs[row].append(tokenId)

            state.ids = torch.cat([state.ids, nextIds[:, None]], dim=1)

        return outputs

    def teacherForcedNll(self, memory: torch.Tensor, targets: torch.Tensor,
                         memoryPadding: Optional[torch.Tensor] = None) -> torch.Tensor:
        '''
        Summed negative log-likelihood of the targets given the gold prefixes, averaged over the batch.

        :param targets: (B, T) ids, each row ending in EOS and right-padded with PAD.
        '''

        pad, eos = self.vocabulary.PAD_ID, self.vocabulary.EOS_ID
        isPad = targets == pad
        lengths = (~isPad).sum(dim=1)

        if (lengths == 0).any():
            raise ValueError("Decode targets must be non-empty")

        # Padding may only trail the sequence
        positions = torch.arange(targets.shape[1], device=targets.device)
        if (isPad != (positions[None, :] >= lengths[:, None])).any():
            raise ValueError("Decode targets contain interior padding")

        if (targets.gather(1, (lengths - 1)[:, None]) != eos).any():
            raise ValueError("Decode targets must end with EOS")

        bos = torch.full((targets.shape[0], 1), self.vocabulary.BOS_ID, dtype=torch.long, device=targets.device)
        logits, _ = self.logits(torch.cat([bos, targets[:, :-1]], dim=1), memory, memoryPadding)

        nll = F.cross_entropy(logits.transpose(1, 2), targets, ignore_index=pad, reduction="none")
        return nll.sum(dim=1).mean()
