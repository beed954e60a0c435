"""
Desc: The one transformer decoder stack both the query decoder and the text decoder run through.
"""

# Core libraries
from typing import List, Optional

# External libraries
import torch
import torch.nn as nn


class DecoderLayer(nn.Module):
    def __init__(self, dim: int, numHeads: int, mlpRatio: float):
        super().__init__()

        self.selfAttention = nn.MultiheadAttention(dim, numHeads, batch_first=True)
        self.crossAttention = nn.MultiheadAttention(dim, numHeads, batch_first=True)
        self.feedForward = nn.Sequential(nn.Linear(dim, int(dim * mlpRatio)), nn.GELU(),
                                         nn.Linear(int(dim * mlpRatio), dim))
        self.norm1 = nn.LayerNorm(dim)
        self.norm2 = nn.LayerNorm(dim)
        self.norm3 = nn.LayerNorm(dim)

    def forward(self, x, memory, selfMask=None, selfPadding=None, memoryPadding=None):
        h = self.norm1(x)
        x = x + self.selfAttention(h, h, h, attn_mask=selfMask, key_padding_mask=selfPadding, need_weights=False)[0]

        h = self.norm2(x)
        x = x + self.crossAttention(h, memory, memory, key_padding_mask=memoryPadding, need_weights=False)[0]

        return x + self.feedForward(self.norm3(x))


class SharedDecoder(nn.Module):
    '''
    Pre-norm decoder stack with two usage modes. Query mode lets every live query attend to every other
    live query; text mode applies a causal mask. Cross-attention always reads the supplied memory.
    '''

    def __init__(self, dim: int, numLayers: int, numHeads: int, mlpRatio: float):
        super().__init__()

        self.layers = nn.ModuleList([DecoderLayer(dim, numHeads, mlpRatio) for _ in range(numLayers)])
        self.norm = nn.LayerNorm(dim)

    @staticmethod
    def causalMask(length: int, device=None) -> torch.Tensor:
        return torch.ones(length, length, dtype=torch.bool, device=device).triu(1)

    def forward(self, x: torch.Tensor, memory: torch.Tensor, causal: bool = False,
                selfPadding: Optional[torch.Tensor] = None,
                memoryPadding: Optional[torch.Tensor] = None) -> List[torch.Tensor]:
        '''
        Run the stack.

        :param x: (B, T, d) inputs, queries or embedded text.
        :param memory: (B, M, d) cross-attention keys and values.
        :param causal: Whether position t may only attend to positions <= t.
        :param selfPadding: (B, T) True where a position is padding and must not be attended to.
        :param memoryPadding: (B, M) True where a memory row is padding.
        :returns: The normalized output of every layer, first to last.
        '''

        if x.shape[-1] != memory.shape[-1]:
            raise ValueError(f"Input width {x.shape[-1]} does not match memory width {memory.shape[-1]}")

        selfMask = self.causalMask(x.shape[1], x.device) if causal else None
        outputs = []
        for layer in self.layers:
            x = layer(x, memory, selfMask, selfPadding, memoryPadding)
            outputs.append(self.norm(x))

        return outputs
