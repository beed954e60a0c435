"""
Desc: Content-aware token merge. Query score masks are pooled onto the token grid, the top-K tokens
become score-weighted foreground, and the rest are folded into the foreground by attention.
"""

# Core libraries
import math
from dataclasses import dataclass
from typing import Optional

# External libraries
import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F


@dataclass
class MergedContext:
    context: torch.Tensor             # (B, K, d)
    foreground_indices: torch.Tensor  # (B, K), descending score
    token_scores: torch.Tensor        # (B, L)
    alpha: float
    k: int
    attention: Optional[torch.Tensor] = None  # (B, K, L - K)


def contextLength(alpha: float, numTokens: int) -> int:
    '''
    K = max(1, round(alpha * L)), rounding half up.
    '''

    if not 0 < alpha <= 1:
        raise ValueError(f"Token keep ratio must lie in (0, 1], got {alpha}")

    return max(1, math.floor(alpha * numTokens + 0.5))


def poolScores(eScore: torch.Tensor, validity: Optional[torch.Tensor], factor: int) -> torch.Tensor:
    '''
    Average every query's score mask over factor x factor blocks, then over the live queries.

    :param eScore: (B, N, s*h, s*w) score masks.
    :param validity: (B, N) live-query mask, None for all live.
    :param factor: Upsample factor s.
    :returns: (B, L) token scores in row-major order.
    '''

    batch, numQueries, height, width = eScore.shape
    if height % factor or width % factor:
        raise ValueError(f"Score grid {height}x{width} is not a multiple of the upsample factor {factor}")

    if validity is None:
        validity = torch.ones(batch, numQueries, dtype=torch.bool, device=eScore.device)

    live = validity.to(eScore.dtype)
    if (live.sum(dim=1) == 0).any():
        raise ValueError("Cannot pool scores without a live query")

    pooled = F.avg_pool2d(eScore, kernel_size=factor, stride=factor)
    pooled = (pooled * live[:, :, None, None]).sum(dim=1) / live.sum(dim=1)[:, None, None]

    return pooled.flatten(1)


def selectForeground(tokens: torch.Tensor, tokenScores: torch.Tensor, alpha: float):
    '''
    Keep the top-K tokens, weighted by their scores. Equal scores favor the lower token index.

    :param tokens: (B, L, d) visual tokens z.
    :param tokenScores: (B, L) pooled scores.
    :param alpha: Token keep ratio.
    :returns: F_f (B, K, d), foreground indices (B, K) in descending score order, and the remaining
        raw tokens f_r (B, L - K, d) in ascending index order.
    '''

    if not torch.isfinite(tokenScores).all():
        raise ValueError("Token scores contain non-finite values")

    numTokens = tokens.shape[1]
    if numTokens < 1 or tokenScores.shape != tokens.shape[:2]:
        raise ValueError(f"Scores of shape {tuple(tokenScores.shape)} do not match tokens {tuple(tokens.shape)}")

    k = contextLength(alpha, numTokens)
    order = torch.sort(tokenScores, dim=1, descending=True, stable=True).indices
    foreground = order[:, :k]
    background = torch.sort(order[:, k:], dim=1).values

    width = tokens.shape[2]
    foregroundTokens = torch.gather(tokens, 1, foreground[:, :, None].expand(-1, -1, width))
    foregroundTokens = foregroundTokens * torch.gather(tokenScores, 1, foreground)[:, :, None]
    backgroundTokens = torch.gather(tokens, 1, background[:, :, None].expand(-1, -1, width))

    return foregroundTokens, foreground, backgroundTokens


def mergeBackground(foreground: torch.Tensor, background: torch.Tensor, valueWeight: torch.Tensor):
    '''
    Fold the background tokens into the foreground slots: softmax(F_f f_r^T / sqrt(d)) (f_r W_v^T).

    :returns: F_b (B, K, d) and the attention weights (B, K, L - K). Without background tokens F_b is zero.
    '''

    if background.shape[1] == 0:
        return torch.zeros_like(foreground), foreground.new_zeros(foreground.shape[0], foreground.shape[1], 0)

    attention = torch.softmax(foreground @ background.transpose(1, 2) / math.sqrt(foreground.shape[-1]), dim=-1)
    return attention @ (background @ valueWeight.T), attention


def fuse(foreground: torch.Tensor, background: torch.Tensor) -> torch.Tensor:
    if foreground.shape != background.shape:
        raise ValueError(f"Cannot fuse {tuple(foreground.shape)} with {tuple(background.shape)}")

    return foreground + background


def sampleAlpha(rng: np.random.Generator, training: bool, fixedAlpha: Optional[float] = None,
                alphaMin: float = 0.02, alphaMax: float = 1.0) -> float:
    '''
    Token keep ratio for one optimization step or one inference call.

    :param rng: Random source, drawn from once per call when training.
    :param training: Draw uniformly from [alphaMin, alphaMax] if set, else return fixedAlpha.
    :param fixedAlpha: The inference ratio.
    '''

    if training:
        return float(rng.uniform(alphaMin, alphaMax))

    if fixedAlpha is None:
        raise ValueError("Inference needs a fixed token keep ratio")

    if not 0 < fixedAlpha <= 1:
        raise ValueError(f"Token keep ratio must lie in (0, 1], got {fixedAlpha}")

    return float(fixedAlpha)


class TokenMerge(nn.Module):
    def __init__(self, config):
        super().__init__()

        self.factor = config.upsample_factor
        self.valueProjection = nn.Linear(config.embed_dim, config.embed_dim, bias=False)

    def fromScores(self, tokens: torch.Tensor, tokenScores: torch.Tensor, alpha: float) -> MergedContext:
        foreground, indices, background = selectForeground(tokens, tokenScores, alpha)
        folded, attention = mergeBackground(foreground, background, self.valueProjection.weight)

        return MergedContext(fuse(foreground, folded), indices, tokenScores, alpha, indices.shape[1], attention)

    def forward(self, tokens: torch.Tensor, eScore: torch.Tensor, validity: Optional[torch.Tensor],
                alpha: float) -> MergedContext:
        '''
        :param tokens: (B, L, d) visual tokens.
        :param eScore: (B, N, s*h, s*w) query score masks.
        :returns: The merged context shared by every decode stream of the document.
        '''

        return self.fromScores(tokens, poolScores(eScore, validity, self.factor), alpha)
