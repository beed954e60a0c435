'''
Token keep length, score pooling, foreground selection and the background fold.
'''

# External libraries
import numpy as np
import pytest
import torch

# Custom libraries
from serum.model.TokenMerge import (TokenMerge, contextLength, fuse, mergeBackground, poolScores, sampleAlpha,
                                    selectForeground)


@pytest.mark.parametrize("alpha, numTokens, expected", [
    (0.1, 64, 6),
    (0.02, 64, 1),
    (0.5, 5, 3),
    (1.0, 64, 64),
    (0.001, 10, 1),
])
def testContextLength(alpha, numTokens, expected):
    assert contextLength(alpha, numTokens) == expected


@pytest.mark.parametrize("alpha", [0.0, -0.1, 1.5])
def testContextLengthRefusesBadRatio(alpha):
    with pytest.raises(ValueError):
        contextLength(alpha, 16)


def testPoolScoresAveragesBlocksAndLiveQueries():
    eScore = torch.zeros(1, 2, 4, 4)
    eScore[0, 0, :2, :2] = 1.0
    eScore[0, 1] = 0.5

    pooled = poolScores(eScore, torch.tensor([[True, True]]), 2)
    assert torch.allclose(pooled, torch.tensor([[0.75, 0.25, 0.25, 0.25]]))

    deadSecond = poolScores(eScore, torch.tensor([[True, False]]), 2)
    assert torch.allclose(deadSecond, torch.tensor([[1.0, 0.0, 0.0, 0.0]]))


def testPoolScoresRefusesMisalignedGrid():
    with pytest.raises(ValueError):
        poolScores(torch.zeros(1, 1, 5, 4), None, 2)

    with pytest.raises(ValueError, match="live query"):
        poolScores(torch.zeros(1, 1, 4, 4), torch.tensor([[False]]), 2)


def testFullRatioKeepsEveryTokenInScoreOrder(tinyConfig):
    merge = TokenMerge(tinyConfig)
    generator = torch.Generator().manual_seed(0)
    for _ in range(100):
        tokens = torch.randn(1, 9, 8, generator=generator)
        scores = torch.rand(1, 9, generator=generator)

        merged = merge.fromScores(tokens, scores, 1.0)
        order = torch.argsort(scores, dim=1, descending=True)

        assert merged.k == 9
        assert torch.equal(merged.foreground_indices, order)
        assert torch.equal(merged.context, tokens[0, order[0]][None] * scores[0, order[0]][None, :, None])


def testEqualScoresFavorLowerIndex():
    tokens = torch.arange(6, dtype=torch.float32).reshape(1, 6, 1)
    scores = torch.tensor([[0.2, 0.5, 0.5, 0.1, 0.5, 0.2]])

    _, indices, background = selectForeground(tokens, scores, 0.5)

    assert indices.tolist() == [[1, 2, 4]]
    assert background[0, :, 0].tolist() == [0.0, 3.0, 5.0]


def testForegroundFollowsTokensUnderPermutation():
    generator = torch.Generator().manual_seed(2)
    tokens = torch.randn(1, 12, 4, generator=generator)
    scores = torch.rand(1, 12, generator=generator)
    order = torch.randperm(12, generator=generator)

    foreground, indices, _ = selectForeground(tokens, scores, 0.25)
    shuffled, shuffledIndices, _ = selectForeground(tokens[:, order], scores[:, order], 0.25)

    assert torch.allclose(shuffled, foreground)
    assert torch.equal(order[shuffledIndices], indices)


def testNonFiniteScoresAreRefused():
    with pytest.raises(ValueError, match="non-finite"):
        selectForeground(torch.zeros(1, 2, 2), torch.tensor([[0.5, float("nan")]]), 0.5)


def testBackgroundFoldIsZeroWithoutBackground():
    foreground = torch.randn(2, 3, 4)
    folded, attention = mergeBackground(foreground, foreground[:, :0], torch.eye(4))

    assert torch.equal(folded, torch.zeros_like(foreground))
    assert tuple(attention.shape) == (2, 3, 0)


def testBackgroundFoldAttentionRowsSumToOne():
    folded, attention = mergeBackground(torch.randn(1, 2, 4), torch.randn(1, 5, 4), torch.eye(4))

    assert tuple(folded.shape) == (1, 2, 4)
    assert torch.allclose(attention.sum(dim=-1), torch.ones(1, 2))


def testSingleBackgroundTokenIsCopied():
    background = torch.randn(1, 1, 4)
    folded, _ = mergeBackground(torch.randn(1, 3, 4), background, torch.eye(4))

    assert torch.allclose(folded, background.expand(1, 3, 4))


def testFuseRefusesMismatchedShapes():
    with pytest.raises(ValueError):
        fuse(torch.zeros(1, 2, 4), torch.zeros(1, 3, 4))


def testMergeChainGradient():
    torch.manual_seed(0)
    valueWeight = torch.randn(4, 4, dtype=torch.float64, requires_grad=True)
    tokens = torch.randn(1, 4, 4, dtype=torch.float64, requires_grad=True)
    eScore = torch.tensor([[[[0.9, 0.8, 0.3, 0.2],
                             [0.7, 0.6, 0.1, 0.15],
                             [0.4, 0.35, 0.5, 0.45],
                             [0.3, 0.25, 0.55, 0.6]]]], dtype=torch.float64, requires_grad=True)

    def chain(tokens, eScore, valueWeight):
        foreground, _, background = selectForeground(tokens, poolScores(eScore, None, 2), 0.5)
        folded, _ = mergeBackground(foreground, background, valueWeight)
        return fuse(foreground, folded)

    assert torch.autograd.gradcheck(chain, (tokens, eScore, valueWeight), eps=1e-6, atol=1e-5, rtol=1e-4)


def testTokenMergeModule(tinyConfig):
    merge = TokenMerge(tinyConfig)
    tokens = torch.randn(2, 16, 8)
    eScore = torch.rand(2, 4, 8, 8)

    merged = merge(tokens, eScore, None, 0.25)

    assert merged.k == 4
    assert tuple(merged.context.shape) == (2, 4, 8)
    assert tuple(merged.foreground_indices.shape) == (2, 4)
    assert tuple(merged.token_scores.shape) == (2, 16)
    assert tuple(merged.attention.shape) == (2, 4, 12)


def testSampleAlpha():
    rng = np.random.default_rng(0)
    draws = [sampleAlpha(rng, True, alphaMin=0.02, alphaMax=1.0) for _ in range(500)]

    assert all(0.02 <= draw <= 1.0 for draw in draws)
    assert sampleAlpha(rng, False, 0.3) == 0.3

    with pytest.raises(ValueError):
        sampleAlpha(rng, False)

    with pytest.raises(ValueError):
        sampleAlpha(rng, False, 0.0)


def testSampleAlphaMean():
    rng = np.random.default_rng(1)
    draws = [sampleAlpha(rng, True, alphaMin=0.02, alphaMax=1.0) for _ in range(10000)]

    assert np.mean(draws) == pytest.approx(0.51, abs=0.02)


def testSampleAlphaLeavesRngUntouchedAtInference():
    first, second = np.random.default_rng(5), np.random.default_rng(5)
    sampleAlpha(first, False, 0.5)

    assert first.random() == second.random()
