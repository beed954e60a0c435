'''
Query embedding, the shared decoder stack and mask prediction.
'''

# External libraries
import pytest
import torch

# Custom libraries
from serum.model.QueryDecoder import SCORE_EPS, QuerySpec, predictMasks


def testQuerySpecValidation():
    with pytest.raises(ValueError):
        QuerySpec("keyword", "total")

    with pytest.raises(ValueError):
        QuerySpec.ofText("")

    assert QuerySpec.slot().kind == QuerySpec.SLOT


def testPredictMasksClosedForm():
    pixel = torch.zeros(1, 2, 2, 3)
    eMask = torch.ones(1, 1, 3)

    assert torch.allclose(predictMasks(pixel, eMask), torch.full((1, 1, 2, 2), 0.5))


def testPredictMasksStayInsideUnitInterval():
    pixel = torch.full((1, 2, 2, 1), 100.0)
    scores = predictMasks(pixel, torch.tensor([[[1.0], [-1.0]]]))

    assert float(scores.max()) < 1.0
    assert float(scores.min()) >= SCORE_EPS / 2


def testPredictMasksGradient():
    pixel = torch.randn(1, 3, 2, 4, dtype=torch.float64, requires_grad=True)
    eMask = (torch.randn(1, 2, 4, dtype=torch.float64) * 0.3).requires_grad_()

    assert torch.autograd.gradcheck(predictMasks, (pixel, eMask), eps=1e-6, atol=1e-5, rtol=1e-4)


def testEmptyQueryListMakesEverySlotLive(tinyModel):
    queries, validity = tinyModel.queryDecoder.embedQueries([])

    assert tuple(queries.shape) == (4, 8)
    assert validity.all()


def testTextQueriesPadWithDeadSlots(tinyModel):
    queries, validity = tinyModel.queryDecoder.embedQueries([QuerySpec.ofText("total"), QuerySpec.ofTask("receipt")])

    assert validity.tolist() == [True, True, False, False]
    assert torch.equal(queries[2:], tinyModel.queryDecoder.slots[2:])


def testTooManyQueriesAreRefused(tinyModel):
    with pytest.raises(ValueError, match="exceed"):
        tinyModel.queryDecoder.embedQueries([QuerySpec.ofText("k")] * 5)


def testBundleShapes(tinyModel, tinyConfig):
    _, bundle = tinyModel.queries(torch.rand(2, 32, 32, 3), [[], [QuerySpec.ofText("total")]])

    assert tuple(bundle.q.shape) == (2, 4, 8)
    assert tuple(bundle.class_logits.shape) == (2, 4, 2)
    assert tuple(bundle.e_score.shape) == (2, 4, tinyConfig.pixel_height, tinyConfig.pixel_width)
    assert len(bundle.per_layer_e_score) == tinyConfig.decoder_layers
    assert torch.equal(bundle.per_layer_e_score[-1], bundle.e_score)
    assert bundle.validity.tolist() == [[True] * 4, [True, False, False, False]]
    assert tuple(bundle.liveRows(1).shape) == (1, 8)


def testDeadSlotsDoNotReachLiveQueries(tinyModel):
    tinyModel.eval()
    image = torch.rand(1, 32, 32, 3)
    features = tinyModel.encode(image)

    queries, validity = tinyModel.queryDecoder.embedBatch([[QuerySpec.ofText("total")]])
    pixel = tinyModel.upsampleAndPosition(features)
    first = tinyModel.queryDecoder(features, queries, validity, pixel)

    changed = queries.clone()
    changed[:, 1:] = torch.randn_like(changed[:, 1:]) * 10
    second = tinyModel.queryDecoder(features, changed, validity, pixel)

    assert torch.allclose(first.q[:, 0], second.q[:, 0], atol=1e-6)
    assert torch.allclose(first.e_score[:, 0], second.e_score[:, 0], atol=1e-6)


def testDocumentWithoutLiveQueryIsRefused(tinyModel):
    features = tinyModel.encode(torch.rand(1, 32, 32, 3))
    queries, _ = tinyModel.queryDecoder.embedBatch([[]])

    with pytest.raises(ValueError, match="live query"):
        tinyModel.queryDecoder(features, queries, torch.zeros(1, 4, dtype=torch.bool),
                               tinyModel.upsampleAndPosition(features))


def testQueryDecodingFollowsSlotOrder(tinyModel):
    tinyModel.eval()
    features = tinyModel.encode(torch.rand(1, 32, 32, 3))
    order = torch.tensor([2, 0, 3, 1])

    first = tinyModel.decodeQueries(features, [[]])
    with torch.no_grad():
        tinyModel.queryDecoder.slots.copy_(tinyModel.queryDecoder.slots[order].clone())
    second = tinyModel.decodeQueries(features, [[]])

    assert torch.allclose(second.q, first.q[:, order], atol=1e-5)
    assert torch.allclose(second.e_score, first.e_score[:, order], atol=1e-5)
    assert torch.allclose(second.class_logits, first.class_logits[:, order], atol=1e-5)


def testDecodersShareOneStack(tinyModel, vocabulary):
    queryDecoder, textDecoder = tinyModel.queryDecoder, tinyModel.textDecoder
    assert queryDecoder.stack is textDecoder.stack
    assert queryDecoder.textEmbedding is textDecoder.textEmbedding

    tinyModel.eval()
    memory = torch.randn(1, 3, 8)
    ids = torch.tensor([vocabulary.encodeText("AB")])
    before, _ = textDecoder.logits(ids, memory)

    with torch.no_grad():
        queryDecoder.stack.layers[0].feedForward[0].weight.mul_(3.0)
    after, _ = textDecoder.logits(ids, memory)

    assert not torch.allclose(before, after)
