'''
Key-value trees, the total codec and the evaluation metrics.
'''

# Core libraries
import random
from functools import lru_cache

# External libraries
import numpy as np
import pytest

# Custom libraries
from serum.evaluation.GenerationCodec import parseTotal, serializeTotal
from serum.evaluation.KvTree import LEAF, KvTree
from serum.evaluation.Metrics import anls, fieldAnls, fieldF1, maskIou, sampleMetrics, summarize, tedAccuracy
from serum.evaluation.TreeEditDistance import treeEditDistance
from serum.Vocabulary import Vocabulary

KEYS = ("k0", "k1", "k2", "k3")
LETTERS = "AB12.<>"


def levenshtein(a: str, b: str) -> int:
    previous = list(range(len(b) + 1))
    for i, charA in enumerate(a, 1):
        current = [i]
        for j, charB in enumerate(b, 1):
            current.append(min(previous[j] + 1, current[j - 1] + 1, previous[j - 1] + (charA != charB)))
        previous = current
    return previous[-1]


def asForest(tree: KvTree):
    def build(node):
        kind = LEAF if tree.isLeaf(node) else "key"
        return ((kind, tree.label(node)), tuple(build(child) for child in tree.children(node)))

    return (build(0),)


def relabelCost(a, b) -> float:
    if a[0] != b[0]:
        return 1.0
    if a[0] == LEAF:
        longest = max(len(a[1]), len(b[1]))
        return 0.0 if longest == 0 else levenshtein(a[1], b[1]) / longest
    return 0.0 if a[1] == b[1] else 1.0


@lru_cache(maxsize=None)
def forestDistance(first, second) -> float:
    '''
    Ordered forest edit distance by removing the rightmost roots.
    '''

    if not first and not second:
        return 0.0
    if not second:
        return forestDistance(first[:-1] + first[-1][1], second) + 1.0
    if not first:
        return forestDistance(first, second[:-1] + second[-1][1]) + 1.0

    (labelA, childrenA), (labelB, childrenB) = first[-1], second[-1]
    return min(
        forestDistance(first[:-1] + childrenA, second) + 1.0,
        forestDistance(first, second[:-1] + childrenB) + 1.0,
        forestDistance(first[:-1], second[:-1]) + forestDistance(childrenA, childrenB) + relabelCost(labelA, labelB),
    )


def randomKv(rng: random.Random, depth: int = 0) -> dict:
    kv = {}
    for key in rng.sample(KEYS, rng.randint(1, 3 if depth == 0 else 2)):
        if depth < 2 and rng.random() < 0.3:
            kv[key] = randomKv(rng, depth + 1)
        else:
            kv[key] = "".join(rng.choice(LETTERS) for _ in range(rng.randint(1, 4)))
    return kv


@pytest.fixture
def keyedVocabulary():
    vocabulary = Vocabulary("".join(chr(code) for code in range(32, 127)))
    for key in KEYS + ("total", "menu", "price"):
        vocabulary.registerKey(key)
    return vocabulary


def testKvTreeDictRoundTrip():
    kv = {"menu": {"name": "TEA", "price": "2.00"}, "total": "2.00"}
    tree = KvTree.fromDict(kv)

    assert tree.toDict() == kv
    assert len(tree) == 7
    assert tree.flatten() == [(("menu", "name"), "TEA"), (("menu", "price"), "2.00"), (("total",), "2.00")]


def testKvTreeRefusesBadLeaves():
    with pytest.raises(ValueError):
        KvTree.fromDict({"total": 3})

    with pytest.raises(ValueError):
        KvTree.fromDict({"total": ""}, allowEmptyLeaves=False)


def testFieldF1():
    gt = {"a": "1", "b": "3", "c": "4"}
    precision, recall, f1 = fieldF1({"a": "1", "b": "2"}, gt)

    assert (precision, recall) == (0.5, pytest.approx(1 / 3))
    assert f1 == pytest.approx(0.4)
    assert fieldF1({}, {}) == (1.0, 1.0, 1.0)
    assert fieldF1({}, gt) == (0.0, 0.0, 0.0)
    assert fieldF1(gt, gt) == (1.0, 1.0, 1.0)


def testFieldF1IsSymmetric():
    rng = random.Random(0)
    for _ in range(50):
        first, second = randomKv(rng), randomKv(rng)
        assert fieldF1(first, second)[2] == pytest.approx(fieldF1(second, first)[2])


def testFieldF1UsesKeyPaths():
    assert fieldF1({"menu": {"price": "2"}}, {"price": "2"})[2] == 0.0


def testTedAccuracyExamples():
    gt = {"a": "xy"}

    assert tedAccuracy({}, gt) == 0.0
    assert tedAccuracy(gt, gt) == 1.0
    assert tedAccuracy({"a": "xz"}, gt) == pytest.approx(0.75)
    assert tedAccuracy({"a": "xy", "b": "1", "c": "2", "d": "3"}, gt) == 0.0

    with pytest.raises(ValueError):
        tedAccuracy(gt, {})


def testTreeEditDistanceMatchesForestRecursion():
    rng = random.Random(7)
    for _ in range(200):
        first, second = KvTree.fromDict(randomKv(rng)), KvTree.fromDict(randomKv(rng))
        expected = forestDistance(asForest(first), asForest(second))
        assert treeEditDistance(first, second) == pytest.approx(expected, abs=1e-9)


def testAnlsExamples():
    assert anls("hello", ["Hello "]) == 1.0
    assert anls("abcd", ["abce"]) == pytest.approx(0.75)
    assert anls("abcd", ["abxy"]) == pytest.approx(0.5)
    assert anls("ab", ["xy"]) == 0.0
    assert anls("ab", ["xy", "ab"]) == 1.0
    assert anls("", [""]) == 1.0

    with pytest.raises(ValueError):
        anls("a", [])


def testAnlsAgreesWithEditDistance():
    rng = random.Random(3)
    for _ in range(500):
        pred = "".join(rng.choice("abc") for _ in range(rng.randint(0, 6)))
        answer = "".join(rng.choice("abc") for _ in range(rng.randint(1, 6)))

        similarity = 1 - levenshtein(pred, answer) / max(len(pred), len(answer))
        expected = similarity if similarity >= 0.5 else 0.0
        assert anls(pred, [answer]) == pytest.approx(expected, abs=1e-9)


def testFieldAnlsCountsMissingFieldsAsEmpty():
    assert fieldAnls({"a": "xy"}, {"a": "xy", "b": "zz"}) == pytest.approx(0.5)
    assert fieldAnls({}, {}) == 1.0


def testSampleMetricsAndSummary():
    gt = {"company": "AB", "total": "9.50"}
    perfect = sampleMetrics(gt, gt)
    empty = sampleMetrics({}, gt)

    assert perfect == {"precision": 1.0, "recall": 1.0, "f1": 1.0, "ted_accuracy": 1.0, "anls": 1.0}
    assert empty["f1"] == 0.0 and empty["ted_accuracy"] == 0.0

    summary = summarize([perfect, empty])
    assert summary["f1"] == 0.5
    assert summarize([]) == {}


def testMaskIou():
    first = np.zeros((4, 4), dtype=bool)
    second = np.zeros((4, 4), dtype=bool)
    first[:2] = True
    second[1:3] = True

    assert maskIou(first, second) == pytest.approx(4 / 12)
    assert maskIou(first, first) == 1.0
    assert maskIou(np.zeros((2, 2)), np.zeros((2, 2))) == 1.0

    with pytest.raises(ValueError):
        maskIou(first, np.zeros((2, 2)))


def testTotalCodecRoundTripsRandomTrees(keyedVocabulary):
    rng = random.Random(11)
    for _ in range(500):
        kv = randomKv(rng)
        tree, malformed = parseTotal(serializeTotal(kv, keyedVocabulary))

        assert not malformed
        assert tree.toDict() == kv


def testSerializeTotalLayout(keyedVocabulary):
    tokens = serializeTotal({"menu": {"price": "2"}, "total": "2"}, keyedVocabulary)
    assert tokens == ["<s_menu>", "<s_price>", "2", "<e_price>", "<e_menu>", "<s_total>", "2", "<e_total>"]


@pytest.mark.parametrize("tokens, expected", [
    (["<s_total>", "9"], {"total": "9"}),
    (["<e_total>"], {}),
    (["x", "<s_total>", "9", "<e_total>"], {"total": "9"}),
    (["<s_menu>", "<s_price>", "1", "<e_menu>"], {"menu": {"price": "1"}}),
    (["<s_total>", "1", "<e_total>", "<s_total>", "2", "<e_total>"], {"total": "1"}),
    (["<s_total>", "<pad>", "9", "<e_total>"], {"total": "9"}),
])
def testParseTotalRepairsMalformedOutput(tokens, expected):
    tree, malformed = parseTotal(tokens)

    assert malformed
    assert tree.toDict() == expected


def testParseTotalOfNothing():
    tree, malformed = parseTotal([])
    assert tree.isEmpty() and not malformed
