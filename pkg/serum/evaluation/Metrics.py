"""
Desc: Field-level F1, tree-edit-distance accuracy, ANLS and mask IoU.
"""

# Core libraries
from collections import Counter
from typing import Sequence

# External libraries
import Levenshtein
import numpy as np

# Custom libraries
from serum.evaluation.KvTree import KvTree
from serum.evaluation.TreeEditDistance import emptyTreeDistance, treeEditDistance

# Constants
ANLS_THRESHOLD = 0.5


def fieldF1(pred, gt) -> tuple:
    '''
    Exact-match precision, recall and F1 over the (key path, value) multisets of both trees.

    :param pred: Predicted KvTree or mapping.
    :param gt: Ground-truth KvTree or mapping.
    :returns: (precision, recall, f1).
    '''

    predFields = Counter(KvTree.coerce(pred).flatten())
    gtFields = Counter(KvTree.coerce(gt).flatten())

    if not predFields and not gtFields:
        return (1.0, 1.0, 1.0)

    if not predFields or not gtFields:
        return (0.0, 0.0, 0.0)

    matched = sum((predFields & gtFields).values())
    precision = matched / sum(predFields.values())
    recall = matched / sum(gtFields.values())
    f1 = 0.0 if matched == 0 else 2 * precision * recall / (precision + recall)

    return (precision, recall, f1)


def tedAccuracy(pred, gt) -> float:
    '''
    max(0, 1 - TED(pred, gt) / TED(empty, gt)).
    '''

    pred, gt = KvTree.coerce(pred), KvTree.coerce(gt)
    if gt.isEmpty():
        raise ValueError("TED accuracy is undefined for an empty ground truth")

    return max(0.0, 1.0 - treeEditDistance(pred, gt) / emptyTreeDistance(gt))


def normalizeAnswer(text: str) -> str:
    return text.strip().lower()


def anls(pred: str, answers: Sequence[str], threshold: float = ANLS_THRESHOLD) -> float:
    '''
    Best normalized Levenshtein similarity against any accepted answer, zeroed below the threshold.

    :param pred: Predicted answer.
    :param answers: Accepted answers, at least one.
    '''

    if not answers:
        raise ValueError("ANLS needs at least one accepted answer")

    pred = normalizeAnswer(pred)
    best = 0.0
    for answer in answers:
        answer = normalizeAnswer(answer)
        longest = max(len(pred), len(answer))
        similarity = 1.0 if longest == 0 else 1.0 - Levenshtein.distance(pred, answer) / longest
        best = max(best, similarity)

    return best if best >= threshold else 0.0


def maskIou(predMask, gtMask) -> float:
    '''
    Intersection over union of two binary masks. Two empty masks agree perfectly.
    '''

    pred = np.asarray(predMask).astype(bool)
    gt = np.asarray(gtMask).astype(bool)
    if pred.shape != gt.shape:
        raise ValueError(f"Mask shapes differ: {pred.shape} vs {gt.shape}")

    union = np.logical_or(pred, gt).sum()
    if union == 0:
        return 1.0

    return float(np.logical_and(pred, gt).sum() / union)


def fieldAnls(pred, gt) -> float:
    '''
    Mean ANLS over the ground-truth fields, the prediction for a missing field counting as empty.
    '''

    predValues = dict(KvTree.coerce(pred).flatten())
    gtFields = KvTree.coerce(gt).flatten()
    if not gtFields:
        return 1.0 if not predValues else 0.0

    return float(np.mean([anls(predValues.get(path, ""), [value]) for path, value in gtFields]))


def sampleMetrics(pred, gt) -> dict:
    '''
    Every per-sample metric of a key-value prediction.
    '''

    precision, recall, f1 = fieldF1(pred, gt)
    gtTree = KvTree.coerce(gt)

    return {
        "precision": precision,
        "recall": recall,
        "f1": f1,
        "ted_accuracy": tedAccuracy(pred, gtTree) if not gtTree.isEmpty() else float(KvTree.coerce(pred).isEmpty()),
        "anls": fieldAnls(pred, gtTree),
    }


def summarize(rows: Sequence[dict], names=("precision", "recall", "f1", "ted_accuracy", "anls")) -> dict:
    '''
    Mean of every named metric over the rows that carry it.
    '''

    summary = {}
    for name in names:
        values = [row[name] for row in rows if name in row]
        if values:
            summary[name] = float(np.mean(values))

    return summary
