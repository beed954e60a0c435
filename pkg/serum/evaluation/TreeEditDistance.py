"""
Desc: Ordered tree edit distance between key-value trees, with character-aware leaf renames.
"""

# External libraries
import Levenshtein
import zss

# Custom libraries
from serum.evaluation.KvTree import LEAF, KvTree


def normalizedEditDistance(a: str, b: str) -> float:
    '''
    Character edit distance scaled into [0, 1] by the longer string.
    '''

    longest = max(len(a), len(b))
    if longest == 0:
        return 0.0

    return Levenshtein.distance(a, b) / longest


def insertCost(node) -> float:
    return 1.0


def removeCost(node) -> float:
    return 1.0


def updateCost(a, b) -> float:
    (kindA, labelA), (kindB, labelB) = a.label, b.label
    if kindA != kindB:
        return 1.0

    if kindA == LEAF:
        return normalizedEditDistance(labelA, labelB)

    return 0.0 if labelA == labelB else 1.0


def treeEditDistance(a: KvTree, b: KvTree) -> float:
    '''
    Unit-cost insert and delete; renaming a key costs 1 unless the labels agree, renaming a leaf costs
    the normalized edit distance of the two strings. Both roots always match.
    '''

    return float(zss.distance(a.toZss(), b.toZss(), zss.Node.get_children, insertCost, removeCost, updateCost))


def emptyTreeDistance(tree: KvTree) -> float:
    '''
    Distance from the empty tree, which is one insertion per node.
    '''

    return float(len(tree))
