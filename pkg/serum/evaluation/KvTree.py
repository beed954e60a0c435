"""
Desc: Ordered key-value tree, stored as a networkx DiGraph whose edges carry the child order.
"""

# Core libraries
from collections.abc import Mapping
from typing import List, Tuple

# External libraries
import networkx as nx
from zss import Node

# Constants
ROOT = 0
KEY = "key"
LEAF = "leaf"


class KvTree:
    '''
    Internal nodes are key labels, leaves are strings. A key node either holds exactly one leaf
    or only key children.
    '''

    def __init__(self):
        self.graph = nx.DiGraph()
        self.graph.add_node(ROOT, kind=KEY, label="<root>")

    def _addChild(self, parent: int, kind: str, label: str) -> int:
        node = self.graph.number_of_nodes()
        self.graph.add_node(node, kind=kind, label=label)
        self.graph.add_edge(parent, node, order=self.graph.out_degree(parent))
        return node

    def children(self, node: int) -> List[int]:
        return sorted(self.graph.successors(node), key=lambda child: self.graph.edges[node, child]["order"])

    def label(self, node: int) -> str:
        return self.graph.nodes[node]["label"]

    def isLeaf(self, node: int) -> bool:
        return self.graph.nodes[node]["kind"] == LEAF

    @classmethod
    def fromDict(cls, kv: Mapping, allowEmptyLeaves: bool = True) -> "KvTree":
        '''
        :param kv: Nested key-value mapping with string leaves.
        :param allowEmptyLeaves: Predictions may carry empty strings, ground truth may not.
        '''

        tree = cls()

        def add(parent, mapping):
            for key, value in mapping.items():
                keyNode = tree._addChild(parent, KEY, str(key))
                if isinstance(value, Mapping):
                    add(keyNode, value)
                else:
                    if not isinstance(value, str):
                        raise ValueError(f"Leaf under '{key}' must be a string, got {type(value).__name__}")
                    if not value and not allowEmptyLeaves:
                        raise ValueError(f"Leaf under '{key}' is empty")
                    tree._addChild(keyNode, LEAF, value)

        add(ROOT, kv)
        return tree

    @classmethod
    def coerce(cls, value) -> "KvTree":
        return value if isinstance(value, KvTree) else cls.fromDict(value or {})

    def toDict(self) -> dict:
        def build(node):
            result = {}
            for child in self.children(node):
                grandchildren = self.children(child)
                if len(grandchildren) == 1 and self.isLeaf(grandchildren[0]):
                    result[self.label(child)] = self.label(grandchildren[0])
                else:
                    result[self.label(child)] = build(child)
            return result

        return build(ROOT)

    def flatten(self) -> List[Tuple[Tuple[str, ...], str]]:
        '''
        (key path, leaf value) of every leaf, in document order.
        '''

        leaves = []

        def walk(node, path):
            for child in self.children(node):
                if self.isLeaf(child):
                    leaves.append((path, self.label(child)))
                else:
                    walk(child, path + (self.label(child),))

        walk(ROOT, ())
        return leaves

    def toZss(self) -> Node:
        def build(node):
            return Node((self.graph.nodes[node]["kind"], self.label(node)), [build(child) for child in self.children(node)])

        return build(ROOT)

    def __len__(self) -> int:
        '''
        Number of nodes below the root.
        '''

        return self.graph.number_of_nodes() - 1

    def isEmpty(self) -> bool:
        return len(self) == 0

    def __eq__(self, other) -> bool:
        return isinstance(other, KvTree) and self.toDict() == other.toDict() and self.flatten() == other.flatten()

    def __repr__(self) -> str:
        return f"KvTree({self.toDict()})"
