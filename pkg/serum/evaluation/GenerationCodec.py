"""
Desc: Serialization of a key-value tree into one tagged token sequence, and a parser that never fails
on malformed model output.
"""

# Core libraries
import re
from collections.abc import Mapping
from typing import List, Sequence, Tuple

# Custom libraries
from serum.Errors import VocabularyError
from serum.evaluation.KvTree import KvTree

# Constants
START_TAG = re.compile(r"^<s_(.+)>$")
END_TAG = re.compile(r"^<e_(.+)>$")


def serializeTotal(kv, vocabulary) -> List[str]:
    '''
    Depth-first <s_key>value<e_key> tokens; nested mappings nest their tag pairs.

    :param kv: KvTree or nested mapping.
    :param vocabulary: Vocabulary every key must already be registered in.
    :returns: Tokens, special tags as whole tokens and values as single characters.
    '''

    if isinstance(kv, KvTree):
        kv = kv.toDict()

    tokens = []

    def emit(mapping):
        for key, value in mapping.items():
            if not vocabulary.isKeyRegistered(key):
                raise VocabularyError(f"Key '{key}' has no registered special tokens")

            tokens.append(vocabulary.startTag(key))
            if isinstance(value, Mapping):
                emit(value)
            else:
                tokens.extend(value)
            tokens.append(vocabulary.endTag(key))

    emit(kv)
    return tokens


def parseTotal(tokens: Sequence[str]) -> Tuple[KvTree, bool]:
    '''
    Inverse of serializeTotal, tolerant of anything a decoder may produce. Unclosed tags close at the
    end of the sequence, end tags close any deeper open tags, text outside every tag or mixed with
    child tags is dropped, and any other special token is ignored.

    :param tokens: Token strings.
    :returns: The tree and whether any repair was needed.
    '''

    malformed = False
    root = {}
    stack = []  # [key, children, text characters]

    def close():
        nonlocal malformed
        key, children, text = stack.pop()
        if children and text:
            malformed = True

        parent = stack[-1][1] if stack else root
        if key in parent:
            malformed = True
            return

        parent[key] = children if children else "".join(text)

    for token in tokens:
        start, end = START_TAG.match(token), END_TAG.match(token)

        if len(token) > 1 and start:
            if stack and stack[-1][2]:
                malformed = True
                stack[-1][2].clear()
            stack.append([start.group(1), {}, []])

        elif len(token) > 1 and end:
            openKeys = [entry[0] for entry in stack]
            if end.group(1) not in openKeys:
                malformed = True
                continue

            while stack[-1][0] != end.group(1):
                malformed = True
                close()
            close()

        elif len(token) == 1:
            if not stack or stack[-1][1]:
                malformed = True
            else:
                stack[-1][2].append(token)

        else:
            malformed = True

    while stack:
        malformed = True
        close()

    return KvTree.fromDict(root), malformed

