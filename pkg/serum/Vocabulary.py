"""
Desc: Character-level vocabulary with reserved framing ids, per-key special tokens and task prompt tokens.
"""

# Core libraries
from typing import Iterable, List, Sequence

# Custom libraries
from serum.Errors import VocabularyError


class Vocabulary:
    PAD = "<pad>"
    BOS = "<s>"
    EOS = "</s>"
    UNK = "<unk>"

    PAD_ID = 0
    BOS_ID = 1
    EOS_ID = 2
    UNK_ID = 3

    def __init__(self, charset: str):
        '''
        :param charset: Every character plain text may be encoded with. Duplicates are ignored.
        '''

        self.charset = "".join(dict.fromkeys(charset))
        self.idToToken = [self.PAD, self.BOS, self.EOS, self.UNK]
        self.charToId = {}
        self.specialToId = {self.PAD: self.PAD_ID, self.BOS: self.BOS_ID,
                            self.EOS: self.EOS_ID, self.UNK: self.UNK_ID}
        self.keys = []
        self.tasks = []

        for char in self.charset:
            self.charToId[char] = len(self.idToToken)
            self.idToToken.append(char)

    def __len__(self) -> int:
        return len(self.idToToken)

    @staticmethod
    def startTag(key: str) -> str:
        return f"<s_{key}>"

    @staticmethod
    def endTag(key: str) -> str:
        return f"<e_{key}>"

    @staticmethod
    def promptTag(taskName: str) -> str:
        return f"<task_{taskName}>"

    def _addSpecial(self, token: str) -> int:
        if token not in self.specialToId:
            self.specialToId[token] = len(self.idToToken)
            self.idToToken.append(token)

        return self.specialToId[token]

    def registerKey(self, key: str) -> None:
        '''
        Register the <s_key>/<e_key> pair for a dataset key. Registering twice is a no-op.
        '''

        if not key:
            raise VocabularyError("Keys must be non-empty")

        self._addSpecial(self.startTag(key))
        self._addSpecial(self.endTag(key))
        if key not in self.keys:
            self.keys.append(key)

    def registerTask(self, taskName: str) -> int:
        if not taskName:
            raise VocabularyError("Task names must be non-empty")

        if taskName not in self.tasks:
            self.tasks.append(taskName)

        return self._addSpecial(self.promptTag(taskName))

    def isKeyRegistered(self, key: str) -> bool:
        return self.startTag(key) in self.specialToId

    def isSpecial(self, tokenId: int) -> bool:
        return self.idToToken[tokenId] in self.specialToId

    def tokenId(self, token: str) -> int:
        '''
        Id of a single token: a special token string or one character.
        '''

        if token in self.specialToId:
            return self.specialToId[token]

        if len(token) == 1:
            return self.charToId.get(token, self.UNK_ID)

        raise VocabularyError(f"'{token}' is neither a registered special token nor a character")

    def encodeText(self, text: str) -> List[int]:
        '''
        Character-level encoding. BOS/EOS are not added and special tokens are never produced.

        :param text: Plain text.
        :returns: One id per character, UNK for characters outside the charset.
        '''

        return [self.charToId.get(char, self.UNK_ID) for char in text]

    def encodeTokens(self, tokens: Iterable[str]) -> List[int]:
        return [self.tokenId(token) for token in tokens]

    def idsToTokens(self, ids: Sequence[int]) -> List[str]:
        tokens = []
        for tokenId in ids:
            tokenId = int(tokenId)
            if not 0 <= tokenId < len(self.idToToken):
                raise VocabularyError(f"Unknown token id {tokenId}")
            tokens.append(self.idToToken[tokenId])

        return tokens

    def decodeText(self, ids: Sequence[int]) -> str:
        return "".join(self.idsToTokens(ids))

    def toDict(self) -> dict:
        return {"charset": self.charset, "keys": list(self.keys), "tasks": list(self.tasks)}

    @classmethod
    def fromDict(cls, data: dict) -> "Vocabulary":
        vocabulary = cls(data["charset"])
        for key in data.get("keys", []):
            vocabulary.registerKey(key)
        for taskName in data.get("tasks", []):
            vocabulary.registerTask(taskName)

        return vocabulary

    @classmethod
    def forConfig(cls, config) -> "Vocabulary":
        '''
        Vocabulary with the config's charset, its dataset keys and its task prompt registered.
        '''

        vocabulary = cls(config.charset)
        for key in config.keys:
            vocabulary.registerKey(key)
        vocabulary.registerTask(config.task_name)

        return vocabulary

    def __eq__(self, other) -> bool:
        return isinstance(other, Vocabulary) and self.idToToken == other.idToToken
