"""
Desc: Every key asked as its own query, each value decoded in an independent stream that sees the
shared merged context and only its own key's query row.
"""

# Core libraries
from typing import List, Sequence

# Custom libraries
from serum.evaluation.KvTree import KvTree
from serum.manners.GenerationManner import ExtractionResult, GenerationManner
from serum.model.QueryDecoder import QuerySpec


class PromptManner(GenerationManner):
    NAME = "prompt"

    def defaultAlpha(self) -> float:
        return self.config.prompt_alpha

    def queryText(self, key: str) -> str:
        return key

    def buildQueries(self, keys: Sequence[str]) -> List[QuerySpec]:
        return [QuerySpec.ofText(self.queryText(key)) for key in keys]

    def streamRows(self, keys: Sequence[str]) -> List[List[int]]:
        return [[index] for index in range(len(keys))]

    def streamTargets(self, sample, keys: Sequence[str]) -> List[List[int]]:
        # Keys the document lacks are trained to decode nothing
        return [self.withEos(self.vocabulary.encodeText(sample.kv_ground_truth.get(key, "")))
                if isinstance(sample.kv_ground_truth.get(key, ""), str) else [self.vocabulary.EOS_ID]
                for key in keys]

    def assemble(self, keys: Sequence[str], streams: Sequence[List[int]]) -> ExtractionResult:
        values = {key: self.vocabulary.decodeText(ids) for key, ids in zip(keys, streams)}
        tree = KvTree.fromDict({key: value for key, value in values.items() if value})
        return ExtractionResult(tree, {key: list(ids) for key, ids in zip(keys, streams)})


def promptExtract(model, image, keys: Sequence[str], alpha: float = None) -> KvTree:
    '''
    Extract the given keys from one document, one decode stream per key.

    :param model: A fine-tuned SeRumModel.
    :param image: (H, W, C) image tensor.
    :param keys: Unique, non-empty key names.
    :param alpha: Token keep ratio, defaults to the configured prompt ratio.
    :returns: A flat tree holding every key that decoded to a non-empty value.
    '''

    return PromptManner(model.config, model.vocabulary).extract(model, image, keys, alpha).kv
