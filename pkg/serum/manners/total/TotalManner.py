"""
Desc: The whole key-value structure decoded as one tagged sequence, asked with the task name as the only query.
"""

# Core libraries
from typing import List, Sequence

# Custom libraries
from serum.evaluation.GenerationCodec import parseTotal, serializeTotal
from serum.manners.GenerationManner import ExtractionResult, GenerationManner
from serum.model.QueryDecoder import QuerySpec


class TotalManner(GenerationManner):
    NAME = "total"

    def defaultAlpha(self) -> float:
        return self.config.total_alpha

    def buildQueries(self, keys: Sequence[str]) -> List[QuerySpec]:
        return [QuerySpec.ofTask(self.config.task_name)]

    def streamRows(self, keys: Sequence[str]) -> List[List[int]]:
        return [[0]]

    def streamTargets(self, sample, keys: Sequence[str]) -> List[List[int]]:
        kv = {key: value for key, value in sample.kv_ground_truth.items() if key in keys}
        return [self.withEos(self.vocabulary.encodeTokens(serializeTotal(kv, self.vocabulary)))]

    def assemble(self, keys: Sequence[str], streams: Sequence[List[int]]) -> ExtractionResult:
        tree, malformed = parseTotal(self.vocabulary.idsToTokens(streams[0]))
        return ExtractionResult(tree, {self.NAME: list(streams[0])}, malformed)
