from serum.manners.GenerationManner import ExtractionResult, GenerationManner
from serum.manners.prompt.PromptManner import PromptManner, promptExtract
from serum.manners.total.TotalManner import TotalManner
from serum.manners.vqa.VqaManner import VqaManner

MANNERS = {manner.NAME: manner for manner in (TotalManner, PromptManner, VqaManner)}


def mannerFor(mode: str, config, vocabulary) -> GenerationManner:
    if mode not in MANNERS:
        raise ValueError(f"Unknown generation mode '{mode}', expected one of {sorted(MANNERS)}")

    return MANNERS[mode](config, vocabulary)
