"""
Desc: Prompt-style extraction where every key is asked as a natural-language question.
"""

# Custom libraries
from serum.manners.prompt.PromptManner import PromptManner


class VqaManner(PromptManner):
    NAME = "vqa"

    def queryText(self, key: str) -> str:
        return f"WHAT IS THE {key.upper()}?"
