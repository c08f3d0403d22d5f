"""Shared text utilities: question tokenization and answer normalization.

The same tokenizer feeds the question encoder and the n-gram metrics, and the
same answer normalization is applied to predictions and references so exact
match is insensitive to case/whitespace.
"""

import re

UNK_TOKEN = "<unk>"

_PUNCT = re.compile(r"[^a-z0-9]+")
_WS = re.compile(r"\s+")


def tokenize(text: str) -> list[str]:
    """Lowercase, strip punctuation to spaces, split on whitespace.

    Never returns an empty list; a string with no alphanumeric content
    tokenizes to a single unknown token.
    """
    cleaned = _PUNCT.sub(" ", text.lower())
    tokens = cleaned.split()
    if not tokens:
        return [UNK_TOKEN]
    return tokens


def normalize_answer(answer: str) -> str:
    """Lowercase, trim, and collapse internal whitespace."""
    return _WS.sub(" ", answer.strip().lower())
