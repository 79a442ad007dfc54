"""
Frozen text normalization for every metric: lowercase, split with NLTK's
``wordpunct_tokenize`` (runs of word characters or of punctuation), and drop
the punctuation runs.
"""
from dataclasses import dataclass
from typing import Iterator, List, Tuple

from nltk.tokenize import wordpunct_tokenize


@dataclass(frozen=True)
class TokenizedText:
    tokens: Tuple[str, ...]

    def __len__(self) -> int:
        return len(self.tokens)

    def __iter__(self) -> Iterator[str]:
        return iter(self.tokens)

    def __getitem__(self, i):
        return self.tokens[i]


def _is_word(token: str) -> bool:
    return any(ch.isalnum() for ch in token)


def tokenize(text: str) -> TokenizedText:
    if not text:
        return TokenizedText(())
    return TokenizedText(tuple(t for t in wordpunct_tokenize(text.lower()) if _is_word(t)))


def word_count(text: str) -> int:
    """Report length as used for length distributions: whitespace-separated words."""
    return len(text.split())


def as_tokens(value) -> List[str]:
    """Accept raw text, TokenizedText or a token list."""
    if isinstance(value, str):
        return list(tokenize(value))
    return list(value)
