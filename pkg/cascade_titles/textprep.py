"""Normalization, tokenization, stop words and n-gram terms"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Iterable, Mapping

from panpath import PanPath

from .utils import ParameterError, numbered_lines

DEFAULT_EXCEPTIONS = ("c++", "c#", "f#", ".net", "node.js")
STOPWORDS_FILE = Path(__file__).parent.joinpath("data", "stopwords.txt")

_TAG = re.compile(r"<[^>]*>")
_ENTITY = re.compile(r"&(?:#\d+|#x[0-9a-f]+|[a-z][a-z0-9]*);", re.IGNORECASE)
_WORD = r"[^\W_]+(?:-[^\W_]+)*"


@dataclass(frozen=True)
class StopList:
    words: frozenset = frozenset()

    @classmethod
    def from_words(cls, words: Iterable[str]) -> StopList:
        return cls(frozenset(w.strip().lower() for w in words if w.strip()))

    @classmethod
    def parse(cls, data: str | bytes) -> StopList:
        """One word per line, "#" starts a comment"""
        return cls.from_words(
            line.split("#", 1)[0] for _, line in numbered_lines(data)
        )

    def __contains__(self, word: str) -> bool:
        return word in self.words

    def __len__(self) -> int:
        return len(self.words)

    def dump(self) -> str:
        return "".join(f"{word}\n" for word in sorted(self.words))


@lru_cache(maxsize=None)
def default_stoplist() -> StopList:
    return StopList.parse(STOPWORDS_FILE.read_text(encoding="utf-8"))


async def load_stoplist(path: str | PanPath | None) -> StopList:
    if path is None:
        return default_stoplist()
    return StopList.parse(await PanPath(path).a_read_bytes())


@dataclass(frozen=True)
class TermSequence:
    terms: tuple[str, ...] = ()
    source_id: str = ""

    def __len__(self) -> int:
        return len(self.terms)

    def __iter__(self):
        return iter(self.terms)


@lru_cache(maxsize=32)
def _token_pattern(exceptions: tuple[str, ...]) -> re.Pattern:
    # longest exceptions first so "node.js" wins over a shorter prefix
    alternatives = [
        re.escape(e) for e in sorted(set(exceptions), key=lambda e: (-len(e), e))
    ]
    return re.compile("|".join([*alternatives, _WORD]))


def normalize(text: str, exceptions: Iterable[str] = DEFAULT_EXCEPTIONS) -> str:
    """Lowercase, strip markup and collapse everything else to single spaces.

    Intra-word hyphens and the exception lexicon (e.g. "c++", ".net")
    survive; any other non-alphanumeric run becomes a single space.
    """
    if not text:
        return ""
    text = _ENTITY.sub(" ", _TAG.sub(" ", text)).lower()
    pattern = _token_pattern(tuple(e.lower() for e in exceptions))
    return " ".join(pattern.findall(text))


def tokenize(text: str, stops: StopList, source_id: str = "") -> TermSequence:
    return TermSequence(
        tuple(word for word in text.split() if word not in stops),
        source_id,
    )


def ngrams(tokens: TermSequence, max_n: int = 2) -> TermSequence:
    """Unigrams followed by adjacent bigrams"""
    if max_n not in (1, 2):
        raise ParameterError(f"max_n must be 1 or 2, got {max_n}")

    terms = tokens.terms
    if max_n == 2:
        terms = terms + tuple(f"{a} {b}" for a, b in zip(terms, terms[1:]))
    return TermSequence(terms, tokens.source_id)


def min_count_filter(counts: Mapping[str, int], threshold: int) -> set[str]:
    if threshold < 1:
        raise ParameterError(f"threshold must be >= 1, got {threshold}")
    return {term for term, count in counts.items() if count >= threshold}


@dataclass(frozen=True)
class TextPipeline:
    """normalize -> tokenize -> ngrams with fixed settings"""

    stops: StopList = field(default_factory=default_stoplist)
    exceptions: tuple[str, ...] = DEFAULT_EXCEPTIONS
    max_n: int = 2

    def terms(self, text: str, source_id: str = "") -> TermSequence:
        return ngrams(
            tokenize(normalize(text, self.exceptions), self.stops, source_id),
            self.max_n,
        )
