"""BM25 scoring over code documents.

Tokenization splits identifiers aggressively (snake_case, camelCase) so that
code vocabulary matches across signatures, docstrings, and bodies. IDF is
floored at zero so scores are always nonnegative.
"""

from __future__ import annotations

import math
import re
from collections import Counter
from dataclasses import dataclass

_WORD_RE = re.compile(r"[A-Za-z0-9]+")
_CAMEL_RE = re.compile(r"[A-Z]+(?=[A-Z][a-z])|[A-Z]?[a-z]+|[A-Z]+|[0-9]+")


def tokenize(text: str) -> list[str]:
    """Split on non-alphanumerics, then camelCase; lowercase; drop 1-char tokens."""
    tokens: list[str] = []
    for word in _WORD_RE.findall(text):
        pieces = _CAMEL_RE.findall(word) or [word]
        for piece in pieces:
            low = piece.lower()
            if len(low) > 1:
                tokens.append(low)
    return tokens


@dataclass(frozen=True)
class Bm25Params:
    k1: float = 1.2
    b: float = 0.75

    def __post_init__(self):
        if self.k1 <= 0:
            raise ValueError("k1 must be > 0")
        if not 0.0 <= self.b <= 1.0:
            raise ValueError("b must be in [0, 1]")


class Bm25Index:
    """Immutable BM25 index over a fixed corpus of (doc_id, text) pairs."""

    def __init__(self, docs: list[tuple[str, str]], params: Bm25Params = Bm25Params()):
        self.params = params
        self.doc_ids = [doc_id for doc_id, _ in docs]
        self._tfs = [Counter(tokenize(text)) for _, text in docs]
        self._lens = [sum(tf.values()) for tf in self._tfs]
        n = len(docs)
        self._avgdl = (sum(self._lens) / n) if n else 0.0
        df: Counter[str] = Counter()
        for tf in self._tfs:
            for term in tf:
                df[term] += 1
        # floor-at-zero IDF variant
        self._idf = {
            term: max(0.0, math.log((n - d + 0.5) / (d + 0.5))) for term, d in df.items()
        }

    def __len__(self) -> int:
        return len(self.doc_ids)

    def score_one(self, query_tokens: list[str], doc_pos: int) -> float:
        tf = self._tfs[doc_pos]
        dl = self._lens[doc_pos]
        k1, b = self.params.k1, self.params.b
        norm = k1 * (1.0 - b + (b * dl / self._avgdl if self._avgdl else 0.0))
        score = 0.0
        for term in query_tokens:
            f = tf.get(term, 0)
            if not f:
                continue
            score += self._idf.get(term, 0.0) * (f * (k1 + 1.0)) / (f + norm)
        return score

    def rank(self, query: str, n: int | None = None) -> list[tuple[str, float]]:
        """Top-n (doc_id, score) sorted by score desc, ties by doc_id asc."""
        q = tokenize(query)
        scored = [
            (doc_id, self.score_one(q, pos)) for pos, doc_id in enumerate(self.doc_ids)
        ]
        scored.sort(key=lambda pair: (-pair[1], pair[0]))
        return scored if n is None else scored[:n]
