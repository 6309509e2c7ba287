"""Nearest-neighbour caption retrieval and consensus reranking."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np

from .core import ValidationError

DEFAULT_K = 300


def tokenize(sentence: str) -> tuple[str, ...]:
    return tuple(sentence.lower().split())


@dataclass(frozen=True, eq=False)
class CaptionedSegment:
    id: str
    embedding: np.ndarray
    captions: tuple[tuple[str, ...], ...]

    def __post_init__(self):
        emb = np.array(self.embedding, dtype=np.float64)
        if emb.ndim != 1 or not np.all(np.isfinite(emb)) or not np.linalg.norm(emb) > 0:
            raise ValidationError(f"{self.id}: embedding must be a finite non-zero vector")
        caps = tuple(tuple(c) for c in self.captions)
        if not caps or any(len(c) == 0 for c in caps):
            raise ValidationError(f"{self.id}: needs at least one non-empty caption")
        emb.setflags(write=False)
        object.__setattr__(self, "embedding", emb)
        object.__setattr__(self, "captions", caps)

    @classmethod
    def from_text(cls, id: str, embedding, captions: Sequence[str]) -> "CaptionedSegment":
        return cls(id, embedding, tuple(tokenize(c) for c in captions))


def corpus_to_json(corpus: Sequence[CaptionedSegment]) -> list:
    return [
        {"id": s.id, "embedding": s.embedding.tolist(), "captions": [" ".join(c) for c in s.captions]}
        for s in corpus
    ]


def corpus_from_json(obj) -> list[CaptionedSegment]:
    if not isinstance(obj, list):
        raise ValidationError("caption corpus must be a JSON list")
    out = []
    for entry in obj:
        if not isinstance(entry, dict) or set(entry) != {"id", "embedding", "captions"}:
            raise ValidationError("caption corpus entries need exactly 'id', 'embedding', 'captions'")
        out.append(CaptionedSegment.from_text(str(entry["id"]), entry["embedding"], entry["captions"]))
    return out


def knn_retrieve(query, corpus: Sequence[CaptionedSegment], k: int = DEFAULT_K) -> list[tuple[CaptionedSegment, float]]:
    """Cosine-similarity neighbours, most similar first; ties broken by id."""
    q = np.asarray(query, dtype=np.float64)
    if k < 1:
        raise ValidationError("k must be >= 1")
    if not corpus:
        raise ValidationError("empty retrieval corpus")
    qn = np.linalg.norm(q)
    if not qn > 0:
        raise ValidationError("query embedding has zero norm")
    E = np.stack([s.embedding for s in corpus]) if len({s.embedding.shape for s in corpus}) == 1 else None
    if E is None or E.shape[1] != q.shape[0]:
        raise ValidationError("embedding dimension mismatch")
    sims = (E @ q) / (np.linalg.norm(E, axis=1) * qn)
    order = sorted(range(len(corpus)), key=lambda i: (-sims[i], corpus[i].id))
    return [(corpus[i], float(sims[i])) for i in order[:k]]


def _ngrams(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def _f1(a: Counter, b: Counter) -> Fraction:
    overlap = sum((a & b).values())
    return Fraction(2 * overlap, sum(a.values()) + sum(b.values()))


def _similarity(s1: Sequence[str], s2: Sequence[str]) -> Fraction:
    if not s1 or not s2:
        raise ValidationError("lexical_similarity of an empty sentence")
    uni = _f1(_ngrams(s1, 1), _ngrams(s2, 1))
    if len(s1) < 2 and len(s2) < 2:
        # neither has bigrams, so the bigram multisets trivially agree
        return uni
    bi = _f1(_ngrams(s1, 2), _ngrams(s2, 2)) if len(s1) >= 2 and len(s2) >= 2 else Fraction(0)
    return (uni + bi) / 2


def lexical_similarity(s1: Sequence[str], s2: Sequence[str]) -> float:
    """Mean of unigram and bigram F1 over clipped (multiset) matches.

    Two one-token sentences are compared on unigrams alone.
    """
    # exact rational arithmetic, rounded once
    return float(_similarity(s1, s2))


def consensus_rerank(candidates: Sequence[Sequence[str]]) -> tuple[tuple[str, ...], float]:
    """Pick the candidate with the highest mean similarity to all others (first wins ties)."""
    if not candidates:
        raise ValidationError("no caption candidates")
    n = len(candidates)
    if n == 1:
        return tuple(candidates[0]), 1.0
    cache: dict = {}
    totals = [Fraction(0)] * n
    for i in range(n):
        for j in range(i + 1, n):
            key = (tuple(candidates[i]), tuple(candidates[j]))
            if key not in cache:
                cache[key] = _similarity(*key)
            totals[i] += cache[key]
            totals[j] += cache[key]
    # exact sums keep ties exact whatever the candidate order
    best = max(range(n), key=lambda i: (totals[i], -i))
    return tuple(candidates[best]), float(totals[best] / (n - 1))


def retrieve_caption(query, corpus: Sequence[CaptionedSegment], k: int = DEFAULT_K, extra_candidates: Sequence[Sequence[str]] = ()):
    """Pool the captions of the ``k`` nearest segments (plus any injected candidates) and pick the consensus."""
    neighbours = knn_retrieve(query, corpus, k)
    pool = [c for seg, _ in neighbours for c in seg.captions] + [tuple(c) for c in extra_candidates]
    caption, score = consensus_rerank(pool)
    return caption, score, neighbours
