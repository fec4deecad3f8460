"""Stopword-filtered n-gram frequency tables."""

from __future__ import annotations

import csv
from collections import Counter
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

from .corpus import Corpus, TokenSequence, tokenize
from .errors import EmptyCorpus

DEFAULT_CUSTOM_STOPWORDS = frozenset({"say", "state", "old", "tell", "bst", "gmt"})
CSV_COLUMNS = ("rank", "ngram", "count", "per_10k")


def _standard_stopwords() -> frozenset[str]:
    text = resources.files("biaslens.data").joinpath("stopwords_en.txt").read_text("utf-8")
    return frozenset(w.strip().lower() for w in text.splitlines() if w.strip() and not w.startswith("#"))


@dataclass(frozen=True)
class StopwordConfig:
    standard: frozenset[str] = field(default_factory=_standard_stopwords)
    custom: frozenset[str] = DEFAULT_CUSTOM_STOPWORDS

    def __post_init__(self):
        object.__setattr__(self, "standard", frozenset(w.lower() for w in self.standard))
        object.__setattr__(self, "custom", frozenset(w.lower() for w in self.custom))

    def __contains__(self, token: str) -> bool:
        token = token.lower()
        return token in self.standard or token in self.custom

    @classmethod
    def from_paths(cls, standard: str | Path | None = None, custom: Iterable[str] | None = None):
        std = (
            frozenset(
                w.strip() for w in Path(standard).read_text("utf-8").splitlines()
                if w.strip() and not w.startswith("#")
            )
            if standard else _standard_stopwords()
        )
        return cls(std, frozenset(custom) if custom is not None else DEFAULT_CUSTOM_STOPWORDS)


@dataclass(frozen=True)
class NgramRow:
    rank: int
    ngram: str
    count: int
    per_10k: float


def filter_tokens(tokens: TokenSequence | Sequence[str], stop: StopwordConfig) -> TokenSequence:
    combined = stop.standard | stop.custom
    return TokenSequence(tuple(t for t in tokens if t.lower() not in combined))


def extract_ngrams(tokens: TokenSequence | Sequence[str], n: int) -> list[str]:
    if n < 1:
        raise ValueError("n must be >= 1")
    toks = tuple(tokens)
    return [" ".join(toks[i:i + n]) for i in range(len(toks) - n + 1)]


def count_ngrams(corpus: Corpus, n: int, stop: StopwordConfig) -> Counter:
    """Corpus-wide n-gram counts; n-grams never span two articles."""
    counts: Counter = Counter()
    for article in corpus:
        counts.update(extract_ngrams(filter_tokens(tokenize(article.content), stop), n))
    return counts


def rank_counts(counts: Counter, k: int) -> list[NgramRow]:
    total = sum(counts.values())
    if total == 0:
        return []
    ordered = sorted(counts.items(), key=lambda item: (-item[1], item[0]))[:k]
    return [
        NgramRow(rank, gram, count, count / total * 10_000)
        for rank, (gram, count) in enumerate(ordered, start=1)
    ]


def top_k(corpus: Corpus, n: int, k: int, stop: StopwordConfig | None = None) -> list[NgramRow]:
    """The ``k`` most frequent n-grams, count descending then lexicographic.

    ``per_10k`` is normalized by the total number of post-filter n-gram
    occurrences in the corpus, not by article count.
    """
    if n < 1 or k < 1:
        raise ValueError("n and k must be >= 1")
    if len(corpus) == 0:
        raise EmptyCorpus("cannot rank n-grams of an empty corpus")
    return rank_counts(count_ngrams(corpus, n, stop or StopwordConfig()), k)


def write_csv(rows: Sequence[NgramRow], path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for row in rows:
            writer.writerow([row.rank, row.ngram, row.count, repr(row.per_10k)])
    return path


def read_csv(path: str | Path) -> list[NgramRow]:
    with open(path, encoding="utf-8", newline="") as fh:
        return [
            NgramRow(int(r["rank"]), r["ngram"], int(r["count"]), float(r["per_10k"]))
            for r in csv.DictReader(fh)
        ]
