"""Seven-class emotion scoring per article and grouped aggregation."""

from __future__ import annotations

import csv
import enum
import logging
import math
from collections import defaultdict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Protocol, Sequence

from .cache import JsonlCache
from .classify import ChunkingConfig, ClassificationRecord, chunk
from .corpus import Article, Corpus, StudyWindow, period_of, tokenize
from .errors import AuthError, BackendError, BiasLensError, EmptyInput, TransportError
from .transport import RateLimiter, RatePolicy

logger = logging.getLogger(__name__)

SIMPLEX_TOL = 1e-6
# two means closer than this count as tied for the dominant emotion
TIE_TOL = 1e-12
GROUP_KEYS = ("source", "conflict", "period", "leaning")


class Emotion(str, enum.Enum):
    ANGER = "anger"
    DISGUST = "disgust"
    FEAR = "fear"
    JOY = "joy"
    SADNESS = "sadness"
    SURPRISE = "surprise"
    NEUTRAL = "neutral"


EMOTIONS = tuple(Emotion)
CSV_COLUMNS = ("group",) + tuple(e.value for e in EMOTIONS)


@dataclass(frozen=True)
class EmotionDistribution:
    probs: Mapping[Emotion, float]

    def __post_init__(self):
        probs = {Emotion(k): float(v) for k, v in self.probs.items()}
        if set(probs) != set(EMOTIONS):
            raise ValueError("distribution must cover all seven emotions")
        if any(v < 0 or v > 1 for v in probs.values()):
            raise ValueError("probabilities must lie in [0, 1]")
        if abs(math.fsum(probs.values()) - 1.0) > SIMPLEX_TOL:
            raise ValueError("probabilities must sum to 1")
        object.__setattr__(self, "probs", {e: probs[e] for e in EMOTIONS})

    def __getitem__(self, emotion) -> float:
        return self.probs[Emotion(emotion)]

    @classmethod
    def from_scores(cls, scores: Mapping[str, float]) -> "EmotionDistribution":
        """Normalize non-negative scores; missing emotions get zero."""
        values = {e: max(0.0, float(scores.get(e.value, scores.get(e, 0.0)))) for e in EMOTIONS}
        total = math.fsum(values.values())
        if total <= 0:
            raise ValueError("scores sum to zero")
        return cls({e: v / total for e, v in values.items()})

    @classmethod
    def one_hot(cls, emotion) -> "EmotionDistribution":
        return cls({e: 1.0 if e is Emotion(emotion) else 0.0 for e in EMOTIONS})

    def to_dict(self) -> dict:
        return {e.value: self.probs[e] for e in EMOTIONS}

    def dominant(self) -> Emotion:
        top = max(self.probs.values())
        winners = [e for e, v in self.probs.items() if top - v <= TIE_TOL]
        return winners[0] if len(winners) == 1 else Emotion.NEUTRAL


def mean_distribution(dists: Sequence[EmotionDistribution]) -> EmotionDistribution:
    if not dists:
        raise EmptyInput("cannot average zero distributions")
    n = len(dists)
    return EmotionDistribution({e: math.fsum(d.probs[e] for d in dists) / n for e in EMOTIONS})


@dataclass(frozen=True)
class SentimentRecord:
    url: str
    distribution: EmotionDistribution
    dominant: Emotion
    model_id: str = "emotion"
    version: str = ChunkingConfig().version

    def to_dict(self) -> dict:
        return {
            "url": self.url,
            "model_id": self.model_id,
            "version": self.version,
            "distribution": self.distribution.to_dict(),
            "dominant": self.dominant.value,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SentimentRecord":
        return cls(
            url=d["url"],
            distribution=EmotionDistribution(d["distribution"]),
            dominant=Emotion(d["dominant"]),
            model_id=d.get("model_id", "emotion"),
            version=d.get("version", ChunkingConfig().version),
        )


class EmotionScorer(Protocol):
    def score(self, tokens: Sequence[str]) -> EmotionDistribution: ...


def analyze_article(
    article: Article,
    backend: EmotionScorer,
    cfg: ChunkingConfig = ChunkingConfig(),
    *,
    model_id: str = "emotion",
) -> SentimentRecord:
    """Unweighted mean of per-chunk distributions; dominant is its argmax."""
    windows = chunk(tokenize(article.content), cfg)
    if not windows:
        raise EmptyInput(f"{article.url}: no tokens to score")
    dists = []
    for index, window in enumerate(windows):
        try:
            dists.append(backend.score(window))
        except AuthError:
            raise
        except BackendError as exc:
            if exc.chunk_index is not None:
                raise
            raise BackendError(str(exc), chunk_index=index) from exc
        except (TransportError, ValueError) as exc:
            raise BackendError(str(exc), chunk_index=index) from exc
    mean = mean_distribution(dists)
    return SentimentRecord(article.url, mean, mean.dominant(), model_id, cfg.version)


@dataclass
class SentimentResult:
    records: list[SentimentRecord]
    failures: list[tuple[str, str]]
    pairs_sent: int = 0


def analyze_corpus(
    corpus: Corpus,
    backend: EmotionScorer,
    cfg: ChunkingConfig = ChunkingConfig(),
    cache: JsonlCache | None = None,
    *,
    model_id: str = "emotion",
    workers: int = 4,
    policy: RatePolicy = RatePolicy(),
) -> SentimentResult:
    limiter = RateLimiter(policy)
    records, todo = [], []
    for article in corpus:
        hit = cache.get((article.url, model_id, cfg.version)) if cache is not None else None
        if hit is not None:
            records.append(SentimentRecord.from_dict(hit))
        else:
            todo.append(article)

    def work(article):
        try:
            with limiter:
                rec = analyze_article(article, backend, cfg, model_id=model_id)
        except AuthError:
            raise
        except BiasLensError as exc:
            logger.warning("emotion scoring failed for %s: %s", article.url, exc)
            return (article.url, str(exc))
        if cache is not None:
            cache.put(rec.to_dict())
        return rec

    failures = []
    if todo:
        with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
            for outcome in pool.map(work, todo):
                (failures if isinstance(outcome, tuple) else records).append(outcome)
    if cache is not None:
        cache.compact()
    records.sort(key=lambda r: r.url)
    return SentimentResult(records, sorted(failures), len(todo))


# -- aggregation --------------------------------------------------------------

@dataclass(frozen=True)
class EmotionGroup:
    key: tuple
    n: int
    mean: EmotionDistribution
    # share of members whose dominant emotion is each class
    dominant_share: EmotionDistribution

    @property
    def label(self) -> str:
        return "|".join(str(k) for k in self.key)


@dataclass
class AggregateResult:
    groups: list[EmotionGroup]
    join_misses: list[str]


def aggregate(
    sentiments: Iterable[SentimentRecord],
    classifications: Iterable[ClassificationRecord],
    corpus: Corpus,
    windows: Mapping,
    group_by: Sequence[str] = GROUP_KEYS,
) -> AggregateResult:
    """Mean emotion distribution per group.

    ``classifications`` should come from a single model. Articles that are
    scored but unclassified (or the reverse) are reported as join misses and
    left out. ``windows`` maps each conflict to its :class:`StudyWindow`.
    """
    unknown = set(group_by) - set(GROUP_KEYS)
    if unknown:
        raise ValueError(f"unknown group keys: {sorted(unknown)}")
    leaning = {}
    for rec in classifications:
        if rec.url in leaning and leaning[rec.url] != rec.label:
            raise ValueError(f"{rec.url}: conflicting labels; pass one model's records")
        leaning[rec.url] = rec.label
    by_url = corpus.by_url()
    scored = {rec.url: rec for rec in sentiments}
    misses = sorted(set(scored) ^ set(leaning))
    members: dict[tuple, list[SentimentRecord]] = defaultdict(list)
    for url, rec in scored.items():
        if url not in leaning or url not in by_url:
            if url not in misses:
                misses.append(url)
            continue
        article = by_url[url]
        attrs = {
            "source": article.source,
            "conflict": article.conflict.value,
            "period": period_of(article, windows[article.conflict]),
            "leaning": leaning[url].value,
        }
        members[tuple(attrs[k] for k in group_by)].append(rec)
    groups = []
    for key in sorted(members):
        recs = members[key]
        dominant_counts = defaultdict(int)
        for r in recs:
            dominant_counts[r.dominant] += 1
        groups.append(
            EmotionGroup(
                key=key,
                n=len(recs),
                mean=mean_distribution([r.distribution for r in recs]),
                dominant_share=EmotionDistribution(
                    {e: dominant_counts[e] / len(recs) for e in EMOTIONS}
                ),
            )
        )
    return AggregateResult(groups, sorted(misses))


def write_csv(groups: Sequence[EmotionGroup], path: str | Path, *, basis: str = "mean") -> Path:
    """Write ``group,anger,...,neutral`` rows; ``basis`` is mean or dominant."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for g in groups:
            dist = g.mean if basis == "mean" else g.dominant_share
            writer.writerow([g.label] + [repr(dist.probs[e]) for e in EMOTIONS])
    return path


def read_csv(path: str | Path) -> dict[str, EmotionDistribution]:
    with open(path, encoding="utf-8", newline="") as fh:
        return {
            row["group"]: EmotionDistribution({e: float(row[e.value]) for e in EMOTIONS})
            for row in csv.DictReader(fh)
        }
