"""Numeric bias encoding, period summaries, scores and time series."""

from __future__ import annotations

import csv
import enum
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from datetime import date, timedelta
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .classify import ClassificationRecord, PoliticalLabel
from .corpus import Article, Conflict, Corpus, StudyWindow, period_of
from .errors import DanglingRecord, EmptySubset

LABELS = (PoliticalLabel.CENTRE, PoliticalLabel.LEFT, PoliticalLabel.RIGHT)
PERIOD_NAMES = {"PreWar": "Pre-war", "DuringWar": "During-war"}

_SCORES = {PoliticalLabel.LEFT: -1, PoliticalLabel.CENTRE: 0, PoliticalLabel.RIGHT: 1}


def encode(label: PoliticalLabel) -> int:
    return _SCORES[PoliticalLabel(label)]


@dataclass(frozen=True)
class PeriodSummary:
    source: str
    conflict: Conflict
    period: str
    model_id: str
    counts: Mapping[PoliticalLabel, int]

    def __post_init__(self):
        counts = {lab: int(self.counts.get(lab, 0)) for lab in LABELS}
        if sum(counts.values()) < 1:
            raise ValueError("a period summary needs at least one article")
        object.__setattr__(self, "counts", counts)

    @property
    def n_articles(self) -> int:
        return sum(self.counts.values())

    @property
    def proportions(self) -> dict[PoliticalLabel, float]:
        n = self.n_articles
        return {lab: self.counts[lab] / n for lab in LABELS}

    @property
    def key(self) -> tuple:
        return (self.conflict.value, self.source, self.model_id, self.period)


def _resolve(records: Iterable[ClassificationRecord], corpus: Corpus) -> list[tuple[ClassificationRecord, Article]]:
    by_url = corpus.by_url()
    pairs = []
    for rec in records:
        try:
            pairs.append((rec, by_url[rec.url]))
        except KeyError:
            raise DanglingRecord(f"{rec.url} ({rec.model_id}) is not in the corpus") from None
    return pairs


def period_summary(
    records: Iterable[ClassificationRecord],
    corpus: Corpus,
    windows: Mapping[Conflict, StudyWindow],
) -> list[PeriodSummary]:
    """Label counts per (source, conflict, period, model), sorted by key."""
    counts: dict[tuple, Counter] = defaultdict(Counter)
    for rec, article in _resolve(records, corpus):
        period = period_of(article, windows[article.conflict])
        counts[(article.source, article.conflict, period, rec.model_id)][rec.label] += 1
    rows = [PeriodSummary(s, c, p, m, cnt) for (s, c, p, m), cnt in counts.items()]
    return sorted(rows, key=lambda r: r.key)


def avg_score(labels: Iterable[PoliticalLabel | ClassificationRecord]) -> float:
    """Mean of encoded scores, i.e. P(Right) - P(Left) of the subset."""
    values = [encode(x.label if isinstance(x, ClassificationRecord) else x) for x in labels]
    if not values:
        raise EmptySubset("cannot score an empty subset")
    # integer sum, so the result equals (n_right - n_left) / n exactly
    return sum(values) / len(values)


def rl_difference(summary: PeriodSummary | Mapping) -> float:
    """Right minus Left share; negative values mean Left-leaning."""
    if isinstance(summary, PeriodSummary):
        c = summary.counts
        return (c[PoliticalLabel.RIGHT] - c[PoliticalLabel.LEFT]) / summary.n_articles
    props = {PoliticalLabel(k): float(v) for k, v in summary.items()}
    return props.get(PoliticalLabel.RIGHT, 0.0) - props.get(PoliticalLabel.LEFT, 0.0)


# -- time series --------------------------------------------------------------

class Bucket(str, enum.Enum):
    WEEKLY = "Weekly"
    MONTHLY = "Monthly"

    def start_of(self, day: date) -> date:
        if self is Bucket.WEEKLY:
            return day - timedelta(days=day.weekday())
        return day.replace(day=1)


@dataclass(frozen=True)
class SeriesPoint:
    period_start: date
    mean_score: float
    n: int


@dataclass(frozen=True)
class Event:
    date: date
    caption: str


@dataclass(frozen=True)
class BiasTimeSeries:
    bucket: Bucket
    points: tuple[SeriesPoint, ...]
    events: tuple[Event, ...] = ()
    name: str = ""

    def __post_init__(self):
        starts = [p.period_start for p in self.points]
        if any(a >= b for a, b in zip(starts, starts[1:])):
            raise ValueError("series points must be strictly increasing in date")
        if any(not -1.0 <= p.mean_score <= 1.0 for p in self.points):
            raise ValueError("mean scores must lie in [-1, 1]")


def time_series(
    records: Iterable[ClassificationRecord],
    corpus: Corpus,
    bucket: Bucket | str = Bucket.WEEKLY,
    events: Sequence[Event] = (),
    *,
    name: str = "",
) -> BiasTimeSeries:
    """Mean encoded score per ISO week (dated by its Monday) or calendar month.

    Buckets with no articles are left out rather than zero-filled.
    """
    bucket = Bucket(bucket)
    members: dict[date, list[int]] = defaultdict(list)
    for rec, article in _resolve(records, corpus):
        members[bucket.start_of(article.published_date)].append(encode(rec.label))
    points = tuple(
        SeriesPoint(start, sum(vals) / len(vals), len(vals)) for start, vals in sorted(members.items())
    )
    return BiasTimeSeries(bucket, points, tuple(sorted(events, key=lambda e: e.date)), name)


def load_events(path: str | Path | None = None) -> list[Event]:
    """Read a ``date,caption`` CSV; the packaged default when ``path`` is None."""
    if path is None:
        text = resources.files("biaslens.data").joinpath("events.csv").read_text("utf-8")
    else:
        text = Path(path).read_text("utf-8")
    rows = csv.DictReader(text.splitlines())
    return sorted(
        (Event(date.fromisoformat(r["date"].strip()), r["caption"].strip()) for r in rows),
        key=lambda e: e.date,
    )


# -- score tables -------------------------------------------------------------

@dataclass(frozen=True)
class ScoreRow:
    model_id: str
    source: str
    conflict: str
    period: str
    score: float
    n: int


def score_table(
    records: Iterable[ClassificationRecord],
    corpus: Corpus,
    windows: Mapping[Conflict, StudyWindow],
) -> list[ScoreRow]:
    """Average scores per outlet and period, plus pooled rows.

    ``source == "All"`` pools outlets, ``period == "All"`` pools periods.
    """
    groups: dict[tuple, list[PoliticalLabel]] = defaultdict(list)
    for rec, article in _resolve(records, corpus):
        period = period_of(article, windows[article.conflict])
        for src in (article.source, "All"):
            for per in (period, "All"):
                groups[(rec.model_id, src, article.conflict.value, per)].append(rec.label)
    return [
        ScoreRow(m, s, c, p, avg_score(labels), len(labels))
        for (m, s, c, p), labels in sorted(groups.items())
    ]


# -- CSV ----------------------------------------------------------------------

def metric_name(conflict: Conflict, period: str, label: PoliticalLabel | str) -> str:
    tail = label.value if isinstance(label, PoliticalLabel) else label
    return f"{conflict.short} {PERIOD_NAMES[period]} {tail}"


def write_summary_csv(rows: Sequence[PeriodSummary], path: str | Path) -> Path:
    """``metric,model,value`` rows laid out like the per-outlet summary tables."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(("metric", "model", "value"))
        for row in sorted(rows, key=lambda r: (r.conflict.short, r.period == "PreWar", r.model_id)):
            props = row.proportions
            for lab in LABELS:
                writer.writerow((metric_name(row.conflict, row.period, lab), row.model_id, repr(props[lab])))
            writer.writerow((metric_name(row.conflict, row.period, "N"), row.model_id, row.n_articles))
    return path


def read_summary_csv(path: str | Path, source: str) -> list[PeriodSummary]:
    short = {c.short: c for c in Conflict}
    periods = {v: k for k, v in PERIOD_NAMES.items()}
    values: dict[tuple, dict] = defaultdict(dict)
    with open(path, encoding="utf-8", newline="") as fh:
        for r in csv.DictReader(fh):
            conflict, period, tail = r["metric"].split(" ")
            values[(short[conflict], periods[period], r["model"])][tail] = r["value"]
    rows = []
    for (conflict, period, model), vals in values.items():
        n = int(vals["N"])
        counts = {lab: round(float(vals[lab.value]) * n) for lab in LABELS}
        rows.append(PeriodSummary(source, conflict, period, model, counts))
    return sorted(rows, key=lambda r: r.key)


def write_series_csv(series: BiasTimeSeries, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(("period_start", "mean_score", "n"))
        for p in series.points:
            writer.writerow((p.period_start.isoformat(), repr(p.mean_score), p.n))
    return path


def read_series_csv(path: str | Path, bucket: Bucket | str = Bucket.WEEKLY) -> BiasTimeSeries:
    with open(path, encoding="utf-8", newline="") as fh:
        points = tuple(
            SeriesPoint(date.fromisoformat(r["period_start"]), float(r["mean_score"]), int(r["n"]))
            for r in csv.DictReader(fh)
        )
    return BiasTimeSeries(Bucket(bucket), points)


def write_scores_csv(rows: Sequence[ScoreRow], path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(("model", "source", "conflict", "period", "score", "n"))
        for r in rows:
            writer.writerow((r.model_id, r.source, r.conflict, r.period, repr(r.score), r.n))
    return path
