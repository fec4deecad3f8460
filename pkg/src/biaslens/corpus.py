"""Article data model, cleaning, tokenization and JSONL persistence."""

from __future__ import annotations

import enum
import functools
import json
import logging
import sys
import unicodedata
from dataclasses import dataclass, field, replace
from datetime import date
from pathlib import Path
from typing import Iterable, Iterator

from .errors import BiasLensError, MalformedRecord, OutOfWindow

logger = logging.getLogger(__name__)

REPLACEMENT_CHAR = "�"
# share of non-space characters that may be U+FFFD before a text is garbage
GARBAGE_RATIO = 0.2
# minimum share of alphabetic characters that must be ASCII letters
ENGLISH_ASCII_RATIO = 0.6
DEFAULT_MAX_TOKENS = 10_000
RECORD_KEYS = ("url", "title", "content", "published_date", "source", "conflict")


class Conflict(str, enum.Enum):
    RUSSIA_UKRAINE = "RussiaUkraine"
    ISRAEL_HAMAS = "IsraelHamas"

    @property
    def short(self) -> str:
        return {"RussiaUkraine": "RU", "IsraelHamas": "IP"}[self.value]

    @classmethod
    def parse(cls, value: "str | Conflict") -> "Conflict":
        if isinstance(value, cls):
            return value
        key = "".join(ch for ch in str(value).lower() if ch.isalnum())
        for member in cls:
            if key in (member.value.lower(), member.short.lower()):
                return member
        aliases = {
            "ukrainerussia": cls.RUSSIA_UKRAINE,
            "ru": cls.RUSSIA_UKRAINE,
            "hamasisrael": cls.ISRAEL_HAMAS,
            "israelpalestine": cls.ISRAEL_HAMAS,
            "ih": cls.ISRAEL_HAMAS,
        }
        if key in aliases:
            return aliases[key]
        raise ValueError(f"unknown conflict: {value!r}")


def normalize_source(name: str) -> str:
    """Map outlet spellings onto the canonical ``BBC``/``Guardian`` names.

    Any other outlet keeps its own (stripped) name.
    """
    key = name.strip().lower()
    if key in ("bbc", "bbc news"):
        return "BBC"
    if key in ("guardian", "the guardian", "theguardian"):
        return "Guardian"
    if not key:
        raise ValueError("source name is empty")
    return name.strip()


@dataclass(frozen=True)
class Article:
    url: str
    title: str
    content: str
    published_date: date
    source: str
    conflict: Conflict

    def to_record(self) -> dict:
        return {
            "url": self.url,
            "title": self.title,
            "content": self.content,
            "published_date": self.published_date.isoformat(),
            "source": self.source,
            "conflict": self.conflict.value,
        }

    @classmethod
    def from_record(cls, record: dict) -> "Article":
        missing = [k for k in RECORD_KEYS if k not in record]
        if missing:
            raise ValueError(f"missing keys: {', '.join(missing)}")
        for key in RECORD_KEYS:
            if not isinstance(record[key], str):
                raise ValueError(f"{key} must be a string")
        if not record["url"]:
            raise ValueError("url is empty")
        return cls(
            url=record["url"],
            title=record["title"],
            content=record["content"],
            published_date=date.fromisoformat(record["published_date"]),
            source=normalize_source(record["source"]),
            conflict=Conflict.parse(record["conflict"]),
        )


@dataclass(frozen=True)
class StudyWindow:
    start_date: date
    end_date: date
    war_start_date: date

    def __post_init__(self):
        if not self.start_date <= self.war_start_date <= self.end_date:
            raise ValueError(
                "study window requires start_date <= war_start_date <= end_date"
            )

    def contains(self, day: date) -> bool:
        return self.start_date <= day <= self.end_date

    @classmethod
    def for_conflict(cls, conflict: "Conflict | str", **overrides) -> "StudyWindow":
        conflict = Conflict.parse(conflict)
        values = {
            "start_date": date(2020, 1, 1),
            "end_date": date(2024, 12, 31),
            "war_start_date": WAR_START_DATES[conflict],
        }
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**values)


WAR_START_DATES = {
    Conflict.RUSSIA_UKRAINE: date(2022, 2, 24),
    Conflict.ISRAEL_HAMAS: date(2023, 10, 7),
}


@dataclass(frozen=True)
class Corpus:
    articles: tuple[Article, ...] = ()
    provenance: str = field(default="", compare=False)
    # records skipped by a lenient load
    skipped_records: int = field(default=0, compare=False)

    def __post_init__(self):
        if not isinstance(self.articles, tuple):
            object.__setattr__(self, "articles", tuple(self.articles))

    def __len__(self) -> int:
        return len(self.articles)

    def __iter__(self) -> Iterator[Article]:
        return iter(self.articles)

    def by_url(self) -> dict[str, Article]:
        return {a.url: a for a in self.articles}

    def with_articles(self, articles: Iterable[Article]) -> "Corpus":
        return replace(self, articles=tuple(articles), skipped_records=0)


@dataclass(frozen=True)
class TokenSequence:
    tokens: tuple[str, ...]

    @property
    def n(self) -> int:
        return len(self.tokens)

    def __len__(self) -> int:
        return len(self.tokens)

    def __iter__(self):
        return iter(self.tokens)

    def __getitem__(self, item):
        return self.tokens[item]


# -- cleaning ---------------------------------------------------------------

class RejectReason(str, enum.Enum):
    EMPTY = "Empty"
    NON_ENGLISH = "NonEnglish"
    ENCODING_GARBAGE = "EncodingGarbage"


class Rejected(BiasLensError):
    def __init__(self, reason: RejectReason):
        self.reason = reason
        super().__init__(reason.value)


def _strip_text(text: str) -> str:
    kept = []
    for ch in text:
        if ch == REPLACEMENT_CHAR:
            continue
        if ch.isspace():
            kept.append(" ")
            continue
        if unicodedata.category(ch) in ("Cc", "Cf", "Cs", "Co"):
            continue
        kept.append(ch)
    return " ".join("".join(kept).split())


def _looks_english(text: str) -> bool:
    letters = [ch for ch in text if ch.isalpha()]
    if not letters:
        return False
    ascii_letters = sum(1 for ch in letters if ch.isascii())
    return ascii_letters / len(letters) >= ENGLISH_ASCII_RATIO


def clean(raw_title: str | None, raw_content: str | None) -> tuple[str, str]:
    """Return the cleaned ``(title, content)`` pair.

    Control characters and U+FFFD glyphs are dropped, whitespace runs
    collapse to one space, and the ends are trimmed. Raises
    :class:`Rejected` when the content is empty, mostly replacement glyphs,
    or fails the ASCII-letter English gate.
    """
    raw_title = raw_title or ""
    raw_content = raw_content or ""
    content = _strip_text(raw_content)
    if not content:
        raise Rejected(RejectReason.EMPTY)
    visible = [ch for ch in raw_content if not ch.isspace()]
    garbage = sum(1 for ch in visible if ch == REPLACEMENT_CHAR)
    if garbage / len(visible) > GARBAGE_RATIO:
        raise Rejected(RejectReason.ENCODING_GARBAGE)
    if not _looks_english(content):
        raise Rejected(RejectReason.NON_ENGLISH)
    return _strip_text(raw_title), content


# -- tokenization -----------------------------------------------------------

@functools.lru_cache(maxsize=1)
def punctuation_chars() -> str:
    return "".join(
        ch
        for ch in map(chr, range(sys.maxunicode + 1))
        if unicodedata.category(ch).startswith("P")
    )


def tokenize(content: str) -> TokenSequence:
    """Lowercase, split on Unicode whitespace, strip edge punctuation."""
    punct = punctuation_chars()
    stripped = (word.strip(punct) for word in content.lower().split())
    return TokenSequence(tuple(tok for tok in stripped if tok))


def token_count(content: str) -> int:
    return tokenize(content).n


# -- corpus operations ------------------------------------------------------

def dedup(corpus: Corpus) -> Corpus:
    seen: set[str] = set()
    kept = []
    for article in corpus.articles:
        if article.url in seen:
            continue
        seen.add(article.url)
        kept.append(article)
    return corpus.with_articles(kept)


def filter_by_token_count(corpus: Corpus, max_tokens: int = DEFAULT_MAX_TOKENS) -> Corpus:
    if max_tokens <= 0:
        raise ValueError("max_tokens must be positive")
    return corpus.with_articles(
        a for a in corpus.articles if token_count(a.content) <= max_tokens
    )


def partition_by_period(corpus: Corpus, window: StudyWindow) -> tuple[Corpus, Corpus]:
    """Split into (pre-war, during-war); the war start day is during-war."""
    pre, during = [], []
    for article in corpus.articles:
        if not window.contains(article.published_date):
            raise OutOfWindow(article.url, article.published_date, window)
        if article.published_date >= window.war_start_date:
            during.append(article)
        else:
            pre.append(article)
    return corpus.with_articles(pre), corpus.with_articles(during)


def period_of(article: Article, window: StudyWindow) -> str:
    if not window.contains(article.published_date):
        raise OutOfWindow(article.url, article.published_date, window)
    return "DuringWar" if article.published_date >= window.war_start_date else "PreWar"


# -- persistence ------------------------------------------------------------

def save(corpus: Corpus, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
        for article in corpus.articles:
            fh.write(json.dumps(article.to_record(), ensure_ascii=False) + "\n")
    tmp.replace(path)
    return path


def load(path: str | Path, *, strict: bool = False) -> Corpus:
    """Read a corpus JSONL file.

    In strict mode the first bad line raises :class:`MalformedRecord`; in
    lenient mode bad lines are skipped, logged and counted in
    ``Corpus.skipped_records``.
    """
    path = Path(path)
    articles = []
    skipped = 0
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
                if not isinstance(record, dict):
                    raise ValueError("record is not an object")
                articles.append(Article.from_record(record))
            except ValueError as exc:
                if strict:
                    raise MalformedRecord(lineno, str(exc)) from exc
                logger.warning("%s:%d skipped: %s", path, lineno, exc)
                skipped += 1
    return Corpus(tuple(articles), provenance=f"loaded from {path.name}", skipped_records=skipped)
