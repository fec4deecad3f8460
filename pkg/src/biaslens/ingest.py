"""Article acquisition from a tag-filtered content API and from URL lists."""

from __future__ import annotations

import csv
import io
import json
import logging
import os
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import date, datetime, timezone
from pathlib import Path
from typing import Iterable, Sequence

from bs4 import BeautifulSoup

from .corpus import (
    Article,
    Conflict,
    Corpus,
    Rejected,
    StudyWindow,
    clean,
    dedup,
    normalize_source,
)
from .errors import AllFetchesFailed, AuthError, SchemaError, TransportError
from .transport import HttpClient, RatePolicy

logger = logging.getLogger(__name__)

API_KEY_ENV = "BIASLENS_CONTENT_API_KEY"

DEFAULT_KEYWORDS = {
    Conflict.RUSSIA_UKRAINE: frozenset({"Russia", "Ukraine"}),
    Conflict.ISRAEL_HAMAS: frozenset({"Hamas", "Palestine", "Israel"}),
}
DEFAULT_TAGS = {
    Conflict.RUSSIA_UKRAINE: frozenset({"world/russia", "world/ukraine"}),
    Conflict.ISRAEL_HAMAS: frozenset(
        {"world/hamas", "world/israel", "world/palestinian-territories"}
    ),
}


@dataclass(frozen=True)
class KeywordSet:
    conflict: Conflict
    keywords: frozenset[str]

    def __post_init__(self):
        if not self.keywords:
            raise ValueError("keyword set is empty")
        object.__setattr__(self, "keywords", frozenset(self.keywords))

    @classmethod
    def default(cls, conflict: Conflict | str) -> "KeywordSet":
        conflict = Conflict.parse(conflict)
        return cls(conflict, DEFAULT_KEYWORDS[conflict])

    def matches(self, text: str) -> bool:
        folded = text.casefold()
        return any(k.casefold() in folded for k in self.keywords)


@dataclass(frozen=True)
class TagQuery:
    tags: frozenset[str]
    from_date: date
    to_date: date

    def __post_init__(self):
        if not self.tags:
            raise ValueError("tag query needs at least one tag")
        if self.from_date > self.to_date:
            raise ValueError("from_date must not be after to_date")
        object.__setattr__(self, "tags", frozenset(self.tags))


@dataclass
class RawRecord:
    url: str
    title: str
    body: str
    date: str | None = None
    tags: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"url": self.url, "title": self.title, "body": self.body,
                "date": self.date, "tags": list(self.tags)}

    @classmethod
    def from_dict(cls, d: dict) -> "RawRecord":
        return cls(
            url=d["url"],
            title=d.get("title") or "",
            body=d.get("body") if d.get("body") is not None else d.get("content") or "",
            date=d.get("date") or d.get("published_date"),
            tags=list(d.get("tags") or []),
        )


def save_raw(records: Iterable[RawRecord], path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for rec in records:
            fh.write(json.dumps(rec.to_dict(), ensure_ascii=False) + "\n")


def load_raw(path: str | Path) -> list[RawRecord]:
    with open(path, encoding="utf-8") as fh:
        return [RawRecord.from_dict(json.loads(line)) for line in fh if line.strip()]


def api_key_from_env() -> str:
    key = os.environ.get(API_KEY_ENV, "")
    if not key:
        raise AuthError(f"{API_KEY_ENV} is not set")
    return key


# -- content API --------------------------------------------------------------

def _parse_result(item: dict) -> RawRecord:
    try:
        url = item["webUrl"]
        title = item["webTitle"]
        published = item["webPublicationDate"]
        body = item["fields"]["bodyText"]
    except (KeyError, TypeError) as exc:
        raise SchemaError(f"result missing required field: {exc}") from None
    tags = [t["id"] for t in item.get("tags") or [] if isinstance(t, dict) and "id" in t]
    return RawRecord(url=url, title=title, body=body, date=published, tags=tags)


def fetch_by_tags(
    endpoint: str,
    query: TagQuery,
    policy: RatePolicy,
    api_key: str,
    *,
    page_size: int = 50,
    client: HttpClient | None = None,
) -> list[RawRecord]:
    """Retrieve every result page for ``query``, in page order.

    Tags are OR-ed. Page 1 reports the page count; the remaining pages are
    fetched by a worker pool bounded by ``policy.max_concurrent``.
    """
    if not api_key:
        raise AuthError("api key is empty")
    client = client or HttpClient(policy)
    base = {
        "tag": "|".join(sorted(query.tags)),
        "from-date": query.from_date.isoformat(),
        "to-date": query.to_date.isoformat(),
        "page-size": page_size,
        "order-by": "oldest",
        "show-fields": "bodyText",
        "show-tags": "keyword",
        "api-key": api_key,
    }

    def fetch_page(page: int) -> tuple[int, list[RawRecord]]:
        reply = client.get(endpoint, params={**base, "page": page})
        try:
            payload = reply.json()["response"]
            results = payload["results"]
            pages = int(payload["pages"])
        except (ValueError, KeyError, TypeError) as exc:
            raise SchemaError(f"page {page}: unexpected response shape ({exc})") from None
        return pages, [_parse_result(item) for item in results]

    pages, records = fetch_page(1)
    if pages <= 1:
        return records
    with ThreadPoolExecutor(max_workers=policy.max_concurrent) as pool:
        for _, page_records in pool.map(fetch_page, range(2, pages + 1)):
            records.extend(page_records)
    return records


# -- URL-list scraper ---------------------------------------------------------

@dataclass(frozen=True)
class UrlEntry:
    url: str
    title: str | None = None
    date: str | None = None


@dataclass(frozen=True)
class ScrapeFailure:
    url: str
    kind: str  # FetchFailed | ExtractFailed
    message: str


@dataclass
class ScrapeResult:
    records: list[RawRecord]
    failures: list[ScrapeFailure]
    filtered: int


def read_url_list(path: str | Path) -> list[UrlEntry]:
    """Read a plain-text (one URL per line) or CSV (``url`` column) list."""
    text = Path(path).read_text(encoding="utf-8")
    first = text.lstrip().splitlines()[0] if text.strip() else ""
    if "url" in [c.strip().strip('"').lower() for c in first.split(",")]:
        rows = csv.DictReader(io.StringIO(text))
        fields = {name.strip().lower(): name for name in rows.fieldnames or []}
        entries = []
        for row in rows:
            url = (row.get(fields["url"]) or "").strip()
            if not url:
                continue
            title = row.get(fields["title"]) if "title" in fields else None
            day = None
            for col in ("published_date", "date", "published"):
                if col in fields and row.get(fields[col]):
                    day = row[fields[col]].strip()
                    break
            entries.append(UrlEntry(url, title, day))
        return entries
    return [
        UrlEntry(line.strip())
        for line in text.splitlines()
        if line.strip() and not line.lstrip().startswith("#")
    ]


def extract_article(html: str) -> tuple[str, str, str | None]:
    """Return ``(title, body, date)`` extracted from a news page.

    The body is the text of the ``<article>`` element's paragraphs, or the
    page's visible text when there is no article element.
    """
    soup = BeautifulSoup(html, "html.parser")
    for tag in soup(["script", "style", "noscript", "template"]):
        tag.decompose()

    title = ""
    og = soup.find("meta", attrs={"property": "og:title"})
    if og and og.get("content"):
        title = og["content"]
    elif soup.find("h1"):
        title = soup.find("h1").get_text(" ", strip=True)
    elif soup.title:
        title = soup.title.get_text(" ", strip=True)

    article = soup.find("article")
    if article is not None:
        paragraphs = [p.get_text(" ", strip=True) for p in article.find_all("p")]
        body = "\n".join(p for p in paragraphs if p)
    else:
        root = soup.body or soup
        body = root.get_text(" ", strip=True)

    published = None
    meta = soup.find("meta", attrs={"property": "article:published_time"})
    if meta and meta.get("content"):
        published = meta["content"]
    else:
        stamp = soup.find("time", attrs={"datetime": True})
        if stamp is not None:
            published = stamp["datetime"]
    return title, body, published


def scrape_urls(
    url_list: Sequence[str | UrlEntry],
    keywords: KeywordSet,
    policy: RatePolicy,
    *,
    client: HttpClient | None = None,
) -> ScrapeResult:
    """Fetch and extract each URL; keep pages whose body matches a keyword.

    Per-URL failures are collected. Raises :class:`AllFetchesFailed` only
    when no URL could be fetched and extracted.
    """
    if not url_list:
        raise ValueError("url_list is empty")
    entries = [e if isinstance(e, UrlEntry) else UrlEntry(e) for e in url_list]
    client = client or HttpClient(policy)

    def work(entry: UrlEntry):
        try:
            reply = client.get(entry.url)
        except TransportError as exc:
            return ScrapeFailure(entry.url, "FetchFailed", str(exc))
        try:
            title, body, published = extract_article(reply.text)
        except Exception as exc:  # parser failures on hostile markup
            return ScrapeFailure(entry.url, "ExtractFailed", str(exc))
        if not body.strip():
            return ScrapeFailure(entry.url, "ExtractFailed", "no body text")
        return RawRecord(
            url=entry.url,
            title=entry.title or title,
            body=body,
            date=entry.date or published,
        )

    with ThreadPoolExecutor(max_workers=policy.max_concurrent) as pool:
        outcomes = list(pool.map(work, entries))

    records, failures, filtered = [], [], 0
    for outcome in outcomes:
        if isinstance(outcome, ScrapeFailure):
            logger.warning("%s: %s (%s)", outcome.url, outcome.kind, outcome.message)
            failures.append(outcome)
        elif keywords.matches(outcome.body):
            records.append(outcome)
        else:
            filtered += 1
    if failures and len(failures) == len(entries):
        raise AllFetchesFailed(failures)
    return ScrapeResult(records, failures, filtered)


def filter_keywords(records: Iterable[RawRecord], keywords: KeywordSet) -> tuple[list[RawRecord], int]:
    kept, dropped = [], 0
    for rec in records:
        if keywords.matches(rec.body):
            kept.append(rec)
        else:
            dropped += 1
    return kept, dropped


# -- raw records -> corpus ----------------------------------------------------

def parse_date(value: str | None) -> date:
    """Parse an ISO date or datetime; aware datetimes are converted to UTC."""
    if not value:
        raise ValueError("missing date")
    value = value.strip()
    if len(value) == 10:
        return date.fromisoformat(value)
    if value.endswith("Z"):
        value = value[:-1] + "+00:00"
    stamp = datetime.fromisoformat(value)
    if stamp.tzinfo is not None:
        stamp = stamp.astimezone(timezone.utc)
    return stamp.date()


def to_articles(
    records: Iterable[RawRecord],
    source: str,
    conflict: Conflict | str,
    window: StudyWindow | None = None,
) -> tuple[Corpus, Counter]:
    """Clean, stamp, window-check and dedup raw records.

    The returned counter tallies ``input``, ``kept`` and one key per drop
    reason (``Empty``, ``NonEnglish``, ``EncodingGarbage``, ``BadDate``,
    ``OutOfWindow``, ``Duplicate``).
    """
    source = normalize_source(source)
    conflict = Conflict.parse(conflict)
    report: Counter = Counter()
    articles = []
    for rec in records:
        report["input"] += 1
        try:
            title, content = clean(rec.title, rec.body)
        except Rejected as rej:
            report[rej.reason.value] += 1
            continue
        try:
            day = parse_date(rec.date)
        except ValueError:
            report["BadDate"] += 1
            continue
        if window is not None and not window.contains(day):
            report["OutOfWindow"] += 1
            continue
        if not rec.url:
            report["BadUrl"] += 1
            continue
        articles.append(Article(rec.url, title, content, day, source, conflict))
    corpus = dedup(Corpus(tuple(articles), provenance=f"{source}/{conflict.value}"))
    report["Duplicate"] += len(articles) - len(corpus)
    report["kept"] = len(corpus)
    return corpus, report
