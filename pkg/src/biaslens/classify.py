"""Political-leaning classification by chunk voting or whole-article prompting."""

from __future__ import annotations

import enum
import hashlib
import json
import logging
import time
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from typing import Callable, Iterable, Mapping, Protocol, Sequence

from .cache import JsonlCache
from .corpus import DEFAULT_MAX_TOKENS, Article, Corpus, TokenSequence, punctuation_chars, tokenize
from .errors import (
    AllRunsUnparseable,
    AuthError,
    BackendError,
    BiasLensError,
    EmptyInput,
    FailureRateExceeded,
    TooLong,
    TransportError,
    Unparseable,
)
from .transport import RateLimiter, RatePolicy, call_with_retry

logger = logging.getLogger(__name__)

DEFAULT_PROMPT_VERSION = "v1"
BANNED_DEFINITION_PHRASES = (
    "left-wing means",
    "right-wing means",
    "left means",
    "right means",
    "centre means",
    "center means",
    "is defined as",
    "refers to",
)
CACHE_KEY_FIELDS = ("url", "model_id", "prompt_version", "strategy")


class PoliticalLabel(str, enum.Enum):
    LEFT = "Left"
    CENTRE = "Centre"
    RIGHT = "Right"


_LABEL_WORDS = {
    "left": PoliticalLabel.LEFT,
    "right": PoliticalLabel.RIGHT,
    "centre": PoliticalLabel.CENTRE,
    "center": PoliticalLabel.CENTRE,
    "neutral": PoliticalLabel.CENTRE,
}


class Strategy(str, enum.Enum):
    CHUNK_VOTE = "ChunkVote"
    PROMPT = "Prompt"


@dataclass(frozen=True)
class ChunkingConfig:
    window: int = 512
    stride: int = 256

    def __post_init__(self):
        if not 0 < self.stride <= self.window:
            raise ValueError("chunking requires 0 < stride <= window")

    @property
    def version(self) -> str:
        return f"chunk-w{self.window}-s{self.stride}"


@dataclass(frozen=True)
class ChunkPrediction:
    chunk_index: int
    label: PoliticalLabel


@dataclass(frozen=True)
class BackendRequest:
    text: str
    temperature: float = 0.0
    max_output_tokens: int = 8
    stop_tokens: tuple[str, ...] = ("\n",)

    def canonical(self) -> str:
        return json.dumps(
            {
                "text": self.text,
                "temperature": self.temperature,
                "max_output_tokens": self.max_output_tokens,
                "stop_tokens": list(self.stop_tokens),
            },
            sort_keys=True,
            ensure_ascii=False,
        )

    def digest(self) -> str:
        return hashlib.sha256(self.canonical().encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class ClassificationRecord:
    url: str
    model_id: str
    label: PoliticalLabel
    run_labels: tuple[PoliticalLabel, ...]
    strategy: Strategy
    prompt_version: str

    def __post_init__(self):
        if not self.run_labels:
            raise ValueError("run_labels must be non-empty")

    @property
    def cache_key(self) -> tuple:
        return (self.url, self.model_id, self.prompt_version, self.strategy.value)

    def to_dict(self) -> dict:
        return {
            "url": self.url,
            "model_id": self.model_id,
            "label": self.label.value,
            "run_labels": [lab.value for lab in self.run_labels],
            "strategy": self.strategy.value,
            "prompt_version": self.prompt_version,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ClassificationRecord":
        return cls(
            url=d["url"],
            model_id=d["model_id"],
            label=PoliticalLabel(d["label"]),
            run_labels=tuple(PoliticalLabel(x) for x in d["run_labels"]),
            strategy=Strategy(d["strategy"]),
            prompt_version=d["prompt_version"],
        )


class ChunkClassifier(Protocol):
    def predict(self, tokens: Sequence[str]) -> PoliticalLabel: ...


class TextBackend(Protocol):
    def complete(self, request: BackendRequest) -> str: ...


# -- windowing and voting -----------------------------------------------------

def chunk_spans(n: int, cfg: ChunkingConfig) -> list[tuple[int, int]]:
    """Half-open ``[start, end)`` spans covering ``range(n)``.

    Starts are 0, s, 2s, ...; generation stops at the first span that
    reaches ``n``.
    """
    spans = []
    start = 0
    while start < n:
        end = min(start + cfg.window, n)
        spans.append((start, end))
        if end == n:
            break
        start += cfg.stride
    return spans


def chunk(tokens: TokenSequence | Sequence[str], cfg: ChunkingConfig) -> list[tuple[str, ...]]:
    toks = tuple(tokens)
    return [toks[a:b] for a, b in chunk_spans(len(toks), cfg)]


def vote(labels: Iterable[PoliticalLabel], tie: PoliticalLabel = PoliticalLabel.CENTRE) -> PoliticalLabel:
    """Majority label; any tie for the top count resolves to ``tie``."""
    counts = Counter(labels)
    if not counts:
        raise EmptyInput("cannot vote over zero labels")
    top = max(counts.values())
    winners = [lab for lab, c in counts.items() if c == top]
    return winners[0] if len(winners) == 1 else tie


def classify_chunked(
    article: Article,
    backend: ChunkClassifier,
    cfg: ChunkingConfig = ChunkingConfig(),
    *,
    model_id: str = "chunk",
) -> ClassificationRecord:
    windows = chunk(tokenize(article.content), cfg)
    if not windows:
        raise EmptyInput(f"{article.url}: no tokens to classify")
    labels = []
    for index, window in enumerate(windows):
        try:
            labels.append(PoliticalLabel(backend.predict(window)))
        except AuthError:
            raise
        except BackendError as exc:
            if exc.chunk_index is not None:
                raise
            raise BackendError(str(exc), chunk_index=index) from exc
        except (TransportError, ValueError) as exc:
            raise BackendError(str(exc), chunk_index=index) from exc
    return ClassificationRecord(
        url=article.url,
        model_id=model_id,
        label=vote(labels),
        run_labels=tuple(labels),
        strategy=Strategy.CHUNK_VOTE,
        prompt_version=cfg.version,
    )


# -- prompting ----------------------------------------------------------------

def load_template(version: str = DEFAULT_PROMPT_VERSION) -> str:
    path = resources.files("biaslens.data").joinpath("prompts", f"{version}.txt")
    try:
        return path.read_text("utf-8")
    except FileNotFoundError:
        raise ValueError(f"unknown prompt version: {version}") from None


def check_template(template: str, banned: Sequence[str] = BANNED_DEFINITION_PHRASES) -> None:
    folded = template.casefold()
    for word in ("Left", "Right", "Centre"):
        if word not in template:
            raise ValueError(f"prompt template must name the label {word!r}")
    for phrase in banned:
        if phrase.casefold() in folded:
            raise ValueError(f"prompt template defines a label: {phrase!r}")
    if "{content}" not in template:
        raise ValueError("prompt template lacks a {content} placeholder")


def build_prompt(
    article: Article,
    template_version: str = DEFAULT_PROMPT_VERSION,
    *,
    max_tokens: int = DEFAULT_MAX_TOKENS,
    banned: Sequence[str] = BANNED_DEFINITION_PHRASES,
) -> str:
    n = tokenize(article.content).n
    if n > max_tokens:
        raise TooLong(f"{article.url}: {n} tokens exceeds {max_tokens}")
    template = load_template(template_version)
    check_template(template, banned)
    # plain replacement: article text may itself contain braces
    return template.replace("{title}", article.title).replace("{content}", article.content)


def parse_label(raw: str) -> PoliticalLabel:
    word = raw.strip().strip(punctuation_chars() + " \t\r\n*`").casefold()
    try:
        return _LABEL_WORDS[word]
    except KeyError:
        raise Unparseable(raw) from None


def classify_prompted(
    article: Article,
    backend: TextBackend,
    runs: int = 3,
    policy: RatePolicy = RatePolicy(),
    *,
    model_id: str = "prompt",
    prompt_version: str = DEFAULT_PROMPT_VERSION,
    max_output_tokens: int = 8,
    limiter: RateLimiter | None = None,
    sleep: Callable[[float], None] = time.sleep,
) -> ClassificationRecord:
    """Send the same request ``runs`` times and vote over parsed labels.

    Unparseable replies are re-requested up to ``policy.max_retries`` times
    and then dropped. Raises :class:`AllRunsUnparseable` when no run yields
    a label.
    """
    if runs < 1 or runs % 2 == 0:
        raise ValueError("runs must be a positive odd number")
    request = BackendRequest(
        text=build_prompt(article, prompt_version), max_output_tokens=max_output_tokens
    )

    def call() -> str:
        if limiter is None:
            return backend.complete(request)
        with limiter:
            return backend.complete(request)

    labels, raws = [], []
    for run in range(runs):
        for attempt in range(policy.max_retries + 1):
            raw = call_with_retry(call, policy, sleep=sleep, what=f"{model_id} {article.url}")
            raws.append(raw)
            try:
                labels.append(parse_label(raw))
                break
            except Unparseable:
                logger.warning(
                    "%s run %d attempt %d: unparseable reply %r", model_id, run, attempt, raw[:80]
                )
    if not labels:
        raise AllRunsUnparseable(article.url, raws)
    return ClassificationRecord(
        url=article.url,
        model_id=model_id,
        label=vote(labels),
        run_labels=tuple(labels),
        strategy=Strategy.PROMPT,
        prompt_version=prompt_version,
    )


# -- corpus level -------------------------------------------------------------

@dataclass
class ModelSpec:
    model_id: str
    strategy: Strategy
    backend: object
    runs: int = 3
    chunking: ChunkingConfig = field(default_factory=ChunkingConfig)
    policy: RatePolicy = field(default_factory=RatePolicy)
    prompt_version: str = DEFAULT_PROMPT_VERSION

    @property
    def version(self) -> str:
        if self.strategy is Strategy.CHUNK_VOTE:
            return self.chunking.version
        return self.prompt_version


@dataclass(frozen=True)
class Failure:
    url: str
    model_id: str
    kind: str
    message: str

    def to_dict(self) -> dict:
        return {"url": self.url, "model_id": self.model_id, "kind": self.kind, "message": self.message}


@dataclass
class ClassifyResult:
    records: list[ClassificationRecord]
    failures: list[Failure]
    pairs_sent: int = 0


def _failure_kind(exc: Exception) -> str:
    if isinstance(exc, AllRunsUnparseable):
        return "Unclassified"
    return type(exc).__name__


def classify_corpus(
    corpus: Corpus,
    registry: Mapping[str, ModelSpec],
    cache: JsonlCache | None = None,
    *,
    workers: int = 4,
    failure_threshold: float = 0.5,
    sleep: Callable[[float], None] = time.sleep,
) -> ClassifyResult:
    """Classify every article with every registered model.

    Pairs already in ``cache`` are not re-sent. Records come back sorted by
    ``(model_id, url)`` whatever the completion order. Raises
    :class:`FailureRateExceeded` when the share of failed pairs is above
    ``failure_threshold``.
    """
    limiters = {mid: RateLimiter(spec.policy) for mid, spec in registry.items()}
    records: list[ClassificationRecord] = []
    todo: list[tuple[Article, ModelSpec]] = []
    for spec in registry.values():
        for article in corpus:
            key = (article.url, spec.model_id, spec.version, spec.strategy.value)
            hit = cache.get(key) if cache is not None else None
            if hit is not None:
                records.append(ClassificationRecord.from_dict(hit))
            else:
                todo.append((article, spec))

    def work(item):
        article, spec = item
        try:
            if spec.strategy is Strategy.CHUNK_VOTE:
                with limiters[spec.model_id]:
                    rec = classify_chunked(article, spec.backend, spec.chunking, model_id=spec.model_id)
            else:
                rec = classify_prompted(
                    article, spec.backend, spec.runs, spec.policy,
                    model_id=spec.model_id, prompt_version=spec.prompt_version,
                    limiter=limiters[spec.model_id], sleep=sleep,
                )
        except AuthError:
            raise  # every other pair would fail the same way
        except BiasLensError as exc:
            logger.warning("%s / %s failed: %s", spec.model_id, article.url, exc)
            return Failure(article.url, spec.model_id, _failure_kind(exc), str(exc))
        if cache is not None:
            cache.put(rec.to_dict())
        return rec

    failures: list[Failure] = []
    if todo:
        with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
            for outcome in pool.map(work, todo):
                if isinstance(outcome, Failure):
                    failures.append(outcome)
                else:
                    records.append(outcome)
    if cache is not None:
        cache.compact()

    records.sort(key=lambda r: (r.model_id, r.url))
    failures.sort(key=lambda f: (f.model_id, f.url))
    result = ClassifyResult(records, failures, pairs_sent=len(todo))
    total = len(records) + len(failures)
    if total and len(failures) / total > failure_threshold:
        raise FailureRateExceeded(len(failures) / total, failure_threshold, records, failures)
    return result
