"""Pipeline stages over a run directory.

Each stage reads the previous stage's artifacts from the run directory and
writes its own, so stages can be run one at a time or chained with
:func:`run_all` with the same result.

Run directory layout::

    raw/{dataset}.jsonl            raw/ingest_report.json
    corpus/{dataset}.jsonl         corpus/clean_report.json
    ngram/{dataset}_n{n}.csv
    classify/{dataset}_{model}.jsonl   classify/{dataset}_{model}_failures.jsonl
    sentiment/{dataset}.jsonl
    tables/*.csv                   tables/index_report.json
    charts/*.svg
    cache/classify.jsonl           cache/sentiment.jsonl
    run.json
"""

from __future__ import annotations

import json
import logging
import time
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator

from filelock import FileLock, Timeout

from . import biasindex, corpus as corpus_mod, ingest, ngram, report, sentiment
from .cache import JsonlCache
from .classify import CACHE_KEY_FIELDS, ClassificationRecord, Strategy, classify_corpus
from .config import DatasetConfig, PipelineConfig, build_emotion_backend, build_model
from .corpus import Corpus
from .errors import ConfigError, EmptyCorpus, MissingStageInput, RunLocked
from .report import Aggregates, slug
from .sentiment import SentimentRecord
from .transport import Cassette, HttpClient

logger = logging.getLogger(__name__)

STAGES = ("ingest", "clean", "ngram", "classify", "sentiment", "index", "report")
LOCK_NAME = ".lock"
SENTIMENT_KEY_FIELDS = ("url", "model_id", "version")


@dataclass
class RunOptions:
    offline: bool = False
    strict: bool = False
    models: tuple[str, ...] | None = None
    conflict: str | None = None
    source: str | None = None
    ngram_n: tuple[int, ...] | None = None
    ngram_top: int | None = None
    record_timing: bool = False


@dataclass
class Run:
    config: PipelineConfig
    options: RunOptions = field(default_factory=RunOptions)
    timing: dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        # surface bad filters before any stage touches the run directory
        self.datasets()
        self.model_configs()

    @property
    def root(self) -> Path:
        return self.config.output_dir

    def path(self, *parts: str) -> Path:
        return self.root.joinpath(*parts)

    def datasets(self) -> list[DatasetConfig]:
        opts = self.options
        selected = []
        try:
            conflict = corpus_mod.Conflict.parse(opts.conflict) if opts.conflict else None
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        for ds in self.config.datasets:
            if conflict and ds.conflict is not conflict:
                continue
            if opts.source and ds.source != corpus_mod.normalize_source(opts.source):
                continue
            selected.append(ds)
        if not selected:
            raise ConfigError("no dataset matches the --conflict/--source filter")
        return selected

    def model_configs(self):
        models = self.config.models
        if self.options.models:
            known = {m.model_id for m in models}
            unknown = sorted(set(self.options.models) - known)
            if unknown:
                raise ConfigError(f"unknown model ids: {', '.join(unknown)}")
            models = [m for m in models if m.model_id in self.options.models]
        return models

    def require(self, path: Path, stage: str) -> Path:
        if not path.exists():
            raise MissingStageInput(f"{path} is missing; run `{stage}` first")
        return path

    def load_corpus(self, ds: DatasetConfig) -> Corpus:
        path = self.require(self.path("corpus", f"{ds.name}.jsonl"), "clean")
        return corpus_mod.load(path, strict=self.options.strict)


def _write_json(path: Path, data) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(data, indent=2, sort_keys=True, ensure_ascii=False) + "\n", encoding="utf-8")


def _read_json(path: Path) -> dict:
    return json.loads(path.read_text(encoding="utf-8")) if path.exists() else {}


def _write_jsonl(path: Path, rows) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for row in rows:
            fh.write(json.dumps(row, ensure_ascii=False, sort_keys=True) + "\n")


def _read_jsonl(path: Path) -> list[dict]:
    with open(path, encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]


@contextmanager
def locked(run_dir: Path) -> Iterator[None]:
    """Hold the run directory's lock file; a second process gets RunLocked."""
    run_dir.mkdir(parents=True, exist_ok=True)
    lock = FileLock(str(run_dir / LOCK_NAME), timeout=0)
    try:
        lock.acquire()
    except Timeout:
        raise RunLocked(f"{run_dir} is in use by another process") from None
    try:
        yield
    finally:
        lock.release()


@contextmanager
def _timed(run: Run, stage: str) -> Iterator[None]:
    start = time.perf_counter()
    yield
    run.timing[stage] = round(time.perf_counter() - start, 4)


# -- stages -------------------------------------------------------------------

def _client(run: Run, ds: DatasetConfig) -> HttpClient:
    cassette = None
    inp = ds.input
    if inp.cassette is not None:
        mode = "replay" if run.options.offline or inp.cassette.exists() else "record"
        try:
            cassette = Cassette(inp.cassette, mode)
        except FileNotFoundError as exc:
            raise ConfigError(str(exc)) from None
    elif run.options.offline:
        raise ConfigError(f"{ds.name}: --offline needs a cassette for input kind {inp.kind}")
    return HttpClient(run.config.ingest_policy, cassette=cassette)


def ingest_stage(run: Run) -> None:
    """Fetch or read raw records, apply the keyword filter, write raw/."""
    reports = _read_json(run.path("raw", "ingest_report.json"))
    for ds in run.datasets():
        inp = ds.input
        entry: dict = {"kind": inp.kind}
        if inp.kind == "file":
            records = ingest.load_raw(inp.path)
        elif inp.kind == "api":
            client = _client(run, ds)
            offline_replay = client.cassette is not None and client.cassette.mode == "replay"
            api_key = "replay" if offline_replay else ingest.api_key_from_env()
            query = ingest.TagQuery(inp.tags, ds.window.start_date, ds.window.end_date)
            records = ingest.fetch_by_tags(
                inp.endpoint, query, run.config.ingest_policy, api_key, page_size=inp.page_size, client=client
            )
            if client.cassette is not None and client.cassette.mode == "record":
                client.cassette.save()
        else:
            client = _client(run, ds)
            result = ingest.scrape_urls(ingest.read_url_list(inp.path), ds.keywords, run.config.ingest_policy, client=client)
            if client.cassette is not None and client.cassette.mode == "record":
                client.cassette.save()
            records = result.records
            entry["failures"] = [f.__dict__ for f in result.failures]
            entry["keyword_dropped"] = result.filtered
        entry["fetched"] = len(records) + entry.get("keyword_dropped", 0)
        if ds.keyword_filter and inp.kind != "urls":
            records, dropped = ingest.filter_keywords(records, ds.keywords)
            entry["keyword_dropped"] = dropped
        entry["kept"] = len(records)
        ingest.save_raw(records, run.path("raw", f"{ds.name}.jsonl"))
        reports[ds.name] = entry
        logger.info("ingest %s: %d records", ds.name, len(records))
    _write_json(run.path("raw", "ingest_report.json"), reports)


def clean_stage(run: Run) -> None:
    """Clean, window-check, dedup and length-filter raw records."""
    reports = _read_json(run.path("corpus", "clean_report.json"))
    for ds in run.datasets():
        raw = ingest.load_raw(run.require(run.path("raw", f"{ds.name}.jsonl"), "ingest"))
        corpus, counts = ingest.to_articles(raw, ds.source, ds.conflict, ds.window)
        capped = corpus_mod.filter_by_token_count(corpus, run.config.max_tokens)
        counts["TooManyTokens"] = len(corpus) - len(capped)
        counts["kept"] = len(capped)
        corpus_mod.save(capped, run.path("corpus", f"{ds.name}.jsonl"))
        reports[ds.name] = dict(sorted(counts.items()))
        logger.info("clean %s: %d articles kept", ds.name, len(capped))
    _write_json(run.path("corpus", "clean_report.json"), reports)


def ngram_stage(run: Run) -> list[str]:
    warnings = []
    ns = run.options.ngram_n or run.config.ngram_n
    k = run.options.ngram_top or run.config.ngram_top
    for ds in run.datasets():
        corpus = run.load_corpus(ds)
        for n in ns:
            try:
                rows = ngram.top_k(corpus, n, k, run.config.stopwords)
            except EmptyCorpus:
                warnings.append(f"{ds.name}: empty corpus, no {n}-gram table")
                continue
            ngram.write_csv(rows, run.path("ngram", f"{ds.name}_n{n}.csv"))
    return warnings


def classify_stage(run: Run) -> None:
    cfg = run.config
    registry = {
        m.model_id: build_model(m, cfg.chunking, offline=run.options.offline) for m in run.model_configs()
    }
    cache = JsonlCache(run.path("cache", "classify.jsonl"), CACHE_KEY_FIELDS)
    for ds in run.datasets():
        corpus = run.load_corpus(ds)
        result = classify_corpus(
            corpus, registry, cache, workers=cfg.workers, failure_threshold=cfg.failure_threshold
        )
        logger.info("classify %s: %d pairs sent to backends", ds.name, result.pairs_sent)
        for mid in registry:
            _write_jsonl(
                run.path("classify", f"{ds.name}_{slug(mid)}.jsonl"),
                (r.to_dict() for r in result.records if r.model_id == mid),
            )
            _write_jsonl(
                run.path("classify", f"{ds.name}_{slug(mid)}_failures.jsonl"),
                (f.to_dict() for f in result.failures if f.model_id == mid),
            )


def sentiment_stage(run: Run) -> None:
    cfg = run.config
    backend = build_emotion_backend(cfg.sentiment, offline=run.options.offline)
    cache = JsonlCache(run.path("cache", "sentiment.jsonl"), SENTIMENT_KEY_FIELDS)
    for ds in run.datasets():
        corpus = run.load_corpus(ds)
        result = sentiment.analyze_corpus(
            corpus, backend, cfg.chunking, cache,
            model_id=cfg.sentiment.model_id, workers=cfg.workers, policy=cfg.sentiment.policy,
        )
        logger.info("sentiment %s: %d articles sent to backend", ds.name, result.pairs_sent)
        for url, message in result.failures:
            logger.warning("sentiment %s: %s", url, message)
        _write_jsonl(run.path("sentiment", f"{ds.name}.jsonl"), (r.to_dict() for r in result.records))


def _events(run: Run) -> list[biasindex.Event]:
    return biasindex.load_events(run.config.events_path)


def index_stage(run: Run) -> list[str]:
    """Aggregate labels and emotions into the CSV tables under tables/."""
    cfg = run.config
    windows = cfg.windows()
    events = _events(run)
    agg = Aggregates()
    warnings: list[str] = []
    all_records: list[ClassificationRecord] = []
    pooled: list[Corpus] = []
    for ds in run.datasets():
        corpus = run.load_corpus(ds)
        pooled.append(corpus)
        sent_path = run.require(run.path("sentiment", f"{ds.name}.jsonl"), "sentiment")
        sentiments = [SentimentRecord.from_dict(d) for d in _read_jsonl(sent_path)]
        for m in run.model_configs():
            rec_path = run.require(run.path("classify", f"{ds.name}_{slug(m.model_id)}.jsonl"), "classify")
            records = [ClassificationRecord.from_dict(d) for d in _read_jsonl(rec_path)]
            if not records:
                warnings.append(f"{ds.name}/{m.model_id}: no classified articles")
                continue
            all_records.extend(records)
            key = (ds.conflict.value, ds.source, m.model_id)
            agg.summaries.extend(biasindex.period_summary(records, corpus, windows))
            for bucket, target in ((biasindex.Bucket.WEEKLY, agg.weekly), (biasindex.Bucket.MONTHLY, agg.monthly)):
                target[key] = biasindex.time_series(records, corpus, bucket, events, name=f"{ds.source} {m.model_id}")
            joined = sentiment.aggregate(sentiments, records, corpus, windows, group_by=("period", "leaning"))
            if joined.join_misses:
                warnings.append(f"{ds.name}/{m.model_id}: {len(joined.join_misses)} articles lack a label or emotion score")
            agg.emotions[key] = joined.groups
    if all_records:
        everything = Corpus(tuple(a for c in pooled for a in c.articles))
        agg.scores = biasindex.score_table(all_records, everything, windows)
    files, emit_warnings = report.emit_tables(agg, run.path("tables"))
    warnings.extend(emit_warnings)
    _write_json(run.path("tables", "index_report.json"), {"files": [f.name for f in files], "warnings": warnings})
    return warnings


def report_stage(run: Run) -> Path:
    """Render charts from the emitted tables and write the run manifest."""
    index_report = run.require(run.path("tables", "index_report.json"), "index")
    tables = report.load_tables(run.path("tables"))
    report.emit_charts(tables, run.path("charts"), _events(run))
    warnings = list(_read_json(index_report).get("warnings", []))
    corpora = []
    for ds in run.datasets():
        path = run.require(run.path("corpus", f"{ds.name}.jsonl"), "clean")
        corpora.append({
            "name": ds.name,
            "source": ds.source,
            "conflict": ds.conflict.value,
            "articles": len(corpus_mod.load(path)),
            "sha256": report.file_digest(path),
        })
    cfg = run.config
    models = [
        {
            "id": m.model_id,
            "strategy": m.strategy.value,
            "runs": m.runs,
            "version": cfg.chunking.version if m.strategy is Strategy.CHUNK_VOTE else m.prompt_version,
            "backend": (m.mock if run.options.offline and m.mock else m.backend).get("kind"),
        }
        for m in run.model_configs()
    ]
    models.append({
        "id": cfg.sentiment.model_id,
        "strategy": "Emotion",
        "version": cfg.chunking.version,
        "backend": (cfg.sentiment.mock if run.options.offline and cfg.sentiment.mock else cfg.sentiment.backend).get("kind"),
    })
    return report.write_manifest(
        run.root,
        config=cfg.snapshot(),
        corpora=corpora,
        models=models,
        warnings=warnings,
        timing=run.timing if run.options.record_timing else None,
        exclude=(LOCK_NAME,),
    )


STAGE_FUNCS = {
    "ingest": ingest_stage,
    "clean": clean_stage,
    "ngram": ngram_stage,
    "classify": classify_stage,
    "sentiment": sentiment_stage,
    "index": index_stage,
    "report": report_stage,
}


def run_stage(run: Run, stage: str):
    with locked(run.root), _timed(run, stage):
        return STAGE_FUNCS[stage](run)


def run_all(run: Run) -> Path:
    """Every stage in order under one lock; returns the manifest path."""
    with locked(run.root):
        for stage in STAGES:
            with _timed(run, stage):
                result = STAGE_FUNCS[stage](run)
        return result
