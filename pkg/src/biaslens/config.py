"""Pipeline configuration: one declarative YAML file.

Relative paths resolve against the config file's directory. Secrets are
never read from the file, only from environment variables.
"""

from __future__ import annotations

import copy
import re
from dataclasses import dataclass, field
from datetime import date
from importlib import resources
from pathlib import Path
from typing import Any

import yaml

from .backends import (
    ChatCompletionBackend,
    HashChunkBackend,
    HttpChunkBackend,
    HttpEmotionBackend,
    LexiconChunkBackend,
    LexiconEmotionBackend,
    ScriptedTextBackend,
)
from .classify import DEFAULT_PROMPT_VERSION, ChunkingConfig, ModelSpec, Strategy
from .corpus import DEFAULT_MAX_TOKENS, Conflict, StudyWindow, normalize_source
from .errors import ConfigError
from .ingest import DEFAULT_TAGS, KeywordSet
from .ngram import DEFAULT_CUSTOM_STOPWORDS, StopwordConfig
from .report import slug
from .transport import RatePolicy

BUILTIN_PREFIX = "builtin:"
MOCK_KINDS = frozenset({"lexicon", "hash", "scripted"})
INPUT_KINDS = frozenset({"file", "api", "urls"})
_MODEL_ID = re.compile(r"^[A-Za-z0-9.-]+$")


@dataclass
class InputConfig:
    kind: str
    path: Path | None = None
    endpoint: str | None = None
    tags: frozenset[str] = frozenset()
    cassette: Path | None = None
    page_size: int = 50


@dataclass
class DatasetConfig:
    source: str
    conflict: Conflict
    input: InputConfig
    keywords: KeywordSet
    window: StudyWindow
    keyword_filter: bool = True

    @property
    def name(self) -> str:
        return f"{self.conflict.value}_{slug(self.source)}"


@dataclass
class BackendConfig:
    model_id: str
    strategy: Strategy
    backend: dict
    mock: dict | None = None
    runs: int = 3
    prompt_version: str = DEFAULT_PROMPT_VERSION
    policy: RatePolicy = field(default_factory=RatePolicy)


@dataclass
class PipelineConfig:
    base_dir: Path
    raw: dict
    output_dir: Path
    datasets: list[DatasetConfig]
    models: list[BackendConfig]
    sentiment: BackendConfig
    chunking: ChunkingConfig = field(default_factory=ChunkingConfig)
    max_tokens: int = DEFAULT_MAX_TOKENS
    stopwords: StopwordConfig = field(default_factory=StopwordConfig)
    events_path: Path | None = None
    ngram_n: tuple[int, ...] = (2, 3)
    ngram_top: int = 20
    workers: int = 4
    failure_threshold: float = 0.5
    ingest_policy: RatePolicy = field(default_factory=RatePolicy)

    def windows(self) -> dict[Conflict, StudyWindow]:
        windows: dict[Conflict, StudyWindow] = {}
        for ds in self.datasets:
            if windows.setdefault(ds.conflict, ds.window) != ds.window:
                raise ConfigError(f"datasets for {ds.conflict.value} disagree on the study window")
        return windows

    def snapshot(self) -> dict:
        """Config as written, minus the output directory, for the manifest."""
        snap = copy.deepcopy(self.raw)
        snap.pop("output_dir", None)
        return snap


def _date(value, what: str) -> date | None:
    if value is None:
        return None
    if isinstance(value, date):
        return value
    try:
        return date.fromisoformat(str(value))
    except ValueError:
        raise ConfigError(f"{what}: invalid date {value!r}") from None


def _policy(data: Any, fallback: RatePolicy, what: str) -> RatePolicy:
    if data is None:
        return fallback
    try:
        return RatePolicy(**{**fallback.__dict__, **data})
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{what}: {exc}") from None


def builtin_config_path(name: str = "demo") -> Path:
    path = Path(str(resources.files("biaslens.data").joinpath(name, "config.yaml")))
    if not path.exists():
        raise ConfigError(f"no built-in config named {name!r}")
    return path


def resolve_config_path(spec: str | Path) -> Path:
    spec = str(spec)
    if spec.startswith(BUILTIN_PREFIX):
        return builtin_config_path(spec[len(BUILTIN_PREFIX):])
    return Path(spec)


def load_config(path: str | Path, *, output_dir: str | Path | None = None) -> PipelineConfig:
    path = resolve_config_path(path)
    try:
        raw = yaml.safe_load(path.read_text(encoding="utf-8")) or {}
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"config is not valid YAML: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigError("config must be a mapping")
    return parse_config(raw, path.parent, output_dir=output_dir)


def parse_config(raw: dict, base_dir: Path, *, output_dir: str | Path | None = None) -> PipelineConfig:
    base_dir = Path(base_dir)

    def existing(value, what: str) -> Path:
        p = Path(value)
        p = p if p.is_absolute() else base_dir / p
        if not p.exists():
            raise ConfigError(f"{what}: path does not exist: {p}")
        return p

    out = output_dir or raw.get("output_dir")
    if not out:
        raise ConfigError("no output directory: set output_dir or pass --out")
    out_path = Path(out)
    if output_dir is None and not out_path.is_absolute():
        out_path = base_dir / out_path

    default_policy = _policy(raw.get("rate_policy"), RatePolicy(), "rate_policy")

    datasets = []
    for i, d in enumerate(raw.get("datasets") or []):
        what = f"datasets[{i}]"
        try:
            source = normalize_source(str(d["source"]))
            conflict = Conflict.parse(d["conflict"])
        except (KeyError, ValueError) as exc:
            raise ConfigError(f"{what}: {exc}") from None
        inp = d.get("input") or {}
        kind = inp.get("kind")
        if kind not in INPUT_KINDS:
            raise ConfigError(f"{what}: input.kind must be one of {sorted(INPUT_KINDS)}")
        input_cfg = InputConfig(kind=kind, page_size=int(inp.get("page_size", 50)))
        if kind in ("file", "urls"):
            if "path" not in inp:
                raise ConfigError(f"{what}: input.path is required for kind {kind}")
            input_cfg.path = existing(inp["path"], what)
        if kind == "api":
            if not inp.get("endpoint"):
                raise ConfigError(f"{what}: input.endpoint is required for kind api")
            input_cfg.endpoint = inp["endpoint"]
            input_cfg.tags = frozenset(inp.get("tags") or DEFAULT_TAGS[conflict])
        if inp.get("cassette"):
            c = Path(inp["cassette"])
            input_cfg.cassette = c if c.is_absolute() else base_dir / c
        keywords = d.get("keywords")
        kw = KeywordSet(conflict, frozenset(keywords)) if keywords else KeywordSet.default(conflict)
        w = d.get("window") or {}
        try:
            window = StudyWindow.for_conflict(
                conflict,
                start_date=_date(w.get("start"), what),
                end_date=_date(w.get("end"), what),
                war_start_date=_date(w.get("war_start"), what),
            )
        except ValueError as exc:
            raise ConfigError(f"{what}: {exc}") from None
        datasets.append(DatasetConfig(source, conflict, input_cfg, kw, window, bool(d.get("keyword_filter", True))))
    if not datasets:
        raise ConfigError("config needs at least one dataset")
    names = [ds.name for ds in datasets]
    if len(set(names)) != len(names):
        raise ConfigError("two datasets share the same (conflict, source)")

    models = []
    for i, m in enumerate(raw.get("models") or []):
        what = f"models[{i}]"
        mid = str(m.get("id", ""))
        if not _MODEL_ID.match(mid):
            raise ConfigError(f"{what}: id must match [A-Za-z0-9.-]+")
        strategy = {"chunk": Strategy.CHUNK_VOTE, "prompt": Strategy.PROMPT}.get(m.get("strategy"))
        if strategy is None:
            raise ConfigError(f"{what}: strategy must be 'chunk' or 'prompt'")
        runs = int(m.get("runs", 3))
        if runs < 1 or runs % 2 == 0:
            raise ConfigError(f"{what}: runs must be a positive odd number")
        models.append(BackendConfig(
            model_id=mid, strategy=strategy, backend=dict(m.get("backend") or {}),
            mock=m.get("mock"), runs=runs,
            prompt_version=str(m.get("prompt_version", DEFAULT_PROMPT_VERSION)),
            policy=_policy(m.get("rate_policy"), default_policy, what),
        ))
    if not models:
        raise ConfigError("config needs at least one model")
    if len({m.model_id for m in models}) != len(models):
        raise ConfigError("model ids must be unique")

    s = raw.get("sentiment") or {"id": "emotion", "backend": {"kind": "lexicon"}}
    sentiment = BackendConfig(
        model_id=str(s.get("id", "emotion")), strategy=Strategy.CHUNK_VOTE,
        backend=dict(s.get("backend") or {}), mock=s.get("mock"),
        policy=_policy(s.get("rate_policy"), default_policy, "sentiment"),
    )

    for bc in models + [sentiment]:
        for spec in (bc.backend, bc.mock):
            if spec and spec.get("fixture"):
                spec["fixture"] = str(existing(spec["fixture"], f"{bc.model_id} fixture"))

    ch = raw.get("chunking") or {}
    try:
        chunking = ChunkingConfig(int(ch.get("window", 512)), int(ch.get("stride", 256)))
    except ValueError as exc:
        raise ConfigError(f"chunking: {exc}") from None

    sw = raw.get("stopwords") or {}
    stopwords = StopwordConfig.from_paths(
        existing(sw["standard"], "stopwords.standard") if sw.get("standard") else None,
        sw.get("custom", sorted(DEFAULT_CUSTOM_STOPWORDS)),
    )
    events = existing(raw["events"], "events") if raw.get("events") else None
    ng = raw.get("ngram") or {}

    return PipelineConfig(
        base_dir=base_dir,
        raw=raw,
        output_dir=out_path,
        datasets=datasets,
        models=models,
        sentiment=sentiment,
        chunking=chunking,
        max_tokens=int(raw.get("max_tokens", DEFAULT_MAX_TOKENS)),
        stopwords=stopwords,
        events_path=events,
        ngram_n=tuple(int(n) for n in ng.get("n", (2, 3))),
        ngram_top=int(ng.get("top", 20)),
        workers=int(raw.get("workers", 4)),
        failure_threshold=float(raw.get("failure_threshold", 0.5)),
        ingest_policy=_policy(raw.get("ingest_rate_policy"), default_policy, "ingest_rate_policy"),
    )


# -- backend construction -----------------------------------------------------

def _pick(bc: BackendConfig, offline: bool) -> dict:
    spec = bc.backend
    if offline and spec.get("kind") not in MOCK_KINDS:
        if not bc.mock:
            raise ConfigError(f"{bc.model_id}: --offline needs a mock backend")
        spec = bc.mock
    return spec


def build_model(bc: BackendConfig, chunking: ChunkingConfig, *, offline: bool = False) -> ModelSpec:
    spec = _pick(bc, offline)
    kind = spec.get("kind")
    if bc.strategy is Strategy.CHUNK_VOTE:
        if kind == "lexicon":
            backend = LexiconChunkBackend()
        elif kind == "hash":
            backend = HashChunkBackend()
        elif kind == "http":
            backend = HttpChunkBackend(
                spec["url"], label_map=spec.get("label_map"),
                api_key_env=spec.get("api_key_env"), policy=bc.policy,
            )
        else:
            raise ConfigError(f"{bc.model_id}: unsupported chunk backend kind {kind!r}")
    else:
        if kind == "scripted":
            backend = ScriptedTextBackend.from_file(spec["fixture"])
        elif kind in ("openai", "chat", "completion"):
            backend = ChatCompletionBackend(
                spec["base_url"], spec["model"],
                style="completion" if kind == "completion" else spec.get("style", "chat"),
                api_key_env=spec.get("api_key_env", "BIASLENS_LLM_API_KEY"), policy=bc.policy,
            )
        else:
            raise ConfigError(f"{bc.model_id}: unsupported prompt backend kind {kind!r}")
    return ModelSpec(
        model_id=bc.model_id, strategy=bc.strategy, backend=backend, runs=bc.runs,
        chunking=chunking, policy=bc.policy, prompt_version=bc.prompt_version,
    )


def build_emotion_backend(bc: BackendConfig, *, offline: bool = False):
    spec = _pick(bc, offline)
    kind = spec.get("kind")
    if kind == "lexicon":
        return LexiconEmotionBackend()
    if kind == "http":
        return HttpEmotionBackend(spec["url"], api_key_env=spec.get("api_key_env"), policy=bc.policy)
    raise ConfigError(f"sentiment: unsupported backend kind {kind!r}")
