"""CSV tables, SVG charts and the run manifest."""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import re
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from . import biasindex, charts, sentiment
from .biasindex import BiasTimeSeries, Bucket, Event, PeriodSummary, ScoreRow
from .classify import PoliticalLabel
from .corpus import Conflict
from .sentiment import EMOTIONS, EmotionDistribution, EmotionGroup

logger = logging.getLogger(__name__)

KINDS = ("summary", "weekly", "monthly", "emotion", "emotion-dominant")
SCORES_FILE = "bias_scores.csv"
MANIFEST = "run.json"
_NAME = re.compile(r"^(?P<conflict>[A-Za-z]+)_(?P<source>[^_]+)_(?P<model>[^_]+)_(?P<kind>[a-z-]+)\.csv$")


def slug(text: str) -> str:
    return re.sub(r"[^A-Za-z0-9.-]+", "-", text).strip("-") or "x"


@dataclass
class Aggregates:
    summaries: list[PeriodSummary] = field(default_factory=list)
    weekly: dict[tuple, BiasTimeSeries] = field(default_factory=dict)
    monthly: dict[tuple, BiasTimeSeries] = field(default_factory=dict)
    # (conflict, source, model) -> groups keyed by (period, leaning)
    emotions: dict[tuple, list[EmotionGroup]] = field(default_factory=dict)
    scores: list[ScoreRow] = field(default_factory=list)

    def combos(self) -> list[tuple[str, str, str]]:
        return sorted({(s.conflict.value, s.source, s.model_id) for s in self.summaries})


@dataclass
class LoadedTables:
    """Aggregates as re-read from the emitted CSV files."""

    summaries: dict[tuple, list[PeriodSummary]] = field(default_factory=dict)
    weekly: dict[tuple, BiasTimeSeries] = field(default_factory=dict)
    monthly: dict[tuple, BiasTimeSeries] = field(default_factory=dict)
    emotion: dict[tuple, dict[str, EmotionDistribution]] = field(default_factory=dict)
    emotion_dominant: dict[tuple, dict[str, EmotionDistribution]] = field(default_factory=dict)
    scores: list[dict] = field(default_factory=list)


def table_name(conflict: str, source: str, model: str, kind: str) -> str:
    return f"{conflict}_{slug(source)}_{slug(model)}_{kind}.csv"


def emit_tables(agg: Aggregates, out_dir: str | Path) -> tuple[list[Path], list[str]]:
    """Write one CSV per (conflict, source, model, kind) plus the score table.

    Returns the files written and any warnings. Output is byte-identical for
    identical inputs.
    """
    out_dir = Path(out_dir)
    files: list[Path] = []
    warnings: list[str] = []
    combos = agg.combos()
    if not combos:
        warnings.append("no period summaries: no tables written")
        return files, warnings
    out_dir.mkdir(parents=True, exist_ok=True)
    for conflict, source, model in combos:
        key = (conflict, source, model)
        rows = [s for s in agg.summaries if (s.conflict.value, s.source, s.model_id) == key]
        files.append(biasindex.write_summary_csv(rows, out_dir / table_name(conflict, source, model, "summary")))
        empty = BiasTimeSeries(Bucket.WEEKLY, ())
        files.append(biasindex.write_series_csv(agg.weekly.get(key, empty), out_dir / table_name(conflict, source, model, "weekly")))
        files.append(biasindex.write_series_csv(agg.monthly.get(key, empty), out_dir / table_name(conflict, source, model, "monthly")))
        groups = agg.emotions.get(key, [])
        if not groups:
            warnings.append(f"no emotion groups for {conflict}/{source}/{model}")
        files.append(sentiment.write_csv(groups, out_dir / table_name(conflict, source, model, "emotion"), basis="mean"))
        files.append(sentiment.write_csv(groups, out_dir / table_name(conflict, source, model, "emotion-dominant"), basis="dominant"))
    if agg.scores:
        files.append(biasindex.write_scores_csv(agg.scores, out_dir / SCORES_FILE))
    return files, warnings


def load_tables(out_dir: str | Path) -> LoadedTables:
    out_dir = Path(out_dir)
    loaded = LoadedTables()
    for path in sorted(out_dir.glob("*.csv")):
        if path.name == SCORES_FILE:
            with open(path, encoding="utf-8", newline="") as fh:
                loaded.scores = [
                    {**r, "score": float(r["score"]), "n": int(r["n"])} for r in csv.DictReader(fh)
                ]
            continue
        m = _NAME.match(path.name)
        if not m:
            continue
        key = (m["conflict"], m["source"], m["model"])
        kind = m["kind"]
        if kind == "summary":
            loaded.summaries[key] = biasindex.read_summary_csv(path, m["source"])
        elif kind == "weekly":
            loaded.weekly[key] = biasindex.read_series_csv(path, Bucket.WEEKLY)
        elif kind == "monthly":
            loaded.monthly[key] = biasindex.read_series_csv(path, Bucket.MONTHLY)
        elif kind == "emotion":
            loaded.emotion[key] = sentiment.read_csv(path)
        elif kind == "emotion-dominant":
            loaded.emotion_dominant[key] = sentiment.read_csv(path)
    return loaded


def _points(series: BiasTimeSeries):
    return [(p.period_start, p.mean_score, p.n) for p in series.points]


def emit_charts(tables: LoadedTables, out_dir: str | Path, events: Sequence[Event] = ()) -> list[Path]:
    """Proportion bars, emotion bars, monthly R-L lines and weekly index lines."""
    out_dir = Path(out_dir)
    files: list[Path] = []
    event_marks = [(e.date, e.caption) for e in events]

    by_outlet: dict[tuple, list[PeriodSummary]] = defaultdict(list)
    for (conflict, source, _), rows in sorted(tables.summaries.items()):
        by_outlet[(conflict, source)].extend(rows)
    for (conflict, source), rows in sorted(by_outlet.items()):
        groups = []
        for row in sorted(rows, key=lambda r: (r.model_id, r.period != "PreWar")):
            props = row.proportions
            groups.append((
                f"{row.model_id} {biasindex.PERIOD_NAMES[row.period]}",
                [(lab.value, props[lab]) for lab in (PoliticalLabel.LEFT, PoliticalLabel.CENTRE, PoliticalLabel.RIGHT)],
            ))
        files.append(charts.bar_chart(
            groups, f"{source} {conflict}: proportion of articles by category",
            out_dir / f"{conflict}_{source}_proportions.svg", y_range=(0.0, 1.0),
        ))

    for (conflict, source, model), dists in sorted(tables.emotion.items()):
        groups = [(label, [(e.value, dist.probs[e]) for e in EMOTIONS]) for label, dist in sorted(dists.items())]
        files.append(charts.bar_chart(
            groups, f"{source} {conflict} ({model}): emotion distribution by leaning",
            out_dir / f"{conflict}_{source}_{model}_emotion.svg",
        ))

    conflicts = sorted({k[0] for k in tables.monthly} | {k[0] for k in tables.weekly})
    for conflict in conflicts:
        series = [
            (f"{source} {model}", _points(s))
            for (c, source, model), s in sorted(tables.monthly.items()) if c == conflict
        ]
        files.append(charts.line_chart(
            series, f"{conflict}: Right - Left difference by month",
            out_dir / f"{conflict}_difference.svg", events=event_marks,
        ))
        models = sorted({m for (c, _, m) in tables.weekly if c == conflict})
        for model in models:
            series = [
                (source, _points(s))
                for (c, source, m), s in sorted(tables.weekly.items()) if c == conflict and m == model
            ]
            files.append(charts.line_chart(
                series, f"{conflict} ({model}): weekly bias index",
                out_dir / f"{conflict}_{model}_weekly.svg", events=event_marks,
            ))

    pooled = [r for r in tables.scores if r["source"] == "All" and r["period"] != "All"]
    if pooled:
        groups: dict[str, list] = defaultdict(list)
        for r in pooled:
            groups[f"{Conflict(r['conflict']).short} {biasindex.PERIOD_NAMES[r['period']]}"].append((r["model"], r["score"]))
        files.append(charts.bar_chart(
            sorted(groups.items()), "Average bias score by model and period",
            out_dir / "bias_scores.svg", y_range=(-1.0, 1.0),
        ))
    return files


# -- manifest -----------------------------------------------------------------

def file_digest(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def write_manifest(
    run_dir: str | Path,
    *,
    config: Mapping,
    corpora: Sequence[Mapping],
    models: Sequence[Mapping],
    warnings: Iterable[str] = (),
    timing: Mapping | None = None,
    exclude: Iterable[str] = (),
) -> Path:
    """Write ``run.json`` listing every non-empty file under ``run_dir``.

    The run id is derived from the config snapshot, so identical runs
    produce identical manifests.
    """
    run_dir = Path(run_dir)
    skip = {MANIFEST, *exclude}
    outputs = []
    for path in sorted(p for p in run_dir.rglob("*") if p.is_file()):
        rel = path.relative_to(run_dir).as_posix()
        if rel in skip or path.name.endswith(".tmp"):
            continue
        size = path.stat().st_size
        if size == 0:
            continue
        outputs.append({"path": rel, "bytes": size, "sha256": file_digest(path)})
    snapshot = json.dumps(config, sort_keys=True, ensure_ascii=False, default=str)
    manifest = {
        "run_id": hashlib.sha256(snapshot.encode("utf-8")).hexdigest()[:16],
        "config": json.loads(snapshot),
        "corpora": list(corpora),
        "models": list(models),
        "outputs": outputs,
        "warnings": sorted(set(warnings)),
        "timing": dict(timing) if timing is not None else None,
    }
    path = run_dir / MANIFEST
    path.write_text(json.dumps(manifest, indent=2, ensure_ascii=False) + "\n", encoding="utf-8")
    return path
