"""Regenerate the bundled synthetic demo corpus and scripted backend replies.

    python tools/make_demo.py [OUT_DIR]

Writes ``config.yaml``, ``raw/*.jsonl`` and ``mocks/*.json`` under
``src/biaslens/data/demo`` by default. Output is deterministic. The articles
are synthetic word salad built from a fixed vocabulary; they describe no
real events.
"""

from __future__ import annotations

import json
import random
import sys
from datetime import date, timedelta
from pathlib import Path

from biaslens.backends import LEFT_CUES, RIGHT_CUES, EMOTION_CUES
from biaslens.classify import BackendRequest, build_prompt
from biaslens.corpus import Conflict, StudyWindow, filter_by_token_count
from biaslens.ingest import KeywordSet, RawRecord, filter_keywords, save_raw, to_articles

DEFAULT_OUT = Path(__file__).resolve().parents[1] / "src" / "biaslens" / "data" / "demo"
SEED = 20240101

FILLER = (
    "the a officials report week city talks government minister meeting statement "
    "region council plans people public policy news update analysts local economy "
    "prices market budget energy supply leaders visit agreement committee region "
    "capital forces situation response international residents families schools"
).split()
TOPIC = {
    Conflict.RUSSIA_UKRAINE: ("Russia", "Ukraine", "Kyiv", "Moscow", "Kremlin", "Donbas"),
    Conflict.ISRAEL_HAMAS: ("Israel", "Hamas", "Gaza", "Palestine", "Jerusalem", "West Bank"),
}
DATASETS = (
    (Conflict.RUSSIA_UKRAINE, "BBC", 13),
    (Conflict.RUSSIA_UKRAINE, "Guardian", 12),
    (Conflict.ISRAEL_HAMAS, "BBC", 13),
    (Conflict.ISRAEL_HAMAS, "Guardian", 12),
)
LEFT = sorted(LEFT_CUES)
RIGHT = sorted(RIGHT_CUES)
EMOTION_WORDS = sorted(w for cues in EMOTION_CUES.values() for w in cues)


def _date(rng: random.Random, window: StudyWindow, during: bool) -> date:
    if during:
        lo, hi = window.war_start_date, min(window.end_date, window.war_start_date + timedelta(days=500))
    else:
        lo, hi = max(window.start_date, window.war_start_date - timedelta(days=500)), window.war_start_date - timedelta(days=1)
    return lo + timedelta(days=rng.randrange((hi - lo).days + 1))


def _body(rng: random.Random, conflict: Conflict, n_tokens: int, lean: float) -> str:
    """Filler with topic words; ``lean`` in [-1, 1] skews the cue mix."""
    words = []
    p_left = 0.06 * (1 - lean) / 2
    p_right = 0.06 * (1 + lean) / 2
    for _ in range(n_tokens):
        r = rng.random()
        if r < 0.05:
            words.append(rng.choice(TOPIC[conflict]))
        elif r < 0.05 + p_left:
            words.append(rng.choice(LEFT))
        elif r < 0.05 + p_left + p_right:
            words.append(rng.choice(RIGHT))
        elif r < 0.14:
            words.append(rng.choice(EMOTION_WORDS))
        else:
            words.append(rng.choice(FILLER))
    sentences, i = [], 0
    while i < len(words):
        k = rng.randint(8, 16)
        chunk = words[i:i + k]
        sentences.append(" ".join(chunk).capitalize() + ".")
        i += k
    return " ".join(sentences)


def _lean(rng: random.Random, conflict: Conflict, source: str, during: bool) -> float:
    # a visible shift at the war start, different per outlet and conflict
    base = -0.3 if source == "Guardian" else 0.0
    shift = 0.6 if conflict is Conflict.RUSSIA_UKRAINE else -0.6
    return max(-1.0, min(1.0, base + (shift if during else 0.0) + rng.uniform(-0.4, 0.4)))


def make_dataset(rng: random.Random, conflict: Conflict, source: str, count: int) -> list[RawRecord]:
    window = StudyWindow.for_conflict(conflict)
    host = "www.bbc.co.uk/news" if source == "BBC" else "www.theguardian.com/world"
    slug = conflict.value.lower()
    records = []
    for i in range(count):
        during = i % 2 == 1
        day = _date(rng, window, during)
        if i == 1:
            day = window.war_start_date  # boundary day belongs to during-war
        n_tokens = rng.choice((120, 180, 260, 340, 700, 1300)) if i % 4 else rng.randint(80, 400)
        title = f"{TOPIC[conflict][i % 2]} {rng.choice(FILLER)} {rng.choice(FILLER)} update {i + 1}"
        records.append(RawRecord(
            url=f"https://{host}/{slug}-{source.lower()}-{i + 1:03d}",
            title=title,
            body=_body(rng, conflict, n_tokens, _lean(rng, conflict, source, during)),
            date=day.isoformat() + ("T09:30:00Z" if i % 3 == 0 else ""),
        ))
    # records the cleaning and filtering stages must drop
    first = records[0]
    records.append(RawRecord(first.url, first.title, first.body, first.date))  # duplicate URL
    records.append(RawRecord(f"https://{host}/{slug}-nokeyword", "Weather", "Sunny spells and light rain later today.", "2022-06-01"))
    records.append(RawRecord(f"https://{host}/{slug}-empty", "Blank", "\u200b \u200b", "2022-06-02"))
    records.append(RawRecord(
        f"https://{host}/{slug}-garbled", "Garbled", f"{TOPIC[conflict][0]} " + "\ufffd" * 12 + " news", "2022-06-04",
    ))
    records.append(RawRecord(
        f"https://{host}/{slug}-cyrillic", "Новости",
        f"{TOPIC[conflict][0]} " + "Новости дня обзор событий " * 20, "2022-06-03",
    ))
    records.append(RawRecord(f"https://{host}/{slug}-old", "Archive", f"{TOPIC[conflict][0]} archive story from long ago.", "2019-05-01"))
    if source == "BBC":
        records.append(RawRecord(
            f"https://{host}/{slug}-too-long", "Long read",
            _body(rng, conflict, 10_050, 0.0), "2023-01-15",
        ))
    return records


def _label_from_cues(text: str) -> str:
    words = text.lower().split()
    left = sum(w.strip(".,") in LEFT_CUES for w in words)
    right = sum(w.strip(".,") in RIGHT_CUES for w in words)
    return "Left" if left > right else "Right" if right > left else "Centre"


def make_mocks(corpora, rng: random.Random) -> dict[str, dict]:
    """Scripted replies per prompted model, keyed by request digest.

    Each model mostly agrees with the cue balance but disagrees on some
    articles. The scripts include one rate-limit reply, one reply that needs
    a re-ask, and one article no run can label.
    """
    mocks = {}
    articles = [a for c in corpora for a in c.articles]
    for model, flip_rate, odd in (("gemini", 0.15, "Answer: centre."), ("deepseek", 0.3, "**Right**")):
        responses = {}
        for i, article in enumerate(articles):
            digest = BackendRequest(build_prompt(article)).digest()
            label = _label_from_cues(article.content)
            if rng.random() < flip_rate:
                label = rng.choice(["Left", "Centre", "Right"])
            script = [label]
            if i == 2:
                script = [{"status": 429}, label]
            elif i == 5:
                script = ["I cannot say.", odd, label]
            elif i == 7 and model == "gemini":
                script = ["I am unable to classify this article."]
            responses[digest] = script
        mocks[model] = {"default": None, "responses": dict(sorted(responses.items()))}
    return mocks


CONFIG = """\
# Bundled synthetic demo. Run offline with:
#   biaslens run-all --config builtin:demo --out runs/demo --offline
datasets:
{datasets}
chunking: {{window: 512, stride: 256}}
max_tokens: 10000
ngram: {{n: [2, 3], top: 20}}
workers: 4
failure_threshold: 0.5
rate_policy: {{max_concurrent: 4, min_interval_ms: 0, max_retries: 3, base_backoff_ms: 1, max_backoff_ms: 5}}
models:
  - id: bert
    strategy: chunk
    backend: {{kind: http, url: "https://inference.example.org/models/political-leaning", api_key_env: BIASLENS_LLM_API_KEY}}
    mock: {{kind: lexicon}}
  - id: gemini
    strategy: prompt
    runs: 3
    prompt_version: v1
    backend: {{kind: chat, base_url: "https://llm.example.org/v1", model: gemini}}
    mock: {{kind: scripted, fixture: mocks/gemini.json}}
  - id: deepseek
    strategy: prompt
    runs: 3
    prompt_version: v1
    backend: {{kind: chat, base_url: "https://llm.example.org/v1", model: deepseek}}
    mock: {{kind: scripted, fixture: mocks/deepseek.json}}
sentiment:
  id: emotion
  backend: {{kind: http, url: "https://inference.example.org/models/emotion"}}
  mock: {{kind: lexicon}}
"""


def main(out: Path = DEFAULT_OUT) -> None:
    rng = random.Random(SEED)
    corpora, entries = [], []
    for conflict, source, count in DATASETS:
        records = make_dataset(rng, conflict, source, count)
        name = f"{conflict.value}_{source}"
        save_raw(records, out / "raw" / f"{name}.jsonl")
        kept, _ = filter_keywords(records, KeywordSet.default(conflict))
        corpus, _ = to_articles(kept, source, conflict, StudyWindow.for_conflict(conflict))
        corpus = filter_by_token_count(corpus)
        corpora.append(corpus)
        entries.append(
            f"  - source: {source}\n    conflict: {conflict.value}\n"
            f"    input: {{kind: file, path: raw/{name}.jsonl}}"
        )
    for model, data in make_mocks(corpora, rng).items():
        path = out / "mocks" / f"{model}.json"
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(data, indent=1) + "\n", encoding="utf-8")
    (out / "config.yaml").write_text(CONFIG.format(datasets="\n".join(entries)), encoding="utf-8")
    print(f"{sum(len(c) for c in corpora)} clean articles written under {out}")


if __name__ == "__main__":
    main(Path(sys.argv[1]) if len(sys.argv) > 1 else DEFAULT_OUT)
