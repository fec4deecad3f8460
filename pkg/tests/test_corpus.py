from __future__ import annotations

import json
from datetime import date

import pytest
from hypothesis import given, settings, strategies as st

from biaslens.corpus import (
    Article,
    Conflict,
    Corpus,
    RejectReason,
    Rejected,
    StudyWindow,
    clean,
    dedup,
    filter_by_token_count,
    load,
    normalize_source,
    partition_by_period,
    period_of,
    punctuation_chars,
    save,
    token_count,
    tokenize,
)
from biaslens.errors import MalformedRecord, OutOfWindow

from conftest import make_article


def test_clean_strips_controls_and_collapses_whitespace():
    title, content = clean("  A\ttitle ", "Russia​ and\x00 Ukraine\n\n talks� ")
    assert title == "A title"
    assert content == "Russia and Ukraine talks"


@pytest.mark.parametrize("content, reason", [
    ("", RejectReason.EMPTY),
    ("​ \x07 ", RejectReason.EMPTY),
    (None, RejectReason.EMPTY),
    ("ok " + "�" * 10, RejectReason.ENCODING_GARBAGE),
    ("Новости дня обзор событий Russia", RejectReason.NON_ENGLISH),
    ("12345 67890", RejectReason.NON_ENGLISH),
])
def test_clean_rejects(content, reason):
    with pytest.raises(Rejected) as info:
        clean("t", content)
    assert info.value.reason is reason


def test_clean_keeps_mostly_ascii_text_with_some_accents():
    _, content = clean("t", "Zelenskyy met Erdoğan in Ankara to discuss grain exports")
    assert "Erdoğan" in content


def test_tokenize_lowercases_and_strips_edge_punctuation():
    seq = tokenize("Hello, World! “Quoted” don't (x) -- ...")
    assert seq.tokens == ("hello", "world", "quoted", "don't", "x")
    assert seq.n == 5
    assert token_count("a b  c") == 3


@given(st.text())
def test_tokens_are_lowercase_and_never_edge_punctuation(text):
    punct = set(punctuation_chars())
    for tok in tokenize(text).tokens:
        assert tok
        assert tok == tok.lower()
        assert tok[0] not in punct and tok[-1] not in punct
        assert not any(ch.isspace() for ch in tok)


def test_token_cap_is_inclusive():
    at_cap = make_article("https://example.org/cap", " ".join(["word"] * 10_000))
    over = make_article("https://example.org/over", " ".join(["word"] * 10_001))
    kept = filter_by_token_count(Corpus((at_cap, over)))
    assert [a.url for a in kept] == ["https://example.org/cap"]


def test_dedup_keeps_first_occurrence():
    a = make_article("https://example.org/x", "first version of the story")
    b = make_article("https://example.org/x", "second version of the story")
    c = make_article("https://example.org/y")
    out = dedup(Corpus((a, b, c)))
    assert [x.content for x in out] == ["first version of the story", c.content]


def test_conflict_aliases_and_source_names():
    assert Conflict.parse("RU") is Conflict.RUSSIA_UKRAINE
    assert Conflict.parse("israel-hamas") is Conflict.ISRAEL_HAMAS
    assert Conflict.ISRAEL_HAMAS.short == "IP"
    with pytest.raises(ValueError):
        Conflict.parse("nowhere")
    assert normalize_source("bbc") == "BBC"
    assert normalize_source("The Guardian") == "Guardian"
    assert normalize_source("Reuters") == "Reuters"


def test_study_window_defaults_and_validation():
    w = StudyWindow.for_conflict("RussiaUkraine")
    assert (w.start_date, w.end_date, w.war_start_date) == (date(2020, 1, 1), date(2024, 12, 31), date(2022, 2, 24))
    assert StudyWindow.for_conflict(Conflict.ISRAEL_HAMAS).war_start_date == date(2023, 10, 7)
    with pytest.raises(ValueError):
        StudyWindow(date(2024, 1, 1), date(2023, 1, 1), date(2023, 6, 1))
    with pytest.raises(ValueError):
        StudyWindow(date(2020, 1, 1), date(2021, 1, 1), date(2022, 1, 1))


def test_partition_rejects_out_of_window_articles():
    window = StudyWindow.for_conflict(Conflict.RUSSIA_UKRAINE)
    stray = make_article(day=date(2019, 12, 31))
    with pytest.raises(OutOfWindow):
        partition_by_period(Corpus((stray,)), window)
    with pytest.raises(OutOfWindow):
        period_of(stray, window)


def test_partition_boundary_day():
    window = StudyWindow.for_conflict(Conflict.RUSSIA_UKRAINE)
    arts = (
        make_article("https://example.org/1", day=date(2022, 2, 23)),
        make_article("https://example.org/2", day=date(2022, 2, 24)),
    )
    pre, during = partition_by_period(Corpus(arts), window)
    assert [a.url for a in pre] == ["https://example.org/1"]
    assert [a.url for a in during] == ["https://example.org/2"]


def test_save_writes_exact_keys(tmp_path):
    path = save(Corpus((make_article(),)), tmp_path / "c.jsonl")
    record = json.loads(path.read_text().splitlines()[0])
    assert list(record) == ["url", "title", "content", "published_date", "source", "conflict"]
    assert record["published_date"] == "2022-03-01"
    assert record["conflict"] == "RussiaUkraine"


article_strategy = st.builds(
    Article,
    url=st.text(min_size=1, max_size=30).map(lambda s: "https://example.org/" + s),
    title=st.text(max_size=30),
    content=st.text(max_size=200),
    published_date=st.dates(min_value=date(2020, 1, 1), max_value=date(2024, 12, 31)),
    source=st.sampled_from(["BBC", "Guardian"]),
    conflict=st.sampled_from(list(Conflict)),
)


@settings(max_examples=50, deadline=None)
@given(st.lists(article_strategy, max_size=10))
def test_save_load_round_trip(tmp_path_factory, articles):
    path = tmp_path_factory.mktemp("rt") / "c.jsonl"
    corpus = Corpus(tuple(articles))
    assert load(save(corpus, path)) == corpus


def test_load_strict_and_lenient(tmp_path):
    path = save(Corpus((make_article("https://example.org/1"), make_article("https://example.org/2"))), tmp_path / "c.jsonl")
    lines = path.read_text().splitlines()
    lines.insert(1, '{"url": "https://example.org/bad", "title": "x"}')
    lines.insert(2, "not json")
    path.write_text("\n".join(lines) + "\n")
    with pytest.raises(MalformedRecord) as info:
        load(path, strict=True)
    assert info.value.line_number == 2
    lenient = load(path)
    assert len(lenient) == 2
    assert lenient.skipped_records == 2


def test_load_rejects_bad_dates_and_conflicts(tmp_path):
    good = make_article().to_record()
    path = tmp_path / "c.jsonl"
    path.write_text(
        json.dumps({**good, "published_date": "2022-13-01"}) + "\n"
        + json.dumps({**good, "conflict": "Mars"}) + "\n"
    )
    assert len(load(path)) == 0
    assert load(path).skipped_records == 2
