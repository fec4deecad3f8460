from __future__ import annotations

from datetime import date

import pytest

from biaslens.corpus import Conflict, StudyWindow
from biaslens.errors import AllFetchesFailed, AuthError, SchemaError
from biaslens.ingest import (
    KeywordSet,
    RawRecord,
    TagQuery,
    UrlEntry,
    extract_article,
    fetch_by_tags,
    filter_keywords,
    load_raw,
    parse_date,
    read_url_list,
    save_raw,
    scrape_urls,
    to_articles,
)
from biaslens.transport import Cassette, HttpClient, RatePolicy

FAST = RatePolicy(max_concurrent=3, max_retries=2, base_backoff_ms=1, max_backoff_ms=2)
QUERY = TagQuery(frozenset({"world/ukraine", "world/russia"}), date(2022, 1, 1), date(2022, 12, 31))


def test_fetch_sends_or_joined_tags_and_all_pages(content_api):
    records = fetch_by_tags(content_api.url, QUERY, FAST, "secret", page_size=5)
    assert len(records) == 23
    first = content_api.requests[0]
    assert first["tag"] == ["world/russia|world/ukraine"]
    assert first["show-fields"] == ["bodyText"]
    assert first["from-date"] == ["2022-01-01"] and first["to-date"] == ["2022-12-31"]
    assert first["api-key"] == ["secret"]
    assert sorted(int(q["page"][0]) for q in content_api.requests) == [1, 2, 3, 4, 5]
    assert records[0].tags == ["world/ukraine"]
    assert records[0].date == "2022-03-01T10:00:00Z"


def test_fetch_single_page(content_api):
    content_api.results = content_api.results[:3]
    assert len(fetch_by_tags(content_api.url, QUERY, FAST, "k", page_size=5)) == 3
    assert len(content_api.requests) == 1


def test_fetch_auth_failure_is_not_retried(content_api):
    content_api.failures = {1: [401, 401]}
    with pytest.raises(AuthError):
        fetch_by_tags(content_api.url, QUERY, FAST, "bad", page_size=5)
    assert len(content_api.requests) == 1


def test_fetch_rejects_empty_key(content_api):
    with pytest.raises(AuthError):
        fetch_by_tags(content_api.url, QUERY, FAST, "")


def test_fetch_schema_error(content_api):
    content_api.results[0] = {"webUrl": "https://x"}
    with pytest.raises(SchemaError):
        fetch_by_tags(content_api.url, QUERY, FAST, "k", page_size=5)


def test_fetch_replays_from_cassette(content_api, tmp_path):
    tape = tmp_path / "api.json"
    recorder = HttpClient(FAST, cassette=Cassette(tape, "record"))
    live = fetch_by_tags(content_api.url, QUERY, FAST, "k1", page_size=5, client=recorder)
    recorder.cassette.save()
    sent = len(content_api.requests)
    player = HttpClient(FAST, cassette=Cassette(tape, "replay"))
    replayed = fetch_by_tags(content_api.url, QUERY, FAST, "other-key", page_size=5, client=player)
    assert replayed == live
    assert len(content_api.requests) == sent
    assert "k1" not in tape.read_text()


def test_tag_query_validation():
    with pytest.raises(ValueError):
        TagQuery(frozenset(), date(2022, 1, 1), date(2022, 2, 1))
    with pytest.raises(ValueError):
        TagQuery(frozenset({"t"}), date(2022, 2, 1), date(2022, 1, 1))


ARTICLE_HTML = """<html><head><title>Site | Story</title>
<meta property="og:title" content="Talks resume">
<meta property="article:published_time" content="2022-03-05T08:00:00+01:00">
<script>var ignored = "Ukraine";</script></head>
<body><nav>Menu Home</nav><article><h1>Talks resume</h1>
<p>Delegations from Russia and Ukraine met again.</p><p>More talks are planned.</p></article>
<footer>Copyright</footer></body></html>"""


def test_extract_article_prefers_article_paragraphs():
    title, body, day = extract_article(ARTICLE_HTML)
    assert title == "Talks resume"
    assert body == "Delegations from Russia and Ukraine met again.\nMore talks are planned."
    assert "Menu" not in body and "ignored" not in body
    assert day == "2022-03-05T08:00:00+01:00"


def test_extract_article_falls_back_to_visible_text():
    title, body, day = extract_article(
        "<html><body><h1>Head</h1><div>Israel and Hamas</div><time datetime='2023-10-08'>x</time></body></html>"
    )
    assert title == "Head"
    assert "Israel and Hamas" in body
    assert day == "2023-10-08"


def test_scrape_collects_failures_and_filters_on_body(html_server):
    base, pages = html_server
    pages["/match"] = (200, ARTICLE_HTML)
    pages["/title-only"] = (200, "<html><head><title>Ukraine</title></head><body><article><p>Weather today.</p></article></body></html>")
    pages["/empty"] = (200, "<html><body><article></article></body></html>")
    keywords = KeywordSet.default(Conflict.RUSSIA_UKRAINE)
    result = scrape_urls([base + "/match", base + "/title-only", base + "/missing", base + "/empty"], keywords, FAST)
    assert [r.url for r in result.records] == [base + "/match"]
    assert result.filtered == 1
    assert sorted((f.url.rsplit("/", 1)[1], f.kind) for f in result.failures) == [
        ("empty", "ExtractFailed"), ("missing", "FetchFailed"),
    ]


def test_scrape_uses_list_metadata_over_page(html_server):
    base, pages = html_server
    pages["/a"] = (200, ARTICLE_HTML)
    result = scrape_urls([UrlEntry(base + "/a", "Listed title", "2022-04-01")], KeywordSet.default("RU"), FAST)
    assert (result.records[0].title, result.records[0].date) == ("Listed title", "2022-04-01")


def test_scrape_all_failed(html_server):
    base, _ = html_server
    with pytest.raises(AllFetchesFailed):
        scrape_urls([base + "/nope", base + "/nada"], KeywordSet.default("RU"), FAST)


def test_keyword_match_is_case_insensitive_substring():
    ks = KeywordSet(Conflict.ISRAEL_HAMAS, frozenset({"Israel", "Hamas"}))
    assert ks.matches("ISRAELI officials")
    assert not ks.matches("nothing relevant")
    kept, dropped = filter_keywords([RawRecord("u1", "Israel", "no match"), RawRecord("u2", "", "hamas said")], ks)
    assert [r.url for r in kept] == ["u2"] and dropped == 1
    with pytest.raises(ValueError):
        KeywordSet(Conflict.ISRAEL_HAMAS, frozenset())


def test_read_url_list_formats(tmp_path):
    plain = tmp_path / "urls.txt"
    plain.write_text("# comment\nhttps://a.example/1\n\nhttps://a.example/2\n")
    assert [e.url for e in read_url_list(plain)] == ["https://a.example/1", "https://a.example/2"]
    single = tmp_path / "single.csv"
    single.write_text("url\nhttps://a.example/3\n")
    assert [e.url for e in read_url_list(single)] == ["https://a.example/3"]
    rich = tmp_path / "rich.csv"
    rich.write_text("Title,URL,date\nOne,https://a.example/4,2022-05-01\nTwo,,2022-05-02\n")
    assert read_url_list(rich) == [UrlEntry("https://a.example/4", "One", "2022-05-01")]


@pytest.mark.parametrize("value, expected", [
    ("2022-02-24", date(2022, 2, 24)),
    ("2022-02-24T23:30:00Z", date(2022, 2, 24)),
    ("2022-02-24T01:30:00+03:00", date(2022, 2, 23)),
    ("2022-02-24T10:00:00", date(2022, 2, 24)),
])
def test_parse_date(value, expected):
    assert parse_date(value) == expected


def test_parse_date_rejects_garbage():
    for bad in (None, "", "yesterday"):
        with pytest.raises(ValueError):
            parse_date(bad)


def test_to_articles_counts_every_drop():
    window = StudyWindow.for_conflict(Conflict.RUSSIA_UKRAINE)
    records = [
        RawRecord("https://x/1", "T", "Russia talks", "2022-03-01"),
        RawRecord("https://x/1", "T", "Russia talks again", "2022-03-02"),
        RawRecord("https://x/2", "T", "", "2022-03-01"),
        RawRecord("https://x/3", "T", "Россия Украина переговоры", "2022-03-01"),
        RawRecord("https://x/4", "T", "Russia", "not a date"),
        RawRecord("https://x/5", "T", "Russia", "2019-01-01"),
        RawRecord("", "T", "Russia", "2022-03-01"),
    ]
    corpus, report = to_articles(records, "bbc", "RU", window)
    assert [a.url for a in corpus] == ["https://x/1"]
    assert corpus.articles[0].source == "BBC"
    assert report == {
        "input": 7, "kept": 1, "Duplicate": 1, "Empty": 1, "NonEnglish": 1,
        "BadDate": 1, "OutOfWindow": 1, "BadUrl": 1,
    }


def test_raw_round_trip(tmp_path):
    records = [RawRecord("https://x/1", "T", "body", "2022-01-01", ["t1"]), RawRecord("https://x/2", "U", "b2")]
    save_raw(records, tmp_path / "raw.jsonl")
    assert load_raw(tmp_path / "raw.jsonl") == records
