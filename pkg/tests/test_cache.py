from __future__ import annotations

import threading

from biaslens.cache import JsonlCache

KEY = ("url", "model_id")


def test_put_get_and_reload(tmp_path):
    path = tmp_path / "c" / "cache.jsonl"
    cache = JsonlCache(path, KEY)
    cache.put({"url": "b", "model_id": "m", "label": "Left"})
    cache.put({"url": "a", "model_id": "m", "label": "Right"})
    assert ("a", "m") in cache and cache.get(("b", "m"))["label"] == "Left"
    assert cache.get(("c", "m")) is None
    reloaded = JsonlCache(path, KEY)
    assert len(reloaded) == 2 and reloaded.get(("a", "m"))["label"] == "Right"


def test_later_entries_win_and_compact_sorts(tmp_path):
    path = tmp_path / "cache.jsonl"
    cache = JsonlCache(path, KEY)
    for url, label in (("b", "Left"), ("a", "Centre"), ("b", "Right")):
        cache.put({"url": url, "model_id": "m", "label": label})
    assert len(path.read_text().splitlines()) == 3
    cache.compact()
    assert path.read_text().splitlines() == [
        '{"label": "Centre", "model_id": "m", "url": "a"}',
        '{"label": "Right", "model_id": "m", "url": "b"}',
    ]


def test_compact_is_independent_of_write_order(tmp_path):
    entries = [{"url": f"u{i}", "model_id": "m", "n": i} for i in range(40)]
    a, b = JsonlCache(tmp_path / "a.jsonl", KEY), JsonlCache(tmp_path / "b.jsonl", KEY)
    threads = [threading.Thread(target=a.put, args=(e,)) for e in entries]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    for e in reversed(entries):
        b.put(e)
    a.compact()
    b.compact()
    assert (tmp_path / "a.jsonl").read_bytes() == (tmp_path / "b.jsonl").read_bytes()


def test_compact_without_entries_creates_nothing(tmp_path):
    JsonlCache(tmp_path / "none.jsonl", KEY).compact()
    assert not (tmp_path / "none.jsonl").exists()
