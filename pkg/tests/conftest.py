from __future__ import annotations

import json
import threading
import time
from datetime import date
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from urllib.parse import parse_qs, urlsplit

import pytest

from biaslens.corpus import Article, Conflict, Corpus

_criteria: list[tuple[str, str]] = []


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(name): acceptance criterion reported in the summary")


def pytest_runtest_logreport(report):
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        name = report.user_properties and dict(report.user_properties).get("criterion")
        if name:
            _criteria.append((name, "PASS" if report.passed else "FAIL"))


def pytest_runtest_setup(item):
    marker = item.get_closest_marker("criterion")
    if marker:
        item.user_properties.append(("criterion", marker.args[0]))


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for name, outcome in _criteria:
        terminalreporter.write_line(f"{outcome}  {name}")


# -- corpora ------------------------------------------------------------------

def make_article(
    url: str = "https://example.org/a",
    content: str = "Russia and Ukraine talks",
    day: date = date(2022, 3, 1),
    source: str = "BBC",
    conflict: Conflict = Conflict.RUSSIA_UKRAINE,
    title: str = "Title",
) -> Article:
    return Article(url, title, content, day, source, conflict)


@pytest.fixture
def small_corpus() -> Corpus:
    return Corpus((
        make_article("https://example.org/1", "Aid for civilians and refugees in Ukraine", date(2021, 5, 3)),
        make_article("https://example.org/2", "Military security and troops near the border of Ukraine", date(2022, 2, 24)),
        make_article("https://example.org/3", "Talks between Russia and Ukraine continue", date(2022, 3, 9)),
        make_article("https://example.org/4", "Gaza ceasefire talks", date(2023, 10, 7),
                     conflict=Conflict.ISRAEL_HAMAS, source="Guardian"),
    ))


# -- fake content API ---------------------------------------------------------

class ContentApi:
    """In-process stand-in for a paged content search API.

    ``failures`` maps a page number to a list of status codes returned, in
    order, before the page is served normally. The server tracks how many
    requests are in flight at once.
    """

    def __init__(self, n_results: int = 23, page_size: int = 5, delay: float = 0.01):
        self.results = [
            {
                "webUrl": f"https://content.example.org/world/{i:03d}",
                "webTitle": f"Story {i}",
                "webPublicationDate": f"2022-03-{1 + i % 28:02d}T10:00:00Z",
                "fields": {"bodyText": f"Russia Ukraine report number {i}"},
                "tags": [{"id": "world/ukraine"}],
            }
            for i in range(n_results)
        ]
        self.page_size = page_size
        self.delay = delay
        self.failures: dict[int, list[int]] = {}
        self.requests: list[dict] = []
        self.in_flight = 0
        self.max_in_flight = 0
        self._lock = threading.Lock()

    @property
    def pages(self) -> int:
        return max(1, -(-len(self.results) // self.page_size))

    def handle(self, query: dict) -> tuple[int, bytes]:
        page = int(query.get("page", ["1"])[0])
        with self._lock:
            self.requests.append(query)
            self.in_flight += 1
            self.max_in_flight = max(self.max_in_flight, self.in_flight)
            script = self.failures.get(page)
            status = script.pop(0) if script else 200
        try:
            time.sleep(self.delay)
            if status != 200:
                return status, b'{"message": "injected failure"}'
            lo = (page - 1) * self.page_size
            body = {"response": {
                "status": "ok",
                "pages": self.pages,
                "currentPage": page,
                "results": self.results[lo:lo + self.page_size],
            }}
            return 200, json.dumps(body).encode()
        finally:
            with self._lock:
                self.in_flight -= 1


@pytest.fixture
def content_api():
    api = ContentApi()

    class Handler(BaseHTTPRequestHandler):
        def do_GET(self):
            status, body = api.handle(parse_qs(urlsplit(self.path).query))
            self.send_response(status)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(body)))
            self.end_headers()
            self.wfile.write(body)

        def log_message(self, *args):
            pass

    server = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
    thread = threading.Thread(target=server.serve_forever, args=(0.05,), daemon=True)
    thread.start()
    api.url = f"http://127.0.0.1:{server.server_address[1]}/search"
    try:
        yield api
    finally:
        server.shutdown()
        server.server_close()


@pytest.fixture
def html_server():
    """Serves ``pages`` (path -> (status, html)) on localhost."""
    pages: dict[str, tuple[int, str]] = {}

    class Handler(BaseHTTPRequestHandler):
        def do_GET(self):
            status, html = pages.get(urlsplit(self.path).path, (404, "not found"))
            body = html.encode()
            self.send_response(status)
            self.send_header("Content-Type", "text/html; charset=utf-8")
            self.send_header("Content-Length", str(len(body)))
            self.end_headers()
            self.wfile.write(body)

        def log_message(self, *args):
            pass

    server = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
    threading.Thread(target=server.serve_forever, args=(0.05,), daemon=True).start()
    base = f"http://127.0.0.1:{server.server_address[1]}"
    try:
        yield base, pages
    finally:
        server.shutdown()
        server.server_close()


# -- demo run -----------------------------------------------------------------

@pytest.fixture(scope="session")
def demo_run(tmp_path_factory) -> Path:
    from biaslens.cli import main

    out = tmp_path_factory.mktemp("demo") / "run"
    assert main(["run-all", "--config", "builtin:demo", "--out", str(out), "--offline"]) == 0
    return out
