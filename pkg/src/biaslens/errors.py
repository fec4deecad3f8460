"""Exception hierarchy shared across the pipeline."""

from __future__ import annotations


class BiasLensError(Exception):
    """Base class for all pipeline errors."""


# corpus

class OutOfWindow(BiasLensError):
    def __init__(self, url: str, published_date, window):
        self.url = url
        self.published_date = published_date
        self.window = window
        super().__init__(
            f"{url}: {published_date} outside study window "
            f"{window.start_date}..{window.end_date}"
        )


class MalformedRecord(BiasLensError):
    def __init__(self, line_number: int, reason: str = ""):
        self.line_number = line_number
        self.reason = reason
        super().__init__(f"malformed record on line {line_number}: {reason}")


# ingest / http

class TransportError(BiasLensError):
    def __init__(self, message: str, status: int | None = None):
        self.status = status
        super().__init__(message)


class AuthError(TransportError):
    pass


class RateLimited(TransportError):
    pass


class SchemaError(BiasLensError):
    pass


class CassetteMiss(TransportError):
    pass


class AllFetchesFailed(BiasLensError):
    def __init__(self, failures):
        self.failures = failures
        super().__init__(f"all {len(failures)} URLs failed")


# n-gram

class EmptyCorpus(BiasLensError):
    pass


# classification / sentiment

class EmptyInput(BiasLensError):
    pass


class BackendError(BiasLensError):
    def __init__(self, message: str, chunk_index: int | None = None):
        self.chunk_index = chunk_index
        if chunk_index is not None:
            message = f"chunk {chunk_index}: {message}"
        super().__init__(message)


class Unparseable(BiasLensError):
    def __init__(self, raw: str):
        self.raw = raw
        super().__init__(f"unparseable label: {raw!r}")


class AllRunsUnparseable(BiasLensError):
    def __init__(self, url: str, raws: list[str]):
        self.url = url
        self.raws = raws
        super().__init__(f"{url}: no parseable label in {len(raws)} responses")


class TooLong(BiasLensError):
    pass


class MockMiss(BackendError):
    pass


class FailureRateExceeded(BiasLensError):
    def __init__(self, rate: float, threshold: float, records, failures):
        self.rate = rate
        self.threshold = threshold
        self.records = records
        self.failures = failures
        super().__init__(f"failure rate {rate:.3f} exceeds threshold {threshold:.3f}")


# aggregation

class DanglingRecord(BiasLensError):
    pass


class EmptySubset(BiasLensError):
    pass


class JoinMiss(BiasLensError):
    pass


# cli

class ConfigError(BiasLensError):
    pass


class MissingStageInput(BiasLensError):
    pass


class RunLocked(BiasLensError):
    pass
