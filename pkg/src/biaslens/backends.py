"""Backend implementations: scripted and lexicon mocks, HTTP adapters.

The lexicon backends are deterministic stand-ins used for offline runs.
They are not models and say nothing about real articles.
"""

from __future__ import annotations

import hashlib
import json
import os
import threading
from pathlib import Path
from typing import Mapping, Sequence

from .classify import BackendRequest, PoliticalLabel, parse_label
from .errors import AuthError, BackendError, MockMiss, SchemaError, Unparseable
from .sentiment import EMOTIONS, Emotion, EmotionDistribution
from .transport import HttpClient, RatePolicy, RetryableError

LLM_API_KEY_ENV = "BIASLENS_LLM_API_KEY"

LEFT_CUES = frozenset({
    "humanitarian", "civilians", "refugees", "rights", "welfare", "climate",
    "workers", "equality", "aid", "ceasefire", "protest", "solidarity",
})
RIGHT_CUES = frozenset({
    "security", "military", "defence", "sovereignty", "border", "terrorism",
    "taxpayers", "deterrence", "strength", "sanctions", "troops", "order",
})
EMOTION_CUES = {
    Emotion.ANGER: frozenset({"outrage", "furious", "anger", "condemned", "fury"}),
    Emotion.DISGUST: frozenset({"atrocity", "atrocities", "disgusting", "appalling"}),
    Emotion.FEAR: frozenset({"fear", "fears", "threat", "attack", "warning", "danger", "killed"}),
    Emotion.JOY: frozenset({"celebrate", "hope", "peace", "relief", "welcomed"}),
    Emotion.SADNESS: frozenset({"grief", "mourning", "loss", "tragedy", "victims"}),
    Emotion.SURPRISE: frozenset({"unexpected", "sudden", "shock", "surprise"}),
}


def chunk_digest(tokens: Sequence[str]) -> str:
    return hashlib.sha256(" ".join(tokens).encode("utf-8")).hexdigest()


class LexiconChunkBackend:
    """Labels a window by counting left and right cue words."""

    def __init__(self, left: frozenset[str] = LEFT_CUES, right: frozenset[str] = RIGHT_CUES):
        self.left = left
        self.right = right
        self.calls = 0

    def predict(self, tokens: Sequence[str]) -> PoliticalLabel:
        self.calls += 1
        left = sum(1 for t in tokens if t in self.left)
        right = sum(1 for t in tokens if t in self.right)
        if left > right:
            return PoliticalLabel.LEFT
        if right > left:
            return PoliticalLabel.RIGHT
        return PoliticalLabel.CENTRE


class HashChunkBackend:
    """Deterministic pseudo-label derived from the window's hash."""

    _ORDER = (PoliticalLabel.LEFT, PoliticalLabel.CENTRE, PoliticalLabel.RIGHT)

    def __init__(self):
        self.calls = 0

    def predict(self, tokens: Sequence[str]) -> PoliticalLabel:
        self.calls += 1
        return self._ORDER[int(chunk_digest(tokens)[:8], 16) % 3]


class ScriptedChunkBackend:
    def __init__(self, labels: Mapping[str, str], default: str | None = None):
        self.labels = {k: PoliticalLabel(parse_label(v)) for k, v in labels.items()}
        self.default = parse_label(default) if default else None
        self.calls = 0

    def predict(self, tokens: Sequence[str]) -> PoliticalLabel:
        self.calls += 1
        digest = chunk_digest(tokens)
        if digest in self.labels:
            return self.labels[digest]
        if self.default is None:
            raise MockMiss(f"no scripted label for window {digest[:12]}")
        return self.default


class ScriptedTextBackend:
    """Replays scripted replies keyed by request digest.

    Fixture layout::

        {"default": "Centre",
         "responses": {"<sha256>": ["Left", {"status": 429}, "Centre"]}}

    Each call to a digest consumes the next item; the last item repeats once
    the script runs out. A ``{"status": N}`` item raises the HTTP error a
    real backend would.
    """

    def __init__(self, responses: Mapping[str, list], default=None):
        self.responses = {k: list(v) for k, v in responses.items()}
        self.default = default
        self.calls = 0
        self._cursor: dict[str, int] = {}
        self._lock = threading.Lock()

    @classmethod
    def from_file(cls, path: str | Path) -> "ScriptedTextBackend":
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls(data.get("responses", {}), data.get("default"))

    def complete(self, request: BackendRequest) -> str:
        digest = request.digest()
        with self._lock:
            self.calls += 1
            script = self.responses.get(digest)
            if script:
                i = self._cursor.get(digest, 0)
                self._cursor[digest] = i + 1
                item = script[min(i, len(script) - 1)]
            elif self.default is not None:
                item = self.default
            else:
                raise MockMiss(f"no scripted reply for request {digest[:12]}")
        if isinstance(item, dict):
            status = int(item.get("status", 500))
            if status in (401, 403):
                raise AuthError(f"scripted HTTP {status}", status=status)
            raise RetryableError(f"scripted HTTP {status}", status=status)
        return str(item)


class LexiconEmotionBackend:
    """Emotion distribution from cue-word counts with additive smoothing."""

    def __init__(self, smoothing: float = 0.1, neutral_weight: float = 1.0):
        self.smoothing = smoothing
        self.neutral_weight = neutral_weight
        self.calls = 0

    def score(self, tokens: Sequence[str]) -> EmotionDistribution:
        self.calls += 1
        scores = {e.value: self.smoothing for e in EMOTIONS}
        scores[Emotion.NEUTRAL.value] = self.neutral_weight
        for tok in tokens:
            for emotion, cues in EMOTION_CUES.items():
                if tok in cues:
                    scores[emotion.value] += 1.0
        return EmotionDistribution.from_scores(scores)


class ConstantEmotionBackend:
    def __init__(self, distribution: EmotionDistribution):
        self.distribution = distribution
        self.calls = 0

    def score(self, tokens: Sequence[str]) -> EmotionDistribution:
        self.calls += 1
        return self.distribution


# -- HTTP ---------------------------------------------------------------------

def _bearer(api_key_env: str | None) -> dict:
    if not api_key_env:
        return {}
    key = os.environ.get(api_key_env, "")
    if not key:
        raise AuthError(f"{api_key_env} is not set")
    return {"Authorization": f"Bearer {key}"}


class ChatCompletionBackend:
    """Text completion over an OpenAI-compatible HTTP API.

    ``style="chat"`` posts ``messages`` to ``/chat/completions``;
    ``style="completion"`` posts ``prompt`` to ``/completions``.
    """

    def __init__(
        self,
        base_url: str,
        model: str,
        *,
        style: str = "chat",
        api_key_env: str | None = LLM_API_KEY_ENV,
        policy: RatePolicy | None = None,
        client: HttpClient | None = None,
    ):
        if style not in ("chat", "completion"):
            raise ValueError("style must be 'chat' or 'completion'")
        self.base_url = base_url.rstrip("/")
        self.model = model
        self.style = style
        self.api_key_env = api_key_env
        self.client = client or HttpClient(policy or RatePolicy())
        self.calls = 0

    def payload(self, request: BackendRequest) -> dict:
        body = {
            "model": self.model,
            "temperature": request.temperature,
            "max_tokens": request.max_output_tokens,
            "stop": list(request.stop_tokens),
        }
        if self.style == "chat":
            body["messages"] = [{"role": "user", "content": request.text}]
        else:
            body["prompt"] = request.text
        return body

    def complete(self, request: BackendRequest) -> str:
        self.calls += 1
        path = "/chat/completions" if self.style == "chat" else "/completions"
        reply = self.client.post_json(
            self.base_url + path, self.payload(request), headers=_bearer(self.api_key_env)
        )
        try:
            choice = reply.json()["choices"][0]
            text = choice["message"]["content"] if self.style == "chat" else choice["text"]
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise SchemaError(f"unexpected completion response: {exc}") from None
        return text or ""


def _label_scores(payload) -> list[dict]:
    # inference endpoints answer either [{...}] or [[{...}]]
    if isinstance(payload, list) and payload and isinstance(payload[0], list):
        payload = payload[0]
    if not isinstance(payload, list) or not all(isinstance(x, dict) for x in payload):
        raise SchemaError("expected a list of {label, score} objects")
    return payload


class HttpChunkBackend:
    """Window classifier behind a text-classification inference endpoint."""

    def __init__(
        self,
        url: str,
        *,
        label_map: Mapping[str, str] | None = None,
        api_key_env: str | None = None,
        policy: RatePolicy | None = None,
        client: HttpClient | None = None,
    ):
        self.url = url
        self.label_map = dict(label_map or {"LABEL_0": "Left", "LABEL_1": "Centre", "LABEL_2": "Right"})
        self.api_key_env = api_key_env
        self.client = client or HttpClient(policy or RatePolicy())
        self.calls = 0

    def predict(self, tokens: Sequence[str]) -> PoliticalLabel:
        self.calls += 1
        reply = self.client.post_json(self.url, {"inputs": " ".join(tokens)}, headers=_bearer(self.api_key_env))
        try:
            scores = _label_scores(reply.json())
            best = max(scores, key=lambda s: float(s["score"]))
            name = str(best["label"])
        except (ValueError, KeyError) as exc:
            raise SchemaError(f"unexpected classifier response: {exc}") from None
        try:
            return parse_label(self.label_map.get(name, name))
        except Unparseable as exc:
            raise BackendError(f"unknown classifier label {name!r}") from exc


class HttpEmotionBackend:
    def __init__(
        self,
        url: str,
        *,
        api_key_env: str | None = None,
        policy: RatePolicy | None = None,
        client: HttpClient | None = None,
    ):
        self.url = url
        self.api_key_env = api_key_env
        self.client = client or HttpClient(policy or RatePolicy())
        self.calls = 0

    def score(self, tokens: Sequence[str]) -> EmotionDistribution:
        self.calls += 1
        reply = self.client.post_json(self.url, {"inputs": " ".join(tokens)}, headers=_bearer(self.api_key_env))
        try:
            scores = {str(s["label"]).lower(): float(s["score"]) for s in _label_scores(reply.json())}
        except (ValueError, KeyError) as exc:
            raise SchemaError(f"unexpected emotion response: {exc}") from None
        return EmotionDistribution.from_scores(scores)
