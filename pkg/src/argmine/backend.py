"""Inference backends: a chat-completion/embedding HTTP client and a
deterministic offline mock.

The HTTP client speaks the common chat-completions JSON shape
(``model`` / ``messages`` / ``temperature``, plus ``model`` / ``input`` for
embeddings), so any compatible endpoint works unchanged. Request bodies are
byte-stable for identical (config, prompt) pairs: no timestamps, no request
ids.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import re
import threading
import time
from dataclasses import dataclass
from typing import Callable, Iterable, Optional, Protocol, Sequence

import httpx

from .prompting import Prompt, Task

log = logging.getLogger(__name__)

RETRY_BASE_DELAY = 0.5


class BackendError(Exception):
    """Base class for inference-backend failures."""


class TransportError(BackendError):
    """Network failure or retryable HTTP status, after retries ran out."""


class AuthError(BackendError):
    """401/403 from the endpoint; never retried."""


class BadResponseError(BackendError):
    """The endpoint answered, but not in the expected shape."""


@dataclass(frozen=True)
class BackendConfig:
    endpoint_url: str
    model_id: str
    api_key: Optional[str] = None
    temperature: float = 0.0
    timeout: float = 60.0
    max_retries: int = 3
    max_concurrent: int = 4

    def __post_init__(self) -> None:
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")
        if self.max_concurrent < 1:
            raise ValueError("max_concurrent must be >= 1")


@dataclass(frozen=True)
class Embedding:
    vector: tuple[float, ...]
    model_id: str

    def __post_init__(self) -> None:
        if not self.vector:
            raise ValueError("embedding vector must be non-empty")
        if not all(math.isfinite(x) for x in self.vector):
            raise ValueError("embedding vector must be finite")


class Backend(Protocol):
    """What the pipeline needs from an inference service."""

    def complete(self, prompt: Prompt) -> str: ...

    def complete_raw(self, system: str, user: str) -> str: ...

    def embed(self, texts: Sequence[str]) -> list[Embedding]: ...


def chat_request_body(config: BackendConfig, system: str, user: str) -> bytes:
    """The exact request payload, stable to the byte."""
    payload = {
        "model": config.model_id,
        "messages": [
            {"role": "system", "content": system},
            {"role": "user", "content": user},
        ],
        "temperature": config.temperature,
    }
    return json.dumps(payload, ensure_ascii=False, separators=(",", ":")).encode("utf-8")


def embeddings_request_body(config: BackendConfig, texts: Sequence[str]) -> bytes:
    payload = {"model": config.model_id, "input": list(texts)}
    return json.dumps(payload, ensure_ascii=False, separators=(",", ":")).encode("utf-8")


class HttpBackend:
    """Client for one chat-completion/embedding endpoint.

    Shareable across threads; a semaphore keeps at most
    ``config.max_concurrent`` requests in flight. Transient transport errors
    and 429/5xx responses are retried with exponential backoff, up to
    ``config.max_retries`` retries.
    """

    def __init__(
        self,
        config: BackendConfig,
        transport: Optional[httpx.BaseTransport] = None,
        sleeper: Callable[[float], None] = time.sleep,
    ):
        self.config = config
        self._sleep = sleeper
        self._slots = threading.BoundedSemaphore(config.max_concurrent)
        headers = {"Content-Type": "application/json"}
        if config.api_key:
            headers["Authorization"] = f"Bearer {config.api_key}"
        self._client = httpx.Client(
            timeout=config.timeout, transport=transport, headers=headers
        )

    def close(self) -> None:
        self._client.close()

    def _url(self, path: str) -> str:
        return self.config.endpoint_url.rstrip("/") + path

    def _post_with_retries(self, url: str, body: bytes) -> httpx.Response:
        retries = self.config.max_retries
        for attempt in range(retries + 1):
            try:
                with self._slots:
                    response = self._client.post(url, content=body)
            except httpx.TransportError as exc:
                if attempt == retries:
                    raise TransportError(f"request to {url} failed: {exc}") from exc
                log.warning("transport error on %s, retry %d/%d", url, attempt + 1, retries)
            else:
                if response.status_code in (401, 403):
                    raise AuthError(f"authentication rejected ({response.status_code})")
                if response.status_code == 429 or response.status_code >= 500:
                    if attempt == retries:
                        raise TransportError(
                            f"{url} still answering {response.status_code} after {retries} retries"
                        )
                    log.warning(
                        "status %d on %s, retry %d/%d",
                        response.status_code, url, attempt + 1, retries,
                    )
                elif response.status_code != 200:
                    raise BadResponseError(
                        f"unexpected status {response.status_code}: {response.text[:200]}"
                    )
                else:
                    return response
            self._sleep(RETRY_BASE_DELAY * 2**attempt)
        raise AssertionError("unreachable")

    def complete(self, prompt: Prompt) -> str:
        return self.complete_raw(prompt.system, prompt.user)

    def complete_raw(self, system: str, user: str) -> str:
        body = chat_request_body(self.config, system, user)
        response = self._post_with_retries(self._url("/chat/completions"), body)
        try:
            data = response.json()
            content = data["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise BadResponseError(f"malformed completion body: {exc}") from exc
        if not isinstance(content, str):
            raise BadResponseError("completion content is not a string")
        return content

    def embed(self, texts: Sequence[str]) -> list[Embedding]:
        if not texts or any(not t for t in texts):
            raise ValueError("texts must be non-empty strings")
        body = embeddings_request_body(self.config, texts)
        response = self._post_with_retries(self._url("/embeddings"), body)
        try:
            rows = response.json()["data"]
            vectors = [tuple(float(x) for x in row["embedding"]) for row in rows]
        except (ValueError, KeyError, TypeError) as exc:
            raise BadResponseError(f"malformed embeddings body: {exc}") from exc
        if len(vectors) != len(texts):
            raise BadResponseError(
                f"expected {len(texts)} embeddings, got {len(vectors)}"
            )
        lengths = {len(v) for v in vectors}
        if len(lengths) > 1:
            raise BadResponseError("embedding vectors differ in length")
        return [Embedding(vector=v, model_id=self.config.model_id) for v in vectors]


def complete(config: BackendConfig, prompt: Prompt) -> str:
    """One-shot completion with a throwaway client."""
    backend = HttpBackend(config)
    try:
        return backend.complete(prompt)
    finally:
        backend.close()


def embed(config: BackendConfig, texts: Sequence[str]) -> list[Embedding]:
    backend = HttpBackend(config)
    try:
        return backend.embed(texts)
    finally:
        backend.close()


# -- deterministic mock --------------------------------------------------
#
# The mock answers from closed word lists so tests and offline runs are
# reproducible across processes. It understands the stock templates' "Text:"
# and "Topic:" framing; custom template sets are outside its contract.

SUPPORT_CUES = ("because", "therefore", "since", "so", "thus", "hence")
ASSERTION_CUES = (
    "is", "are", "was", "were", "must", "should", "will",
    "cannot", "never", "always", "helps", "help", "makes", "make",
)
POSITIVE_WORDS = (
    "good", "beneficial", "helps", "help", "support", "right",
    "safe", "better", "protect", "improve", "defensible",
)
NEGATIVE_WORDS = (
    "bad", "harmful", "dangerous", "wrong", "worse", "threat",
    "damage", "hurt", "risk", "impossible", "scam", "rejected",
)

_TEXT_BLOCK = re.compile(r'"""\n(.*?)\n"""', re.DOTALL)
_TOPIC_LINE = re.compile(r'^Topic:\s*"(.*)"\s*$', re.MULTILINE)
_STOPWORDS = frozenset(
    "the a an i it this that these those every no if in on at for and but or "
    "is are was were when given there my our your their".split()
)
_CAP_SPAN = re.compile(r"[A-Z][\w-]*(?:\s+[A-Z][\w-]*)*")


def _has_any(words: Iterable[str], text: str) -> bool:
    lowered = text.lower()
    return any(re.search(rf"\b{w}\b", lowered) for w in words)


def _count_hits(words: Iterable[str], text: str) -> int:
    lowered = text.lower()
    return sum(len(re.findall(rf"\b{w}\b", lowered)) for w in words)


def _prompt_text(prompt: Prompt) -> str:
    match = _TEXT_BLOCK.search(prompt.user)
    return match.group(1) if match else prompt.user


def _prompt_topic(prompt: Prompt) -> str:
    match = _TOPIC_LINE.search(prompt.user)
    return match.group(1) if match else ""


def _mock_detect(text: str) -> str:
    if _has_any(ASSERTION_CUES, text) and _has_any(SUPPORT_CUES, text):
        return "Argument"
    return "NoArgument"


def _mock_stance(text: str, topic: str) -> str:
    window = text
    if topic:
        at = text.lower().find(topic.lower())
        if at >= 0:
            window = text[max(0, at - 80): at + len(topic) + 80]
    positive = _count_hits(POSITIVE_WORDS, window)
    negative = _count_hits(NEGATIVE_WORDS, window)
    if negative > positive:
        return "Against"
    if positive > negative:
        return "Favor"
    return "NoArgument"


def _mock_extract(text: str) -> str:
    for match in _CAP_SPAN.finditer(text):
        words = match.group(0).split()
        while words and words[0].lower() in _STOPWORDS:
            words = words[1:]
        if words:
            return "Topic: " + " ".join(words)
    return "Topic: No Topic"


def mock_complete(prompt: Prompt) -> str:
    """Deterministic heuristic reply for any task prompt. Pure: identical
    prompt bytes produce identical output in any process."""
    text = _prompt_text(prompt)
    if prompt.task is Task.DETECT:
        return _mock_detect(text)
    if prompt.task is Task.STANCE:
        return _mock_stance(text, _prompt_topic(prompt))
    return _mock_extract(text)


_GENERATION_TEMPLATES = {
    ("deductive", "informal"):
        "Anything that undermines {topic} is bad news, and this plan clearly "
        "undermines {topic}, so it has to go.",
    ("deductive", "formal"):
        "All measures that weaken {topic} must be rejected by this body; the "
        "proposal before us weakens {topic}, and therefore it must be rejected.",
    ("inductive", "informal"):
        "Every time {topic} comes up in my feed it ends in a mess, so {topic} "
        "is clearly more trouble than it is worth.",
    ("inductive", "formal"):
        "In each recorded session where {topic} was expanded, outcomes "
        "improved; the record is consistent, so we should expect expanding "
        "{topic} to improve outcomes again.",
    ("abductive", "informal"):
        "Prices jumped right after they touched {topic}, so the best "
        "explanation is that {topic} is driving the increase.",
    ("abductive", "formal"):
        "The documented failures began immediately after changes to {topic}; "
        "since no rival account fits the record, the most plausible "
        "explanation is that {topic} is the cause.",
    ("analogical", "informal"):
        "Banning {topic} is like banning umbrellas because storms exist, so "
        "it makes no sense.",
    ("analogical", "formal"):
        "Regulation of {topic} resembles the licensing regime already upheld "
        "for broadcasting; since that regime is lawful, regulation of {topic} "
        "is likewise defensible.",
    ("fallacious", "informal"):
        "My cousin once had a bad day with {topic}, so obviously {topic} is a "
        "scam for everyone.",
    ("fallacious", "formal"):
        "Opponents of {topic} are funded by interested parties; their "
        "objections are therefore false, and {topic} must be approved.",
}

_NON_ARGUMENT_TEMPLATES = {
    "informal": "Saw a long thread about {topic} today. People keep posting about it.",
    "formal": (
        "The committee received testimony regarding {topic} during the "
        "afternoon session. The hearing record remains open."
    ),
}

_GEN_FIELD = {
    "topic": re.compile(r"^Topic:\s*(.+)$", re.MULTILINE),
    "type": re.compile(r"^Reasoning type:\s*(.+)$", re.MULTILINE),
    "style": re.compile(r"^Style:\s*(.+)$", re.MULTILINE),
}


def mock_generate(user: str) -> str:
    """Deterministic synthetic text for a generation request."""
    topic_m = _GEN_FIELD["topic"].search(user)
    style_m = _GEN_FIELD["style"].search(user)
    type_m = _GEN_FIELD["type"].search(user)
    topic = topic_m.group(1).strip() if topic_m else "the subject"
    style = style_m.group(1).strip() if style_m else "informal"
    if type_m:
        template = _GENERATION_TEMPLATES.get(
            (type_m.group(1).strip(), style),
            _GENERATION_TEMPLATES[("deductive", "informal")],
        )
    else:
        template = _NON_ARGUMENT_TEMPLATES.get(
            style, _NON_ARGUMENT_TEMPLATES["informal"]
        )
    return template.replace("{topic}", topic)


def mock_embed(texts: Sequence[str], dim: int = 64) -> list[Embedding]:
    """Hash-based unit vectors: stable across processes, identical strings
    map to identical vectors. A stand-in for a real embedding service."""
    out = []
    for text in texts:
        counts = [0.0] * dim
        padded = f"#{text.strip().lower()}#"
        for i in range(len(padded) - 2):
            gram = padded[i:i + 3].encode("utf-8")
            digest = hashlib.md5(gram).digest()
            slot = int.from_bytes(digest[:4], "big") % dim
            sign = 1.0 if digest[4] % 2 == 0 else -1.0
            counts[slot] += sign
        norm = math.sqrt(sum(x * x for x in counts))
        if norm == 0.0:
            counts[0] = 1.0
            norm = 1.0
        out.append(
            Embedding(vector=tuple(x / norm for x in counts), model_id="mock-embed")
        )
    return out


class MockBackend:
    """Offline backend with the deterministic heuristics above. Keeps a call
    log so tests can assert what was requested."""

    def __init__(self) -> None:
        self.calls: list[Prompt] = []
        self.raw_calls: list[tuple[str, str]] = []
        self._lock = threading.Lock()

    def complete(self, prompt: Prompt) -> str:
        with self._lock:
            self.calls.append(prompt)
        return mock_complete(prompt)

    def complete_raw(self, system: str, user: str) -> str:
        with self._lock:
            self.raw_calls.append((system, user))
        return mock_generate(user)

    def embed(self, texts: Sequence[str]) -> list[Embedding]:
        return mock_embed(texts)
