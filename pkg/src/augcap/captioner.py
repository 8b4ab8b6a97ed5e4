"""LLM caption queries, pluggable caption backends, and caption postprocessing."""

from __future__ import annotations

import json
import logging
import os
import re
import time
import urllib.error
import urllib.request
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Protocol, Sequence

from augcap.composer import BACKGROUND, EventDescriptor
from augcap.errors import BackendError, ParseError

logger = logging.getLogger(__name__)

DEFAULT_INSTRUCTION = (
    "Below is a numbered list of scenarios, each given as a JSON list of sound events. "
    "Write one short, natural sentence describing each scenario. Events sharing an order "
    "value happen at the same time; a higher order value happens later. "
    "Only return the stories."
)
MAX_BATCH = 20


def build_query(descriptors: Sequence[EventDescriptor]) -> str:
    return json.dumps([d.to_dict() for d in descriptors], ensure_ascii=False, separators=(",", ":"))


def parse_query(payload: str) -> list[EventDescriptor]:
    return [EventDescriptor.from_dict(d) for d in json.loads(payload)]


def build_prompt(queries: Sequence[str], instruction: str = DEFAULT_INSTRUCTION) -> str:
    """Instruction text followed by the numbered scenario list."""
    if not queries:
        raise ValueError("a prompt needs at least one scenario")
    lines = [f"{i}. {q}" for i, q in enumerate(queries, start=1)]
    return instruction + "\n\n" + "\n".join(lines)


@dataclass
class CaptionQuery:
    scenarios: list[list[EventDescriptor]]
    batch_id: str

    def __post_init__(self):
        for scenario in self.scenarios:
            if not scenario:
                raise ValueError("empty scenario")
            orders = sorted({d.order for d in scenario})
            if orders != list(range(len(orders))):
                raise ValueError(f"orders {orders} are not contiguous from 0")

    def payload(self) -> str:
        return "[" + ",".join(build_query(s) for s in self.scenarios) + "]"


class CaptionBackend(Protocol):
    name: str

    def complete(self, prompt: str, query_payload: str) -> str:
        """Return the raw response text, one numbered story per scenario."""
        ...


_NUMBERED = re.compile(r"^\s*(\d+)[.)]\s*(.*)$")


def parse_numbered(raw: str) -> list[str]:
    """Split a numbered-list response into captions, stripping the ``N.`` prefixes."""
    lines = [ln.strip() for ln in raw.splitlines() if ln.strip()]
    if not lines:
        raise ParseError("empty response", raw)
    items: list[str] = []
    for line in lines:
        m = _NUMBERED.match(line)
        if m:
            items.append(m.group(2).strip())
        elif items:
            items[-1] = f"{items[-1]} {line}"
        else:
            items.append(line)
    return items


@dataclass(frozen=True)
class RetryPolicy:
    max_attempts: int = 3
    backoff_s: float = 0.0


def generate_captions(query: CaptionQuery, backend: CaptionBackend,
                      retry: RetryPolicy = RetryPolicy(),
                      instruction: str = DEFAULT_INSTRUCTION) -> list[str]:
    prompt = build_prompt([build_query(s) for s in query.scenarios], instruction)
    payload = query.payload()
    expected = len(query.scenarios)
    last_error: Exception | None = None
    for attempt in range(1, retry.max_attempts + 1):
        try:
            captions = parse_numbered(backend.complete(prompt, payload))
        except ParseError as exc:
            last_error = exc
        except BackendError as exc:
            last_error = exc
        else:
            if len(captions) == expected:
                return captions
            last_error = BackendError(
                f"batch {query.batch_id}: expected {expected} captions, got {len(captions)}")
        logger.warning("attempt %d/%d for batch %s failed: %s", attempt, retry.max_attempts,
                       query.batch_id, last_error)
        if retry.backoff_s and attempt < retry.max_attempts:
            time.sleep(retry.backoff_s * attempt)
    if isinstance(last_error, ParseError):
        raise last_error
    raise BackendError(f"{backend.name}: giving up after {retry.max_attempts} attempts: {last_error}")


def generate_many(queries: Sequence[CaptionQuery], backend: CaptionBackend,
                  retry: RetryPolicy = RetryPolicy(), instruction: str = DEFAULT_INSTRUCTION,
                  max_in_flight: int = 1) -> dict[str, list[str]]:
    """Caption several batches concurrently; results are keyed by batch id."""
    if max_in_flight <= 1:
        return {q.batch_id: generate_captions(q, backend, retry, instruction) for q in queries}
    with ThreadPoolExecutor(max_workers=max_in_flight) as pool:
        futures = {q.batch_id: pool.submit(generate_captions, q, backend, retry, instruction)
                   for q in queries}
        return {bid: fut.result() for bid, fut in futures.items()}


@dataclass(frozen=True)
class PostprocessPolicy:
    min_words: int = 6
    max_words: int = 45

    def __post_init__(self):
        if not 0 < self.min_words < self.max_words:
            raise ValueError("need 0 < min_words < max_words")


@dataclass(frozen=True)
class CaptionVerdict:
    accepted: bool
    caption: str
    reason: str | None = None
    word_count: int = 0


_LEADING_NUMERAL = re.compile(r"^\s*\d+[.)]\s*")
_QUOTES = "\"'“”‘’"


def clean_caption(caption: str) -> str:
    text = _LEADING_NUMERAL.sub("", caption.strip()).strip()
    while len(text) >= 2 and text[0] in _QUOTES and text[-1] in _QUOTES:
        text = text[1:-1].strip()
    return text


def postprocess_caption(caption: str, policy: PostprocessPolicy = PostprocessPolicy()) -> CaptionVerdict:
    text = clean_caption(caption)
    count = len(text.split())
    if count < policy.min_words:
        return CaptionVerdict(False, text, "too_short", count)
    if count > policy.max_words:
        return CaptionVerdict(False, text, "too_long", count)
    return CaptionVerdict(True, text, None, count)


# Offline template backend ------------------------------------------------------

_SUBJECTS = {
    "dog": ("a dog", "barks"), "cat": ("a cat", "meows"), "bird": ("a bird", "chirps"),
    "rain": ("rain", "falls"), "wind": ("wind", "blows"), "thunder": ("thunder", "rumbles"),
    "water": ("water", "flows"), "car": ("a car", "drives by"), "train": ("a train", "passes"),
    "siren": ("a siren", "wails"), "engine": ("an engine", "hums"), "baby": ("a baby", "cries"),
    "door": ("a door", "slams"), "bell": ("a bell", "rings"), "phone": ("a phone", "rings"),
    "horn": ("a horn", "honks"), "firecracker": ("a firecracker", "pops"),
    "tree": ("a tree", "falls"), "hammer": ("a hammer", "strikes"), "clock": ("a clock", "ticks"),
    "music": ("music", "plays"), "applause": ("applause", "erupts"),
    "laughter": ("laughter", "breaks out"), "footsteps": ("footsteps", "echo"),
    "speech": ("a person", "speaks"), "guitar": ("a guitar", "strums"),
    "drum": ("a drum", "beats"), "whistle": ("a whistle", "blows"),
}

_ADVERBS = {"loud": "loudly", "quiet": "quietly", "fast": "quickly", "slow": "slowly",
            "short": "briefly"}
_ADJECTIVES = {"high-pitch": "high-pitched", "low-pitch": "low-pitched"}
_ARTICLES = ("a ", "an ", "the ")


def _with_adjective(subject: str, adjective: str) -> str:
    for article in _ARTICLES:
        if subject.startswith(article):
            head = "an " if adjective[0] in "aeiou" else "a "
            if article == "the ":
                head = article
            return head + adjective + " " + subject[len(article):]
    return adjective + " " + subject


def _subject(event: EventDescriptor) -> tuple[str, str]:
    for token in re.findall(r"[a-z]+", event.sound.lower()):
        if token in _SUBJECTS:
            return _SUBJECTS[token]
    return f"the sound of {event.sound}", "is heard"


def _clause(event: EventDescriptor) -> str:
    subject, verb = _subject(event)
    for word in event.description:
        if word in _ADJECTIVES:
            subject = _with_adjective(subject, _ADJECTIVES[word])
    adverbs = [_ADVERBS[w] for w in event.description if w in _ADVERBS]
    unknown = [w for w in event.description
               if w not in _ADVERBS and w not in _ADJECTIVES and w != BACKGROUND]
    parts = [subject, verb]
    if adverbs:
        parts.append(adverbs[0] if len(adverbs) == 1
                     else ", ".join(adverbs[:-1]) + " and " + adverbs[-1])
    parts += unknown
    if BACKGROUND in event.description:
        parts.append("in the background")
    return " ".join(parts)


def _noun_phrase(event: EventDescriptor) -> str:
    subject = _subject(event)[0]
    adjectives = [_ADJECTIVES.get(w, w) for w in event.description if w != BACKGROUND]
    if adjectives:
        subject = _with_adjective(subject, ", ".join(adjectives))
    return subject


def _groups(scenario: Sequence[EventDescriptor], clause) -> list[list[str]]:
    groups: dict[int, list[str]] = {}
    for event in scenario:
        groups.setdefault(event.order, []).append(clause(event))
    return [groups[o] for o in sorted(groups)]


def template_caption(scenario: Sequence[EventDescriptor], max_words: int = 45) -> str:
    """Rule-based caption: one clause per event, ``while`` within an order
    group and ``then`` between groups. Falls back to a terser noun-phrase
    form when the full sentence would exceed ``max_words``."""
    text = ", then ".join(" while ".join(g) for g in _groups(scenario, _clause))
    if len(scenario) == 1:
        text += ", and nothing else can be heard"
    elif len({e.order for e in scenario}) > 1 and len(text.split()) < 8:
        text = "first, " + text
    if len(text.split()) > max_words:
        # background events of a group follow its lead event after "over"
        text = "we hear " + ", then ".join(
            g[0] + (" over " + " and ".join(g[1:]) if len(g) > 1 else "")
            for g in _groups(scenario, _noun_phrase))
    return text[0].upper() + text[1:] + "."


@dataclass
class OfflineTemplateBackend:
    name: str = "offline"
    requests: list[str] = field(default_factory=list)

    def complete(self, prompt: str, query_payload: str) -> str:
        self.requests.append(query_payload)
        scenarios = [[EventDescriptor.from_dict(d) for d in s] for s in json.loads(query_payload)]
        return "\n".join(f"{i}. {template_caption(s)}" for i, s in enumerate(scenarios, start=1))


@dataclass
class HttpChatBackend:
    """Generic chat-completion client (POST JSON, bearer token)."""

    endpoint: str
    model: str
    api_key_env: str = "LLM_API_KEY"
    temperature: float = 0.7
    timeout_s: float = 60.0
    name: str = "http"

    def request_body(self, prompt: str) -> dict:
        return {"model": self.model, "temperature": self.temperature,
                "messages": [{"role": "user", "content": prompt}]}

    def complete(self, prompt: str, query_payload: str) -> str:
        headers = {"Content-Type": "application/json"}
        key = os.environ.get(self.api_key_env)
        if key:
            headers["Authorization"] = f"Bearer {key}"
        req = urllib.request.Request(self.endpoint, data=json.dumps(self.request_body(prompt)).encode(),
                                     headers=headers, method="POST")
        try:
            with urllib.request.urlopen(req, timeout=self.timeout_s) as resp:
                body = json.loads(resp.read().decode("utf-8"))
        except (urllib.error.URLError, TimeoutError, json.JSONDecodeError) as exc:
            raise BackendError(f"{self.endpoint}: {exc}") from exc
        try:
            return body["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise ParseError("unexpected response shape", json.dumps(body)) from exc


def backend_from_config(config: dict) -> CaptionBackend:
    kind = config.get("backend", "offline")
    if kind == "offline":
        return OfflineTemplateBackend()
    if kind == "http":
        http = config.get("http", {})
        if "endpoint" not in http or "model" not in http:
            raise ValueError("http backend needs 'endpoint' and 'model' in the [http] config section")
        return HttpChatBackend(endpoint=http["endpoint"], model=http["model"],
                               api_key_env=http.get("api_key_env", "LLM_API_KEY"),
                               temperature=float(http.get("temperature", 0.7)),
                               timeout_s=float(http.get("timeout_s", 60.0)))
    raise ValueError(f"unknown backend {kind!r}")
