"""Generation and scoring backends.

``HttpChat`` speaks the chat-completions shape (role-tagged messages in, one
text choice out). ``HttpScorer`` posts ``{prompt, assertion}`` and reads back
``{logit}``. ``ScriptedChat``, ``EchoChat``, ``SyntheticScorer`` and
``ConstantScorer`` are deterministic stand-ins for tests and offline runs.
"""

from __future__ import annotations

import json
import logging
import os
import threading
import time
from dataclasses import dataclass
from typing import Callable, Mapping, Protocol, Sequence

import httpx

from .causal import NEGATIVE_ASSERTION
from .emotion import DESCRIPTOR_PHRASES

log = logging.getLogger(__name__)

Message = Mapping[str, str]
RETRYABLE_STATUS = frozenset({408, 429, 500, 502, 503, 504})


class ClientError(RuntimeError):
    """Base class for backend failures."""


class TransportError(ClientError):
    """Retries exhausted on a transient failure."""


class PermanentError(ClientError):
    """The backend rejected the request; retrying will not help."""


class PlaylistExhausted(PermanentError):
    def __init__(self, name: str, turn: int) -> None:
        super().__init__(f"scripted client {name!r} has no reply left for turn {turn}")
        self.turn = turn


class ChatClient(Protocol):
    def chat(self, messages: Sequence[Message]) -> str: ...


@dataclass(frozen=True, slots=True)
class ClientConfig:
    endpoint: str
    model: str
    token_env: str | None = None
    timeout: float = 60.0
    max_retries: int = 3
    max_tokens: int = 512
    temperature: float = 1.0
    backoff_base: float = 1.0
    backoff_cap: float = 60.0
    max_in_flight: int = 8
    prompt_template: str | None = None

    def __post_init__(self) -> None:
        if self.timeout <= 0:
            raise ValueError("timeout must be positive")
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")
        if self.max_tokens <= 0:
            raise ValueError("max_tokens must be positive")
        if self.max_in_flight < 1:
            raise ValueError("max_in_flight must be >= 1")

    def token(self) -> str | None:
        return os.environ.get(self.token_env) if self.token_env else None


@dataclass(frozen=True)
class ChatExchange:
    messages: tuple[Message, ...]
    response: str
    latency: float
    attempts: int


def _retry_after(response: httpx.Response) -> float | None:
    value = response.headers.get("retry-after")
    if value is None:
        return None
    try:
        return max(0.0, float(value))
    except ValueError:
        return None


class _HttpBackend:
    """Shared POST-with-retry machinery for chat and scoring endpoints."""

    def __init__(
        self,
        config: ClientConfig,
        transport: httpx.BaseTransport | None = None,
        sleep: Callable[[float], None] = time.sleep,
    ) -> None:
        self.config = config
        self._http = httpx.Client(timeout=config.timeout, transport=transport)
        self._slots = threading.BoundedSemaphore(config.max_in_flight)
        self._sleep = sleep
        self.delays: list[float] = []

    def close(self) -> None:
        self._http.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    def _redact(self, text: str) -> str:
        token = self.config.token()
        return text.replace(token, "***") if token else text

    def _post(self, payload: dict) -> tuple[dict, int]:
        cfg = self.config
        headers = {"Content-Type": "application/json"}
        token = cfg.token()
        if token:
            headers["Authorization"] = f"Bearer {token}"
        delay = 0.0
        last: str = ""
        for attempt in range(1, cfg.max_retries + 2):
            log.debug(self._redact(json.dumps({"event": "request", "attempt": attempt, "body": payload})))
            hint = None
            try:
                with self._slots:
                    resp = self._http.post(cfg.endpoint, json=payload, headers=headers)
            except httpx.TransportError as exc:
                last = f"{type(exc).__name__}: {exc}"
            else:
                if resp.status_code < 400:
                    body = resp.json()
                    log.debug(self._redact(json.dumps({"event": "response", "attempt": attempt, "body": body})))
                    return body, attempt
                last = f"HTTP {resp.status_code}"
                if resp.status_code not in RETRYABLE_STATUS:
                    raise PermanentError(self._redact(f"{cfg.model}: {last}: {resp.text[:200]}"))
                hint = _retry_after(resp)
            if attempt > cfg.max_retries:
                break
            # non-decreasing backoff, never shorter than the server's hint
            delay = max(delay, min(cfg.backoff_cap, cfg.backoff_base * 2 ** (attempt - 1)), hint or 0.0)
            self.delays.append(delay)
            self._sleep(delay)
        raise TransportError(self._redact(f"{cfg.model}: giving up after {cfg.max_retries + 1} attempt(s): {last}"))


class HttpChat(_HttpBackend):
    def chat_exchange(self, messages: Sequence[Message]) -> ChatExchange:
        if not messages:
            raise ValueError("messages must be non-empty")
        payload = {
            "model": self.config.model,
            "messages": [dict(m) for m in messages],
            "max_tokens": self.config.max_tokens,
            "temperature": self.config.temperature,
        }
        start = time.monotonic()
        body, attempts = self._post(payload)
        try:
            text = body["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise PermanentError(f"{self.config.model}: malformed chat response") from exc
        if not text or not str(text).strip():
            raise TransportError(f"{self.config.model}: empty reply")
        return ChatExchange(tuple(messages), str(text), time.monotonic() - start, attempts)

    def chat(self, messages: Sequence[Message]) -> str:
        return self.chat_exchange(messages).response


class HttpScorer(_HttpBackend):
    def score_assertion(self, prompt: str, assertion: str) -> float:
        if not prompt or not assertion:
            raise ValueError("prompt and assertion must be non-empty")
        if self.config.prompt_template:
            prompt = self.config.prompt_template.format(prompt=prompt, assertion=assertion)
        body, _ = self._post({"model": self.config.model, "prompt": prompt, "assertion": assertion})
        try:
            return float(body["logit"])
        except (KeyError, TypeError, ValueError) as exc:
            raise PermanentError(f"{self.config.model}: malformed score response") from exc


class ScriptedChat:
    """Plays back a fixed list of replies, one per call, then fails."""

    def __init__(self, playlist: Sequence[str], name: str = "scripted") -> None:
        if not playlist:
            raise ValueError("playlist must be non-empty")
        self.name = name
        self._lines = list(playlist)
        self._next = 0
        self._lock = threading.Lock()
        self.requests: list[list[dict]] = []

    def chat(self, messages: Sequence[Message]) -> str:
        with self._lock:
            self.requests.append([dict(m) for m in messages])
            turn = self._next + 1
            if self._next >= len(self._lines):
                raise PlaylistExhausted(self.name, turn)
            line = self._lines[self._next]
            self._next += 1
            return line


class EchoChat:
    """Stateless deterministic replies derived from the request.

    The turn number is the count of earlier replies by this role. User-side
    replies mention how many setback notices the simulator has seen, without
    repeating their text.
    """

    USER_LINES = (
        "I still feel weighed down by all of this.",
        "I keep going over it in my head and it does not get easier.",
        "Maybe you are right, but it is hard to believe things can change.",
        "I tried to think about it differently today.",
        "Talking about it helps a little, I think.",
    )
    AGENT_LINES = (
        "That sounds really heavy. What part of it weighs on you most right now?",
        "It makes sense to feel that way. What is one small thing within your control?",
        "Let's slow down and look at this one step at a time.",
        "You have handled hard moments before. What helped then?",
    )
    NOTICE_PREFIX = "[Event]"

    def __init__(self, role: str) -> None:
        if role not in ("user", "agent"):
            raise ValueError("role must be 'user' or 'agent'")
        self.role = role

    def chat(self, messages: Sequence[Message]) -> str:
        own = "assistant"
        turn = 1 + sum(1 for m in messages if m["role"] == own)
        if self.role == "agent":
            return f"{self.AGENT_LINES[(turn - 1) % len(self.AGENT_LINES)]} (turn {turn})"
        notices = sum(1 for m in messages if m["role"] == "system" and m["content"].startswith(self.NOTICE_PREFIX))
        line = self.USER_LINES[(turn - 1) % len(self.USER_LINES)]
        if notices:
            line = f"Something else went wrong and I feel worse again ({notices} setback(s) so far). " + line
        return f"{line} (turn {turn})"


class ConstantScorer:
    def __init__(self, logit: float = 0.0) -> None:
        self.logit = float(logit)

    def score_assertion(self, prompt: str, assertion: str) -> float:
        if not prompt or not assertion:
            raise ValueError("prompt and assertion must be non-empty")
        return self.logit


class SyntheticScorer:
    """Rule-based scorer with a hidden true emotion ``target``.

    The positive assertion scores ``gain * (2v - 1)`` and the negative one the
    opposite, where ``v`` is ``target`` shifted by ``descriptor_shift`` per
    descriptor bucket away from neutral and by ``cue_penalty`` when any
    ``negative_cues`` phrase occurs in the current message.
    """

    def __init__(
        self,
        target: float = 0.8,
        gain: float = 10.0,
        descriptor_shift: float = 0.0,
        negative_cues: Sequence[str] = (),
        cue_penalty: float = 0.0,
    ) -> None:
        self.target = target
        self.gain = gain
        self.descriptor_shift = descriptor_shift
        self.negative_cues = tuple(negative_cues)
        self.cue_penalty = cue_penalty

    def hidden_value(self, prompt: str) -> float:
        v = self.target
        if self.descriptor_shift:
            for bucket, phrase in enumerate(DESCRIPTOR_PHRASES, start=1):
                if f"user felt {phrase}." in prompt:
                    v += self.descriptor_shift * (bucket - 3)
                    break
        if self.negative_cues:
            current = prompt.rsplit("Current user message:", 1)[-1]
            if any(cue in current for cue in self.negative_cues):
                v -= self.cue_penalty
        return min(1.0, max(0.0, v))

    def score_assertion(self, prompt: str, assertion: str) -> float:
        if not prompt or not assertion:
            raise ValueError("prompt and assertion must be non-empty")
        logit = self.gain * (2.0 * self.hidden_value(prompt) - 1.0)
        return -logit if assertion == NEGATIVE_ASSERTION else logit
