import json
import logging

import httpx
import pytest

from trajeval.causal import NEGATIVE_ASSERTION, POSITIVE_ASSERTION
from trajeval.clients import (
    ClientConfig,
    ConstantScorer,
    EchoChat,
    HttpChat,
    HttpScorer,
    PermanentError,
    PlaylistExhausted,
    ScriptedChat,
    SyntheticScorer,
    TransportError,
)

TOKEN = "sk-test-7f3a9c1e55d2"
MSGS = [{"role": "user", "content": "hi"}]


def chat_reply(text):
    return httpx.Response(200, json={"choices": [{"message": {"role": "assistant", "content": text}}]})


class Backend:
    """Mock transport that replays queued responses and records requests."""

    def __init__(self, *responses):
        self.queue = list(responses)
        self.requests = []

    def __call__(self, request):
        self.requests.append(request)
        item = self.queue.pop(0)
        if isinstance(item, Exception):
            raise item
        return item

    def transport(self):
        return httpx.MockTransport(self)


def config(**kw):
    base = dict(endpoint="https://example.test/v1/chat/completions", model="m", token_env="TRAJEVAL_TEST_TOKEN",
                backoff_base=0.5, max_retries=3)
    base.update(kw)
    return ClientConfig(**base)


@pytest.fixture(autouse=True)
def token(monkeypatch):
    monkeypatch.setenv("TRAJEVAL_TEST_TOKEN", TOKEN)


def make_chat(backend, sleeps=None, **kw):
    return HttpChat(config(**kw), transport=backend.transport(), sleep=(sleeps.append if sleeps is not None else lambda s: None))


class TestHttpChat:
    def test_success_and_request_shape(self):
        backend = Backend(chat_reply("hello"))
        chat = make_chat(backend)
        assert chat.chat(MSGS) == "hello"
        req = backend.requests[0]
        body = json.loads(req.content)
        assert body == {"model": "m", "messages": MSGS, "max_tokens": 512, "temperature": 1.0}
        assert req.headers["authorization"] == f"Bearer {TOKEN}"

    def test_retry_then_success(self):
        sleeps = []
        backend = Backend(httpx.Response(503), httpx.ConnectError("boom"), chat_reply("ok"))
        ex = make_chat(backend, sleeps).chat_exchange(MSGS)
        assert ex.response == "ok" and ex.attempts == 3
        assert sleeps == [0.5, 1.0]

    def test_no_retries(self):
        backend = Backend(httpx.Response(500))
        with pytest.raises(TransportError):
            make_chat(backend, max_retries=0).chat(MSGS)
        assert len(backend.requests) == 1

    def test_exhausted(self):
        sleeps = []
        backend = Backend(*[httpx.Response(502)] * 4)
        with pytest.raises(TransportError):
            make_chat(backend, sleeps).chat(MSGS)
        assert len(backend.requests) == 4
        assert sleeps == sorted(sleeps) and len(sleeps) == 3

    def test_client_error_not_retried(self):
        backend = Backend(httpx.Response(400, text="bad request"), chat_reply("never"))
        with pytest.raises(PermanentError):
            make_chat(backend).chat(MSGS)
        assert len(backend.requests) == 1

    def test_rate_limit_honours_hint(self):
        sleeps = []
        backend = Backend(
            httpx.Response(429, headers={"retry-after": "7"}),
            httpx.Response(429, headers={"retry-after": "2"}),
            chat_reply("ok"),
        )
        assert make_chat(backend, sleeps).chat(MSGS) == "ok"
        assert sleeps == [7.0, 7.0]

    def test_empty_messages(self):
        with pytest.raises(ValueError):
            make_chat(Backend()).chat([])

    def test_token_never_leaks(self, caplog):
        backend = Backend(httpx.Response(401, text=f"invalid key {TOKEN}"))
        caplog.set_level(logging.DEBUG, logger="trajeval")
        with pytest.raises(PermanentError) as info:
            make_chat(backend).chat([{"role": "user", "content": f"echo {TOKEN}"}])
        assert TOKEN not in str(info.value)
        assert TOKEN not in caplog.text
        assert "***" in caplog.text

    def test_config_validation(self):
        with pytest.raises(ValueError):
            config(timeout=0)
        with pytest.raises(ValueError):
            config(max_retries=-1)
        with pytest.raises(ValueError):
            config(max_tokens=0)


class TestHttpScorer:
    def test_wire_format(self):
        backend = Backend(httpx.Response(200, json={"logit": 1.25}))
        scorer = HttpScorer(config(endpoint="https://example.test/score"), transport=backend.transport())
        assert scorer.score_assertion("prompt", "claim") == 1.25
        body = json.loads(backend.requests[0].content)
        assert body["prompt"] == "prompt" and body["assertion"] == "claim"

    def test_template(self):
        backend = Backend(httpx.Response(200, json={"logit": 0}))
        scorer = HttpScorer(config(prompt_template="<s>{prompt}</s>"), transport=backend.transport())
        scorer.score_assertion("p", "c")
        assert json.loads(backend.requests[0].content)["prompt"] == "<s>p</s>"

    def test_empty_assertion(self):
        with pytest.raises(ValueError):
            HttpScorer(config()).score_assertion("p", "")

    def test_malformed(self):
        backend = Backend(httpx.Response(200, json={"score": 1}))
        with pytest.raises(PermanentError):
            HttpScorer(config(), transport=backend.transport()).score_assertion("p", "c")


class TestScripted:
    def test_playback(self):
        c = ScriptedChat(["hello", "again"])
        assert c.chat(MSGS) == "hello"
        assert c.chat(MSGS) == "again"

    def test_exhaustion_names_turn(self):
        c = ScriptedChat(["one"], name="agent")
        c.chat(MSGS)
        with pytest.raises(PlaylistExhausted, match="turn 2"):
            c.chat(MSGS)

    def test_empty_playlist(self):
        with pytest.raises(ValueError):
            ScriptedChat([])


class TestEcho:
    def test_turn_counting(self):
        agent = EchoChat("agent")
        ctx = [{"role": "system", "content": "s"}, {"role": "user", "content": "q1"},
               {"role": "assistant", "content": "a1"}, {"role": "user", "content": "q2"}]
        assert agent.chat(ctx).endswith("(turn 2)")

    def test_user_mentions_setbacks_without_content(self):
        user = EchoChat("user")
        ctx = [{"role": "system", "content": "persona"}, {"role": "assistant", "content": "q1"},
               {"role": "user", "content": "a1"}, {"role": "system", "content": "[Event] secret event text"}]
        reply = user.chat(ctx)
        assert "1 setback" in reply and "secret" not in reply


class TestSyntheticScorer:
    def test_rule(self):
        s = SyntheticScorer(0.8)
        assert s.score_assertion("p", POSITIVE_ASSERTION) == pytest.approx(6.0, abs=1e-12)
        assert s.score_assertion("p", NEGATIVE_ASSERTION) == pytest.approx(-6.0, abs=1e-12)

    def test_deterministic(self):
        s = SyntheticScorer(0.3, descriptor_shift=0.1)
        p = "In the previous turn the user felt a very positive emotion."
        assert s.score_assertion(p, POSITIVE_ASSERTION) == s.score_assertion(p, POSITIVE_ASSERTION)

    def test_descriptor_shift(self):
        s = SyntheticScorer(0.5, descriptor_shift=0.1)
        assert s.hidden_value("the user felt a very negative emotion.") == pytest.approx(0.3)
        assert s.hidden_value("the user felt a neutral emotion.") == 0.5
        assert s.hidden_value("the user felt a very positive emotion.") == pytest.approx(0.7)

    def test_cue_only_in_current_message(self):
        s = SyntheticScorer(0.5, negative_cues=["worse"], cue_penalty=0.2)
        assert s.hidden_value("User: worse\n\nCurrent user message:\nfine") == 0.5
        assert s.hidden_value("Current user message:\nmuch worse") == pytest.approx(0.3)

    def test_constant(self):
        assert ConstantScorer(1.5).score_assertion("p", "c") == 1.5
        with pytest.raises(ValueError):
            ConstantScorer().score_assertion("p", "")
