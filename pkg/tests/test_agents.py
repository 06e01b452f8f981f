import json

import pytest
import requests

from docs2synth import agents
from docs2synth.agents import (
    AgentReply,
    AuthError,
    BudgetExceeded,
    ChatMessage,
    FixtureError,
    ImagePart,
    MalformedResponse,
    ProviderConfig,
    ProviderError,
    ProviderUnreachable,
    TextPart,
    complete,
    complete_json,
    mock_provider_from_fixture,
)


def write_fixture(tmp_path, lines, name="fixture.jsonl"):
    path = tmp_path / name
    path.write_text("\n".join(json.dumps(l) for l in lines) + "\n")
    return path


def user(text):
    return ChatMessage.text("user", text)


@pytest.fixture(autouse=True)
def no_sleep(monkeypatch):
    sleeps = []
    monkeypatch.setattr(agents.time, "sleep", lambda s: sleeps.append(s))
    return sleeps


class FakeTransport:
    """Scripted sequence of (status, payload) or exceptions."""

    def __init__(self, script):
        self.script = list(script)
        self.calls = []

    def __call__(self, url, headers, body, timeout):
        self.calls.append({"url": url, "headers": headers, "body": body})
        step = self.script.pop(0)
        if isinstance(step, Exception):
            raise step
        return step


def ok_payload(text="hello"):
    return (
        200,
        {
            "choices": [{"message": {"role": "assistant", "content": text}}],
            "usage": {"prompt_tokens": 3, "completion_tokens": 2},
        },
    )


def remote_config(max_retries=2):
    return ProviderConfig(
        name="remote",
        kind="openai-compatible",
        base_url="http://llm.internal/v1",
        model="test-model",
        max_retries=max_retries,
    )


class TestMockProvider:
    def test_substring_rule(self, tmp_path):
        path = write_fixture(
            tmp_path,
            [
                {"match": "What is the type of shares", "response": "Ordinary Shares"},
                {"default": "unknown"},
            ],
        )
        config, _ = mock_provider_from_fixture(path)
        reply = complete(config, [user("What is the type of shares listed?")])
        assert reply.text == "Ordinary Shares"

    def test_echo_last_line_via_regex_template(self, tmp_path):
        path = write_fixture(
            tmp_path,
            [
                {"match": r"(?s)([^\n]*)$", "regex": True, "response": r"\1"},
                {"default": "unknown"},
            ],
        )
        config, _ = mock_provider_from_fixture(path)
        reply = complete(config, [user("first line"), user("echo me")])
        assert reply.text == "echo me"

    def test_unmatched_falls_to_default(self, tmp_path):
        path = write_fixture(
            tmp_path, [{"match": "nope", "response": "x"}, {"default": "fallback"}]
        )
        config, _ = mock_provider_from_fixture(path)
        assert complete(config, [user("other")]).text == "fallback"

    def test_deterministic(self, tmp_path):
        path = write_fixture(tmp_path, [{"default": "same"}])
        config, _ = mock_provider_from_fixture(path)
        msgs = [user("q")]
        assert complete(config, msgs).text == complete(config, msgs).text

    def test_rules_evaluated_in_order(self, tmp_path):
        path = write_fixture(
            tmp_path,
            [
                {"match": "alpha", "response": "first"},
                {"match": "alpha beta", "response": "second"},
                {"default": "d"},
            ],
        )
        config, _ = mock_provider_from_fixture(path)
        assert complete(config, [user("alpha beta")]).text == "first"

    def test_missing_fixture(self, tmp_path):
        with pytest.raises(FixtureError, match="not found"):
            mock_provider_from_fixture(tmp_path / "absent.jsonl")

    def test_fixture_without_default(self, tmp_path):
        path = write_fixture(tmp_path, [{"match": "a", "response": "b"}])
        with pytest.raises(FixtureError, match="default"):
            mock_provider_from_fixture(path)

    def test_fixture_invalid_json(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        path.write_text("{not json}\n")
        with pytest.raises(FixtureError, match="invalid JSON"):
            mock_provider_from_fixture(path)


class TestRetryPolicy:
    def test_two_500s_then_success(self, monkeypatch):
        transport = FakeTransport([(500, {}), (500, {}), ok_payload("done")])
        monkeypatch.setattr(agents, "_http_post", transport)
        reply = complete(remote_config(max_retries=2), [user("q")])
        assert reply.text == "done"
        assert len(transport.calls) == 3

    def test_transport_error_retried(self, monkeypatch):
        transport = FakeTransport([requests.ConnectionError("down"), ok_payload()])
        monkeypatch.setattr(agents, "_http_post", transport)
        reply = complete(remote_config(), [user("q")])
        assert reply.text == "hello"
        assert len(transport.calls) == 2

    def test_persistent_500_exhausts_to_unreachable(self, monkeypatch):
        transport = FakeTransport([(500, {})] * 3)
        monkeypatch.setattr(agents, "_http_post", transport)
        with pytest.raises(ProviderUnreachable):
            complete(remote_config(max_retries=2), [user("q")])
        assert len(transport.calls) == 3

    def test_429_exhausts_to_budget_exceeded(self, monkeypatch):
        transport = FakeTransport([(429, {})] * 2)
        monkeypatch.setattr(agents, "_http_post", transport)
        with pytest.raises(BudgetExceeded):
            complete(remote_config(max_retries=1), [user("q")])
        assert len(transport.calls) == 2

    def test_401_raises_auth_error_without_retry(self, monkeypatch, no_sleep):
        transport = FakeTransport([(401, {"error": "bad key"})])
        monkeypatch.setattr(agents, "_http_post", transport)
        with pytest.raises(AuthError):
            complete(remote_config(max_retries=5), [user("q")])
        assert len(transport.calls) == 1
        assert no_sleep == []

    def test_other_4xx_never_retried(self, monkeypatch):
        transport = FakeTransport([(404, {})])
        monkeypatch.setattr(agents, "_http_post", transport)
        with pytest.raises(ProviderError):
            complete(remote_config(max_retries=5), [user("q")])
        assert len(transport.calls) == 1

    def test_backoff_full_jitter_bounds(self, monkeypatch, no_sleep):
        transport = FakeTransport([(500, {})] * 4)
        monkeypatch.setattr(agents, "_http_post", transport)
        with pytest.raises(ProviderUnreachable):
            complete(remote_config(max_retries=3), [user("q")])
        assert len(no_sleep) == 3
        for attempt, slept in enumerate(no_sleep, start=1):
            assert 0 <= slept <= agents.BACKOFF_BASE_S * agents.BACKOFF_FACTOR ** (attempt - 1)

    def test_missing_content_is_malformed(self, monkeypatch):
        transport = FakeTransport([(200, {"choices": []})])
        monkeypatch.setattr(agents, "_http_post", transport)
        with pytest.raises(MalformedResponse):
            complete(remote_config(), [user("q")])

    def test_null_content_becomes_empty_string(self, monkeypatch):
        transport = FakeTransport(
            [(200, {"choices": [{"message": {"content": None}}]})]
        )
        monkeypatch.setattr(agents, "_http_post", transport)
        assert complete(remote_config(), [user("q")]).text == ""


class TestWireShape:
    def test_image_part_becomes_data_uri(self, monkeypatch):
        transport = FakeTransport([ok_payload()])
        monkeypatch.setattr(agents, "_http_post", transport)
        msg = ChatMessage(
            role="user", parts=(TextPart("look"), ImagePart("image/png", "QUJD"))
        )
        complete(remote_config(), [msg])
        body = transport.calls[0]["body"]
        parts = body["messages"][0]["content"]
        assert parts[0] == {"type": "text", "text": "look"}
        assert parts[1]["image_url"]["url"] == "data:image/png;base64,QUJD"

    def test_api_key_header_from_env(self, monkeypatch):
        transport = FakeTransport([ok_payload()])
        monkeypatch.setattr(agents, "_http_post", transport)
        monkeypatch.setenv("TEST_LLM_KEY", "sk-123")
        config = ProviderConfig(
            name="keyed",
            kind="openai-compatible",
            base_url="http://llm/v1",
            api_key_env="TEST_LLM_KEY",
        )
        complete(config, [user("q")])
        assert transport.calls[0]["headers"]["Authorization"] == "Bearer sk-123"

    def test_usage_and_url(self, monkeypatch):
        transport = FakeTransport([ok_payload()])
        monkeypatch.setattr(agents, "_http_post", transport)
        reply = complete(remote_config(), [user("q")])
        assert reply.usage == {"prompt_tokens": 3, "completion_tokens": 2}
        assert transport.calls[0]["url"] == "http://llm.internal/v1/chat/completions"


class TestCompleteJson:
    def test_fenced_json_extracted(self, monkeypatch):
        transport = FakeTransport([ok_payload('```json\n{"relevant": true}\n```')])
        monkeypatch.setattr(agents, "_http_post", transport)
        assert complete_json(remote_config(), [user("verdict?")]) == {"relevant": True}

    def test_reprompt_once_then_parse(self, monkeypatch):
        transport = FakeTransport([ok_payload("yes"), ok_payload('{"relevant": false}')])
        monkeypatch.setattr(agents, "_http_post", transport)
        value = complete_json(remote_config(), [user("verdict?")])
        assert value == {"relevant": False}
        assert len(transport.calls) == 2
        retry_msgs = transport.calls[1]["body"]["messages"]
        assert retry_msgs[-1]["content"][0]["text"].startswith("Return only valid JSON.")
        assert retry_msgs[-2]["role"] == "assistant"

    def test_double_failure_attaches_both_replies(self, monkeypatch):
        transport = FakeTransport([ok_payload("yes"), ok_payload("still no")])
        monkeypatch.setattr(agents, "_http_post", transport)
        with pytest.raises(MalformedResponse) as exc_info:
            complete_json(remote_config(), [user("verdict?")])
        assert exc_info.value.replies == ["yes", "still no"]

    def test_json_embedded_in_prose(self, monkeypatch):
        transport = FakeTransport([ok_payload('Sure! {"answer_valid": true} Hope that helps.')])
        monkeypatch.setattr(agents, "_http_post", transport)
        assert complete_json(remote_config(), [user("q")]) == {"answer_valid": True}

    def test_mock_provider_reprompt_flow(self, tmp_path):
        path = write_fixture(
            tmp_path,
            [
                {"match": "Return only valid JSON", "response": '{"ok": 1}'},
                {"match": "verdict", "response": "hmm let me think"},
                {"default": "?"},
            ],
        )
        config, _ = mock_provider_from_fixture(path)
        assert complete_json(config, [user("verdict please")]) == {"ok": 1}


class TestRateLimiter:
    def test_no_limit_never_sleeps(self, monkeypatch):
        limiter = agents._RateLimiter(None)
        sleeps = []
        monkeypatch.setattr(agents.time, "sleep", lambda s: sleeps.append(s))
        for _ in range(5):
            limiter.acquire()
        assert sleeps == []

    def test_spacing_enforced(self, monkeypatch):
        limiter = agents._RateLimiter(60)  # one request per second
        clock = {"now": 100.0}
        sleeps = []
        monkeypatch.setattr(agents.time, "monotonic", lambda: clock["now"])
        monkeypatch.setattr(agents.time, "sleep", lambda s: sleeps.append(s))
        limiter.acquire()  # first request goes straight through
        limiter.acquire()  # second must wait out the full interval
        limiter.acquire()
        assert sleeps == [pytest.approx(1.0), pytest.approx(2.0)]

    def test_no_wait_after_interval_elapsed(self, monkeypatch):
        limiter = agents._RateLimiter(60)
        clock = {"now": 100.0}
        sleeps = []
        monkeypatch.setattr(agents.time, "monotonic", lambda: clock["now"])
        monkeypatch.setattr(agents.time, "sleep", lambda s: sleeps.append(s))
        limiter.acquire()
        clock["now"] += 5.0
        limiter.acquire()
        assert sleeps == []


class TestMessageValidation:
    def test_empty_messages_rejected(self, tmp_path):
        path = write_fixture(tmp_path, [{"default": "d"}])
        config, _ = mock_provider_from_fixture(path)
        with pytest.raises(ValueError):
            complete(config, [])

    def test_bad_role_rejected(self):
        with pytest.raises(ValueError, match="bad role"):
            ChatMessage.text("robot", "hi")

    def test_message_needs_parts(self):
        with pytest.raises(ValueError, match="at least one part"):
            ChatMessage(role="user", parts=())

    def test_mock_requires_fixture_path(self):
        with pytest.raises(ValueError, match="fixture path"):
            ProviderConfig(name="m", kind="mock", base_url="")

    def test_remote_requires_base_url(self):
        with pytest.raises(ValueError, match="base_url"):
            ProviderConfig(name="r", kind="openai-compatible", base_url="")
