import pytest

from archevo.llm import (
    AuthError,
    ChatClient,
    CompletionRequest,
    MalformedResponseError,
    RateLimitedError,
    RetryPolicy,
)
from llm_stub import StubServer, completion_body, fixed_text, status_only


def _request():
    return CompletionRequest(
        model="stub",
        messages=({"role": "user", "content": "hello"},),
        temperature=0.0,
        max_tokens=64,
    )


def _client(server, **kwargs):
    sleeps = []
    client = ChatClient(endpoint=server.endpoint, sleep=sleeps.append, **kwargs)
    return client, sleeps


def test_fenced_body_passes_through_verbatim():
    text = "Here you go:\n```yaml\nnc: 80\n```"
    with StubServer([fixed_text(text)]) as server:
        client, _ = _client(server)
        completion = client.complete(_request())
    assert completion.text == text
    assert completion.attempts == 1
    assert completion.usage["prompt_tokens"] == 1


def test_retry_429_then_success():
    with StubServer([status_only(429), status_only(429), fixed_text("ok")]) as server:
        client, sleeps = _client(server)
        completion = client.complete(_request(), RetryPolicy(max_attempts=3, base_delay=0.25))
        assert completion.text == "ok"
        assert completion.attempts == 3
        assert len(server.requests) == 3
    assert sleeps == [0.25, 0.5]  # non-decreasing backoff
    assert sleeps == sorted(sleeps)


def test_auth_error_no_retry():
    with StubServer([status_only(401)]) as server:
        client, sleeps = _client(server)
        with pytest.raises(AuthError):
            client.complete(_request(), RetryPolicy(max_attempts=5))
        assert len(server.requests) == 1
    assert sleeps == []


def test_exhausted_retries_surface_last_error():
    with StubServer([status_only(429)]) as server:
        client, _ = _client(server)
        with pytest.raises(RateLimitedError):
            client.complete(_request(), RetryPolicy(max_attempts=3, base_delay=0.01))
        assert len(server.requests) == 3  # request count == max_attempts


def test_server_error_retried_then_surfaced():
    with StubServer([status_only(500), status_only(503)]) as server:
        client, _ = _client(server)
        with pytest.raises(Exception) as err:
            client.complete(_request(), RetryPolicy(max_attempts=2, base_delay=0.01))
        assert "server error" in str(err.value)
        assert len(server.requests) == 2


def test_malformed_response():
    def bad_shape(request):
        return 200, {"choices": []}

    with StubServer([bad_shape]) as server:
        client, _ = _client(server)
        with pytest.raises(MalformedResponseError):
            client.complete(_request())


def test_api_key_header_sent():
    with StubServer([fixed_text("ok")]) as server:
        client, _ = _client(server, api_key="sekrit")
        client.complete(_request())
        assert server.auth_headers[0] == "Bearer sekrit"


def test_api_key_from_env(monkeypatch):
    monkeypatch.setenv("ARCHEVO_API_KEY", "env-key")
    with StubServer([fixed_text("ok")]) as server:
        client, _ = _client(server)
        client.complete(_request())
        assert server.auth_headers[0] == "Bearer env-key"


def test_request_payload_shape():
    with StubServer([fixed_text("ok")]) as server:
        client, _ = _client(server)
        client.complete(_request())
        payload = server.requests[0]
    assert payload["model"] == "stub"
    assert payload["messages"] == [{"role": "user", "content": "hello"}]
    assert payload["temperature"] == 0.0
    assert payload["max_tokens"] == 64


def test_request_validation():
    with pytest.raises(ValueError):
        CompletionRequest(model="m", messages=())
    with pytest.raises(ValueError):
        CompletionRequest(model="m", messages=({"role": "assistant", "content": "x"},))
    with pytest.raises(ValueError):
        RetryPolicy(max_attempts=0)


def test_completion_body_helper_roundtrip():
    body = completion_body("xyz")
    assert body["choices"][0]["message"]["content"] == "xyz"
