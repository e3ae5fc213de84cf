"""In-process chat-completions stub server for client and operator tests."""
from __future__ import annotations

import json
import re
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

FENCE_RE = re.compile(r"```[^\n]*\n(.*?)```", re.DOTALL)


def completion_body(text: str) -> dict:
    return {
        "choices": [{"message": {"role": "assistant", "content": text}}],
        "usage": {"prompt_tokens": 1, "completion_tokens": 1},
    }


def echo_first_fence(request: dict):
    """Return the first fenced block of the user message, re-fenced."""
    user = request["messages"][-1]["content"]
    match = FENCE_RE.search(user)
    payload = match.group(1) if match else user
    return 200, completion_body(f"Sure, here is my proposal:\n```yaml\n{payload}```")


def echo_second_fence(request: dict):
    user = request["messages"][-1]["content"]
    fences = FENCE_RE.findall(user)
    payload = fences[1] if len(fences) > 1 else fences[0] if fences else user
    return 200, completion_body(f"```yaml\n{payload}```")


def fixed_text(text: str):
    def responder(request: dict):
        return 200, completion_body(text)

    return responder


def status_only(code: int):
    def responder(request: dict):
        return code, {"error": {"message": f"stubbed {code}"}}

    return responder


class StubServer:
    """Scriptable chat-completions endpoint.

    ``script`` is a list of responder callables consumed one per request; when
    exhausted, the last entry keeps answering.  Requests (parsed JSON bodies)
    and auth headers are recorded for assertions.
    """

    def __init__(self, script=None):
        self.script = list(script) if script else [echo_first_fence]
        self.requests: list[dict] = []
        self.auth_headers: list[str | None] = []
        self._lock = threading.Lock()
        stub = self

        class Handler(BaseHTTPRequestHandler):
            def do_POST(self):
                length = int(self.headers.get("Content-Length", 0))
                body = json.loads(self.rfile.read(length) or b"{}")
                with stub._lock:
                    stub.requests.append(body)
                    stub.auth_headers.append(self.headers.get("Authorization"))
                    responder = stub.script[min(len(stub.requests) - 1, len(stub.script) - 1)]
                status, payload = responder(body)
                data = payload.encode() if isinstance(payload, str) else json.dumps(payload).encode()
                self.send_response(status)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(data)))
                self.end_headers()
                self.wfile.write(data)

            def log_message(self, *args):
                pass

        self._server = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
        self._thread = threading.Thread(target=self._server.serve_forever, daemon=True)

    @property
    def endpoint(self) -> str:
        host, port = self._server.server_address
        return f"http://{host}:{port}/v1"

    def __enter__(self):
        self._thread.start()
        return self

    def __exit__(self, *exc):
        self._server.shutdown()
        self._server.server_close()
        return False
