"""Scripted stand-in for an OpenAI-compatible chat endpoint.

Responses are a pure function of the request payload: the parent program is
read out of the user prompt's fenced code block and one character is
toggled at a position derived from the request hash.  Diff-style system
prompts get a SEARCH/REPLACE response, rewrite-style prompts a full-code
response.  Useful for hermetic integration tests and byte-identical
replays.
"""

from __future__ import annotations

import hashlib
import json
import re
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

__all__ = ["scripted_completion", "start_mock_server", "MockLlmTransport"]

_FENCE_RE = re.compile(r"```[^\n]*\n(.*?)```", re.DOTALL)


def _mutate_source(source: str, salt: bytes) -> str:
    digest = hashlib.blake2b(source.encode("utf-8") + salt, digest_size=8).digest()
    pos = int.from_bytes(digest, "little") % max(1, len(source))
    chars = list(source)
    c = chars[pos]
    if c == "0":
        chars[pos] = "1"
    elif c == "1":
        chars[pos] = "0"
    else:
        chars[pos] = chr(((ord(c) - 32 + 1) % 95) + 32)
    return "".join(chars)


def scripted_completion(payload: dict) -> str:
    """Deterministic completion for a chat-completions request body."""
    messages = {m["role"]: m["content"] for m in payload.get("messages", [])}
    system = messages.get("system", "")
    user = messages.get("user", "")
    fence = _FENCE_RE.search(user)
    source = fence.group(1).rstrip("\n") if fence else "0"
    salt = hashlib.blake2b(
        json.dumps(payload, sort_keys=True).encode("utf-8"), digest_size=8
    ).digest()
    mutated = _mutate_source(source, salt)
    if "SEARCH/REPLACE" in system:
        return (
            "<NAME>\nscripted_edit\n</NAME>\n\n"
            "<DESCRIPTION>\nDeterministic single-character toggle.\n</DESCRIPTION>\n\n"
            "<DIFF>\n"
            "<<<<<<< SEARCH\n"
            f"{source}\n"
            "=======\n"
            f"{mutated}\n"
            ">>>>>>> REPLACE\n"
            "</DIFF>"
        )
    return (
        "<NAME>\nscripted_rewrite\n</NAME>\n\n"
        "<DESCRIPTION>\nDeterministic single-character toggle.\n</DESCRIPTION>\n\n"
        "<CODE>\n```\n"
        f"{mutated}\n"
        "```\n</CODE>"
    )


class MockLlmTransport:
    """In-process transport with the same contract as the HTTP transport;
    avoids sockets entirely for unit tests."""

    def __call__(self, url: str, payload: dict, headers: dict, timeout: float):
        content = scripted_completion(payload)
        return 200, {"choices": [{"message": {"content": content}}]}


class _Handler(BaseHTTPRequestHandler):
    def do_POST(self):
        length = int(self.headers.get("Content-Length", 0))
        payload = json.loads(self.rfile.read(length))
        content = scripted_completion(payload)
        body = json.dumps({"choices": [{"message": {"content": content}}]}).encode("utf-8")
        self.send_response(200)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def log_message(self, fmt, *args):
        pass


def start_mock_server(port: int = 0) -> tuple[ThreadingHTTPServer, str]:
    """Start the scripted server on localhost; returns (server, base_url)."""
    server = ThreadingHTTPServer(("127.0.0.1", port), _Handler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    host, bound_port = server.server_address
    return server, f"http://{host}:{bound_port}"
