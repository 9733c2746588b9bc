"""HTTP layers: the grading API consumed by the grading UI, and the stub
backend server that exposes the in-process stubs over the wire protocol.

Both are stdlib ThreadingHTTPServer handlers speaking JSON; errors use the
uniform envelope {"error": {"code", "message"}}.
"""

from __future__ import annotations

import json
import re
import secrets
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from urllib.parse import parse_qs, urlparse

from .backends import DemoGenerator, EmbedRequest, GenerateRequest, StubEmbedder
from .model import article_from_obj
from .sessions import GradingSession, SessionError


class _JsonHandler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"

    def log_message(self, *args):  # quiet by default; tests capture nothing
        pass

    def _send(self, status: int, obj: dict):
        body = json.dumps(obj, ensure_ascii=False).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json; charset=utf-8")
        self.send_header("Content-Length", str(len(body)))
        self.send_header("Access-Control-Allow-Origin", "*")
        self.end_headers()
        self.wfile.write(body)

    def _error(self, status: int, code: str, message: str):
        self._send(status, {"error": {"code": code, "message": message}})

    def _read_json(self):
        length = int(self.headers.get("Content-Length", 0))
        raw = self.rfile.read(length) if length else b""
        if not raw:
            return {}
        return json.loads(raw.decode("utf-8"))


class GradingApi:
    """In-memory session registry behind the grading endpoints."""

    def __init__(self):
        self.sessions: dict[str, GradingSession] = {}
        self.lock = threading.Lock()

    def create_session(self, body: dict) -> str:
        raw_items = body.get("items")
        if not isinstance(raw_items, list) or not raw_items:
            raise SessionError("bad_request", "body must carry a non-empty 'items' list")
        entries = []
        for entry in raw_items:
            try:
                article = article_from_obj(entry["article"])
            except Exception as e:
                raise SessionError("bad_article", f"invalid article payload: {e}") from e
            entries.append((entry["method"], article, entry.get("image_uris", {})))
        raters = body.get("raters", 1)
        seed = body.get("seed", 0)
        session_id = "s-" + secrets.token_hex(4)
        session = GradingSession.create(session_id, entries, raters, seed)
        with self.lock:
            self.sessions[session_id] = session
        return session_id

    def get(self, session_id: str) -> GradingSession:
        session = self.sessions.get(session_id)
        if session is None:
            raise SessionError("unknown_session", f"no session {session_id}", status=404)
        return session


_SESSION_PATH = re.compile(r"^/api/sessions/([^/]+)/(next|scores|picks|close|export)$")


def make_grading_handler(api: GradingApi):
    class Handler(_JsonHandler):
        def do_POST(self):
            path = urlparse(self.path).path
            try:
                if path == "/api/sessions":
                    session_id = api.create_session(self._read_json())
                    return self._send(200, {"session": session_id})
                match = _SESSION_PATH.match(path)
                if not match:
                    return self._error(404, "not_found", path)
                session = api.get(match.group(1))
                action = match.group(2)
                body = self._read_json()
                if action == "scores":
                    session.submit_score(body.get("rater"), body.get("item"), body.get("dims"))
                    return self._send(200, {"ok": True})
                if action == "picks":
                    session.submit_pick(body.get("rater"), body.get("slot"), body.get("chosen_id"))
                    return self._send(200, {"ok": True})
                if action == "close":
                    session.close()
                    return self._send(200, {"ok": True, "closed": True})
                return self._error(405, "method_not_allowed", f"POST {path}")
            except SessionError as e:
                return self._error(e.status, e.code, str(e))
            except (json.JSONDecodeError, KeyError, TypeError) as e:
                return self._error(400, "bad_request", str(e))

        def do_GET(self):
            parsed = urlparse(self.path)
            try:
                match = _SESSION_PATH.match(parsed.path)
                if not match:
                    return self._error(404, "not_found", parsed.path)
                session = api.get(match.group(1))
                action = match.group(2)
                if action == "next":
                    query = parse_qs(parsed.query)
                    rater = query.get("rater", [""])[0]
                    if not rater.isdigit():
                        raise SessionError("unknown_rater", "rater query parameter must be an integer")
                    return self._send(200, session.next_for(int(rater)))
                if action == "export":
                    return self._send(200, session.export())
                return self._error(405, "method_not_allowed", f"GET {parsed.path}")
            except SessionError as e:
                return self._error(e.status, e.code, str(e))

    return Handler


def make_stub_backend_handler(dimension: int, salt: int = 0):
    """Wire-protocol server backed by DemoGenerator and StubEmbedder."""
    generator = DemoGenerator(salt=salt)
    embedder = StubEmbedder(dimension, salt=salt)

    class Handler(_JsonHandler):
        def do_POST(self):
            path = urlparse(self.path).path
            try:
                body = self._read_json()
                if path == "/v1/generate":
                    request = GenerateRequest(
                        prompt=body.get("prompt", ""),
                        image_refs=tuple(body.get("image_refs") or ()),
                        max_tokens=body.get("max_tokens") or 1024,
                        temperature=body.get("temperature") or 0.0,
                        seed=body.get("seed"),
                    )
                    if not request.prompt:
                        return self._error(400, "empty_prompt", "prompt must be non-empty")
                    return self._send(200, {"text": generator.generate(request)})
                if path == "/v1/embed":
                    payload = body.get("payload", "")
                    if not payload:
                        return self._error(400, "empty_payload", "payload must be non-empty")
                    vector = embedder.embed(EmbedRequest(kind=body.get("kind", "text"), payload=payload))
                    return self._send(200, {"dim": dimension, "vector": [float(x) for x in vector]})
                return self._error(404, "not_found", path)
            except json.JSONDecodeError as e:
                return self._error(400, "bad_request", str(e))

    return Handler


def serve(handler_class, port: int, host: str = "127.0.0.1") -> ThreadingHTTPServer:
    server = ThreadingHTTPServer((host, port), handler_class)
    return server


def serve_in_thread(handler_class, port: int = 0, host: str = "127.0.0.1"):
    """Start a server on a background thread; returns (server, base_url)."""
    server = serve(handler_class, port, host)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    return server, f"http://{host}:{server.server_address[1]}"
