"""In-process stub servers speaking the detector and TTS wire protocols.

Both bind an ephemeral port on localhost and record every request body they
receive, so tests and demos can exercise the real HTTP paths without external
services.
"""

from __future__ import annotations

import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

MS_PER_WORD = 150


class _StubHandler(BaseHTTPRequestHandler):
    def log_message(self, format: str, *args: object) -> None:
        pass

    def do_POST(self) -> None:
        length = int(self.headers.get("Content-Length", 0))
        raw = self.rfile.read(length)
        status, payload = self.server.owner.handle(self.path, raw)
        body = json.dumps(payload).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)


class _StubServer:
    def __init__(self) -> None:
        self._server = ThreadingHTTPServer(("127.0.0.1", 0), _StubHandler)
        self._server.owner = self
        self._thread = threading.Thread(target=self._server.serve_forever, daemon=True)
        self._lock = threading.Lock()
        self.requests: list[dict] = []

    @property
    def url(self) -> str:
        host, port = self._server.server_address
        return f"http://{host}:{port}"

    def start(self) -> "_StubServer":
        self._thread.start()
        return self

    def stop(self) -> None:
        self._server.shutdown()
        self._server.server_close()

    def __enter__(self) -> "_StubServer":
        return self.start()

    def __exit__(self, *exc: object) -> None:
        self.stop()

    def _record(self, body: dict) -> None:
        with self._lock:
            self.requests.append(body)

    def handle(self, path: str, raw: bytes) -> tuple[int, object]:
        raise NotImplementedError


class StubTtsServer(_StubServer):
    """Answers ``POST /speak`` with a duration proportional to word count."""

    def __init__(self, ms_per_word: int = MS_PER_WORD) -> None:
        super().__init__()
        self.ms_per_word = ms_per_word

    def handle(self, path: str, raw: bytes) -> tuple[int, object]:
        if path != "/speak":
            return 404, {"error": "unknown path"}
        body = json.loads(raw.decode("utf-8"))
        self._record(body)
        words = len(body.get("text", "").split())
        return 200, {"duration_ms": max(1, words) * self.ms_per_word}


class StubDetectorServer(_StubServer):
    """Answers ``POST /detect`` from a response table keyed by frame id.

    ``responses`` maps frame_id to a list of detection dicts; unknown frames
    get an empty list. Set ``canned`` to force one fixed payload and status
    for malformed-response tests.
    """

    def __init__(
        self,
        responses: dict[int, list[dict]] | None = None,
        canned: tuple[int, object] | None = None,
    ) -> None:
        super().__init__()
        self.responses = responses or {}
        self.canned = canned

    def handle(self, path: str, raw: bytes) -> tuple[int, object]:
        if path != "/detect":
            return 404, {"error": "unknown path"}
        body = json.loads(raw.decode("utf-8"))
        self._record(body)
        if self.canned is not None:
            return self.canned
        return 200, {"detections": self.responses.get(body.get("frame_id"), [])}
