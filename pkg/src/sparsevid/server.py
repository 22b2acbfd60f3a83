"""HTTP server exposing a victim over the wire protocol.

POST /v1/classify with JSON ``{"t","w","h","c","data"}`` answers
``{"label","probability"}``. Malformed bodies get 400, wrong tensor dims get
422 with a dims message, anything else about the request gets 404/405. The
server exists so the remote client can be integration-tested end to end.
"""

from __future__ import annotations

import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import numpy as np

from .errors import BindFailure
from .tensors import VideoTensor

__all__ = ["VictimServer", "serve_victim"]


class _ClassifyHandler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"

    def log_message(self, fmt, *args):
        pass

    def _reply(self, status: int, payload: dict):
        body = json.dumps(payload).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def do_POST(self):
        if self.path != "/v1/classify":
            self._reply(404, {"error": "unknown path"})
            return
        try:
            length = int(self.headers.get("Content-Length", "0"))
            raw = self.rfile.read(length)
            body = json.loads(raw)
            dims = tuple(int(body[k]) for k in ("t", "w", "h", "c"))
            data = np.asarray(body["data"], dtype=np.float64)
            if min(dims) < 1 or data.ndim != 1 or data.size != int(np.prod(dims)):
                raise ValueError("data length inconsistent with dims")
            if not np.isfinite(data).all():
                raise ValueError("non-finite values")
        except (ValueError, KeyError, TypeError, json.JSONDecodeError) as exc:
            self._reply(400, {"error": f"malformed request: {exc}"})
            return

        victim = self.server.victim
        if dims != tuple(victim.dims):
            self._reply(422, {"error": f"expected dims {tuple(victim.dims)}, got {dims}"})
            return
        response = victim.classify(VideoTensor._wrap(data.reshape(dims)))
        self.server.request_count += 1
        self._reply(200, {"label": response.label, "probability": response.probability})


class VictimServer(ThreadingHTTPServer):
    daemon_threads = True

    def __init__(self, victim, address):
        self.victim = victim
        self.request_count = 0
        super().__init__(address, _ClassifyHandler)

    @property
    def port(self) -> int:
        return self.server_address[1]

    @property
    def url(self) -> str:
        return f"http://{self.server_address[0]}:{self.port}"


def serve_victim(victim, host: str = "127.0.0.1", port: int = 0,
                 background: bool = True) -> VictimServer:
    """Serve the victim until shut down; ``port=0`` picks a free ephemeral port.

    With ``background=True`` the accept loop runs in a daemon thread and the
    caller is responsible for ``server.shutdown()``.
    """
    try:
        server = VictimServer(victim, (host, port))
    except OSError as exc:
        raise BindFailure(f"cannot bind {host}:{port}: {exc}") from exc
    if background:
        thread = threading.Thread(target=server.serve_forever, name="victim-server", daemon=True)
        thread.start()
    return server
