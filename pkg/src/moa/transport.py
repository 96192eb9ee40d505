"""HTTP plumbing shared by the registry and provider hosts and their clients."""

import logging
import threading
import urllib.error
import urllib.request
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

from . import xmlio
from .errors import MoaError, TransportError

logger = logging.getLogger(__name__)

XML_TYPE = "application/xml; charset=utf-8"
MAX_BODY = 16 * 1024 * 1024


class Handler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"
    server_version = "moa/0.1"

    def log_message(self, fmt, *args):
        logger.debug("%s %s", self.address_string(), fmt % args)

    def read_body(self) -> bytes:
        length = int(self.headers.get("Content-Length") or 0)
        if length > MAX_BODY:
            raise ValueError("body too large")
        return self.rfile.read(length) if length else b""

    def reply(self, status: int, body: str = "", content_type: str = XML_TYPE):
        data = body.encode("utf-8")
        self.send_response(status)
        if data:
            self.send_header("Content-Type", content_type)
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        if data:
            self.wfile.write(data)

    def reply_error(self, status: int, code: str, message: str = ""):
        body = xmlio.write(xmlio.element("moa:Error", {"code": code, "message": message}))
        self.reply(status, body)


class Server(ThreadingHTTPServer):
    daemon_threads = True
    allow_reuse_address = True

    @property
    def url(self) -> str:
        host, port = self.server_address[:2]
        return f"http://{host}:{port}"

    def start_background(self) -> threading.Thread:
        t = threading.Thread(target=self.serve_forever, args=(0.05,), name=f"moa-{self.url}", daemon=True)
        t.start()
        return t

    def stop(self):
        self.shutdown()
        self.server_close()


def request(method: str, url: str, body: str | None = None, timeout: float = 30.0):
    """Return ``(status, text)``; any HTTP status is a value, only I/O failures raise."""
    data = body.encode("utf-8") if body is not None else None
    req = urllib.request.Request(url, data=data, method=method)
    if data is not None:
        req.add_header("Content-Type", XML_TYPE)
    try:
        with urllib.request.urlopen(req, timeout=timeout) as resp:
            return resp.status, resp.read().decode("utf-8")
    except urllib.error.HTTPError as exc:
        return exc.code, exc.read().decode("utf-8", "replace")
    except (urllib.error.URLError, OSError) as exc:
        raise TransportError(f"{method} {url}: {getattr(exc, 'reason', exc)}") from None


def error_from_body(text: str):
    """Decode a ``<moa:Error>`` body into ``(code, message)``."""
    try:
        root = xmlio.parse(text)
        return root.get("code", "Error"), root.get("message", "")
    except MoaError:
        return "Error", text[:200]
