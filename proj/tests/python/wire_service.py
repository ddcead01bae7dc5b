"""Minimal scoring service speaking the /score and /health protocol, for tests."""

import json
import re
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

_TOKEN = re.compile(rb"[A-Za-z0-9\x80-\xff]+")


def tokens(text):
    return {t.lower() for t in _TOKEN.findall(text.encode("utf-8"))}


def lexical(query, doc):
    q = tokens(query)
    return len(q & tokens(doc)) / len(q) if q else 0.0


class _Handler(BaseHTTPRequestHandler):
    def log_message(self, *args):
        pass

    def _reply(self, code, body, ctype="application/json"):
        data = body.encode("utf-8")
        self.send_response(code)
        self.send_header("Content-Type", ctype)
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    def do_GET(self):
        if self.path == "/health":
            self._reply(200, "ok", "text/plain")
        else:
            self._reply(404, "not found", "text/plain")

    def do_POST(self):
        srv = self.server
        length = int(self.headers.get("Content-Length", 0))
        raw = self.rfile.read(length)
        with srv.lock:
            srv.batches.append(raw)
            fail = srv.fail_next > 0
            if fail:
                srv.fail_next -= 1
        if self.path != "/score":
            return self._reply(404, "not found", "text/plain")
        if fail:
            return self._reply(500, json.dumps({"error": "backend failure"}))
        try:
            pairs = json.loads(raw)["pairs"]
            scores = [lexical(p["query"], p["doc"]) for p in pairs]
        except (ValueError, KeyError, TypeError) as exc:
            return self._reply(400, json.dumps({"error": str(exc)}))
        if srv.short:
            scores = scores[:-1]
        self._reply(200, json.dumps({"scores": scores}))


class Service:
    def __init__(self):
        self.httpd = ThreadingHTTPServer(("127.0.0.1", 0), _Handler)
        self.httpd.lock = threading.Lock()
        self.httpd.batches = []
        self.httpd.fail_next = 0
        self.httpd.short = False
        self.thread = threading.Thread(target=self.httpd.serve_forever, daemon=True)

    @property
    def endpoint(self):
        return "http://127.0.0.1:%d" % self.httpd.server_address[1]

    def __enter__(self):
        self.thread.start()
        return self

    def __exit__(self, *exc):
        self.httpd.shutdown()
        self.httpd.server_close()
