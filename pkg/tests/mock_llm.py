"""A tiny chat-completions server for tests.

``MockLlm(behaviours)`` serves one behaviour per request; the last one
repeats. A behaviour is ``("reply", text)``, ``("status", code)`` or
``("hang", seconds)``. Received JSON bodies and headers are recorded.
"""

import json
import threading
import time
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer


class MockLlm:
    def __init__(self, behaviours):
        self.behaviours = list(behaviours)
        self.requests = []
        self.headers = []
        mock = self

        class Handler(BaseHTTPRequestHandler):
            def log_message(self, *args):
                pass

            def do_POST(self):
                n = int(self.headers.get("Content-Length", 0))
                mock.requests.append(json.loads(self.rfile.read(n)))
                mock.headers.append(dict(self.headers))
                i = min(len(mock.requests) - 1, len(mock.behaviours) - 1)
                kind, arg = mock.behaviours[i]
                if kind == "hang":
                    time.sleep(arg)
                    kind, arg = "status", 504
                if kind == "reply":
                    body = json.dumps({"choices": [{"message": {"role": "assistant", "content": arg}}]}).encode()
                    self.send_response(200)
                else:
                    body = b'{"error": "mock"}'
                    self.send_response(arg)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(body)))
                self.end_headers()
                try:
                    self.wfile.write(body)
                except (BrokenPipeError, ConnectionResetError):
                    pass

        self.server = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
        self.server.daemon_threads = True
        self.thread = threading.Thread(target=self.server.serve_forever, daemon=True)

    @property
    def url(self):
        return f"http://127.0.0.1:{self.server.server_address[1]}/v1"

    def __enter__(self):
        self.thread.start()
        return self

    def __exit__(self, *exc):
        self.server.shutdown()
        self.server.server_close()
