import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path

import pytest

from ragqa.corpus import load_fixture
from ragqa.embedding import HashEmbedder

DATA = Path(__file__).parent / "data"


@pytest.fixture(scope="session")
def fixture_corpus():
    return load_fixture()


@pytest.fixture(scope="session")
def data_dir():
    return DATA


class FakeService:
    """In-process HTTP stand-in for embedding and chat-completion APIs."""

    def __init__(self):
        self.requests = []
        self.embed_dim = 16
        self.embed_status = 200
        self.chat_status = 200
        self.chat_answer = '  "The Drug Enforcement Administration"\n\nIt joined last week.'
        self.wrong_dim = False
        self._hash = HashEmbedder(16)

    def handle(self, path, body):
        self.requests.append((path, body))
        if path == "/v1/embeddings":
            if self.embed_status != 200:
                return self.embed_status, {"error": "boom"}
            dim = self.embed_dim + (1 if self.wrong_dim else 0)
            emb = HashEmbedder(dim)
            data = [{"embedding": emb.embed_one(t).tolist()} for t in body["input"]]
            return 200, {"data": data}
        if path == "/v1/chat/completions":
            if self.chat_status != 200:
                return self.chat_status, {"error": "unavailable"}
            return 200, {"choices": [{"message": {"role": "assistant", "content": self.chat_answer}}]}
        return 404, {"error": "not found"}


@pytest.fixture
def fake_service():
    service = FakeService()

    class Handler(BaseHTTPRequestHandler):
        def do_POST(self):
            length = int(self.headers.get("Content-Length", 0))
            body = json.loads(self.rfile.read(length) or b"{}")
            status, payload = service.handle(self.path, body)
            raw = json.dumps(payload).encode()
            self.send_response(status)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(raw)))
            self.end_headers()
            self.wfile.write(raw)

        def log_message(self, *args):
            pass

    server = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    service.base_url = f"http://127.0.0.1:{server.server_address[1]}"
    yield service
    server.shutdown()
    server.server_close()


_CRITERIA = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(number, title, binding=True): acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None or not (rep.when == "call" or rep.skipped):
        return
    number, title = marker.args
    detail = dict(item.user_properties).get("detail", "")
    if rep.skipped:
        status, detail = "SKIP", str(rep.longrepr[-1]) if isinstance(rep.longrepr, tuple) else detail
    elif not marker.kwargs.get("binding", True):
        status = "RECORDED"
    else:
        status = "PASS" if rep.passed else "FAIL"
    _CRITERIA[number] = (title, status, detail)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for number in sorted(_CRITERIA):
        title, status, detail = _CRITERIA[number]
        terminalreporter.write_line(f"criterion {number:>2} {status:<8} {title}: {detail}")
