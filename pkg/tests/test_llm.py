import json
import threading
from http.server import BaseHTTPRequestHandler, HTTPServer
from pathlib import Path

import pytest

from specforge.llm import (
    BackendError,
    FewShotExemplar,
    HttpBackend,
    MixedExemplarKinds,
    MockBackend,
    PromptRequest,
    QuotaError,
    assemble_prompt,
    complete,
    make_backend,
)


class ScriptedBackend:
    """Emits pre-programmed completions for stop-sequence tests."""

    name = "scripted"

    def __init__(self, completions):
        self.completions = completions

    def raw_complete(self, request):
        return list(self.completions)


class TestComplete:
    def test_mock_is_deterministic(self):
        backend = MockBackend()
        request = PromptRequest(
            role="generalist",
            prompt_text="tasks for the dataset:\n| a (int) | b (float) |",
            n_samples=1,
            seed=3,
        )
        assert complete(request, backend) == complete(request, backend)

    def test_n_samples_respected(self):
        request = PromptRequest(role="coder", prompt_text="# Solution:\n", n_samples=5)
        assert len(complete(request, MockBackend())) == 5

    def test_stop_sequence_truncation(self):
        backend = ScriptedBackend(["abc[END]xyz"])
        request = PromptRequest(
            role="coder", prompt_text="p", n_samples=1, stop_sequences=("[END]",)
        )
        assert complete(request, backend) == ["abc"]

    def test_earliest_stop_wins(self):
        backend = ScriptedBackend(["one STOP two [END] three"])
        request = PromptRequest(
            role="coder",
            prompt_text="p",
            n_samples=1,
            stop_sequences=("[END]", "STOP"),
        )
        assert complete(request, backend) == ["one "]

    def test_wrong_count_is_backend_error(self):
        backend = ScriptedBackend(["only one"])
        request = PromptRequest(role="coder", prompt_text="p", n_samples=2)
        with pytest.raises(BackendError):
            complete(request, backend)

    def test_request_validation(self):
        with pytest.raises(ValueError):
            PromptRequest(role="coder", prompt_text="p", n_samples=0)
        with pytest.raises(ValueError):
            PromptRequest(role="coder", prompt_text="p", temperature=-0.1)


class TestAssemblePrompt:
    def test_zero_exemplars_identity(self):
        assert assemble_prompt("intent_gen", [], "payload") == "payload"

    def test_exemplar_then_payload(self):
        exemplar = FewShotExemplar("intent_gen", "Task 1: count rows")
        prompt = assemble_prompt("intent_gen", [exemplar], "| a (int) |")
        assert prompt.startswith("Task 1: count rows\n[END]\n\n")
        assert prompt.endswith("| a (int) |")

    def test_two_exemplars_in_order(self):
        e1 = FewShotExemplar("solution_gen", "first body")
        e2 = FewShotExemplar("solution_gen", "second body")
        prompt = assemble_prompt("solution_gen", [e1, e2], "tail")
        assert prompt.index("first body") < prompt.index("second body") < prompt.index("tail")

    def test_mixed_kinds_rejected(self):
        e1 = FewShotExemplar("intent_gen", "a")
        e2 = FewShotExemplar("io_summary", "b")
        with pytest.raises(MixedExemplarKinds):
            assemble_prompt("intent_gen", [e1, e2], "p")

    def test_associative_over_exemplar_concatenation(self):
        e1 = FewShotExemplar("io_summary", "alpha")
        e2 = FewShotExemplar("io_summary", "beta")
        e3 = FewShotExemplar("io_summary", "gamma")
        joint = assemble_prompt("io_summary", [e1, e2, e3], "tail")
        nested = assemble_prompt(
            "io_summary", [e1], assemble_prompt("io_summary", [e2, e3], "tail")
        )
        assert joint == nested


class TestMockPersonas:
    def test_intent_writer_emits_requested_count(self):
        prompt = (
            "| speed (int) | name (string) |\n\n"
            "Here are a series of 6 contextually dependent data wrangling and "
            "exploratory data analysis tasks for the dataset:\n"
        )
        request = PromptRequest(
            role="generalist", prompt_text=prompt, stop_sequences=("[END]",)
        )
        (completion,) = complete(request, MockBackend())
        lines = [l for l in completion.splitlines() if l.startswith("Task ")]
        assert len(lines) == 6
        assert lines[0].startswith("Task 1:")

    def test_coder_emits_fenced_block_over_columns(self):
        prompt = "| speed (int) |\n\n# Solution:\n"
        request = PromptRequest(
            role="coder", prompt_text=prompt, n_samples=2, stop_sequences=("[END]",)
        )
        completions = complete(request, MockBackend())
        for completion in completions:
            assert "```python" in completion
            assert "speed" in completion

    def test_purity_in_prompt_seed_index(self):
        backend = MockBackend()
        a = backend._complete_one("# Solution:\n| x (int) |", 1, 2)
        b = backend._complete_one("# Solution:\n| x (int) |", 1, 2)
        c = backend._complete_one("# Solution:\n| x (int) |", 1, 3)
        assert a == b
        assert a != c


class _StubHandler(BaseHTTPRequestHandler):
    script = []  # list of (status, payload)
    requests_seen = []

    def do_POST(self):
        length = int(self.headers["Content-Length"])
        body = json.loads(self.rfile.read(length))
        type(self).requests_seen.append(
            {"body": body, "auth": self.headers.get("Authorization")}
        )
        status, payload = self.script.pop(0) if self.script else (200, {"choices": []})
        data = json.dumps(payload).encode()
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    def log_message(self, *args):
        pass


@pytest.fixture
def stub_server():
    server = HTTPServer(("127.0.0.1", 0), _StubHandler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    _StubHandler.script = []
    _StubHandler.requests_seen = []
    yield f"http://127.0.0.1:{server.server_port}/v1/completions", _StubHandler
    server.shutdown()


class TestHttpBackend:
    def test_request_shape_and_response(self, stub_server):
        url, handler = stub_server
        handler.script = [(200, {"choices": [{"text": "hello"}, {"text": "world"}]})]
        backend = HttpBackend(url=url, model="gen-1", token="sekrit")
        request = PromptRequest(
            role="generalist",
            prompt_text="prompt here",
            n_samples=2,
            temperature=0.8,
            max_tokens=64,
            stop_sequences=("[END]",),
            seed=9,
        )
        assert backend.raw_complete(request) == ["hello", "world"]
        seen = handler.requests_seen[0]
        assert seen["auth"] == "Bearer sekrit"
        golden = json.loads(
            (Path(__file__).parent / "goldens" / "http_request.json").read_text()
        )
        assert seen["body"] == golden

    def test_retry_then_success(self, stub_server):
        url, handler = stub_server
        handler.script = [
            (500, {}),
            (500, {}),
            (200, {"choices": [{"text": "ok"}]}),
        ]
        sleeps = []
        backend = HttpBackend(url=url, model="m", sleep=sleeps.append)
        request = PromptRequest(role="coder", prompt_text="p")
        assert backend.raw_complete(request) == ["ok"]
        assert sleeps == [1.0, 2.0]  # exponential backoff from 1s

    def test_exhausted_retries_raise_backend_error(self, stub_server):
        url, handler = stub_server
        handler.script = [(500, {}), (500, {}), (500, {})]
        backend = HttpBackend(url=url, model="m", sleep=lambda _: None)
        with pytest.raises(BackendError):
            backend.raw_complete(PromptRequest(role="coder", prompt_text="p"))

    def test_rate_limit_raises_quota_error(self, stub_server):
        url, handler = stub_server
        handler.script = [(429, {})]
        backend = HttpBackend(url=url, model="m", sleep=lambda _: None)
        with pytest.raises(QuotaError):
            backend.raw_complete(PromptRequest(role="coder", prompt_text="p"))


def test_make_backend():
    assert isinstance(make_backend("mock"), MockBackend)
    assert isinstance(make_backend("http", url="http://x", model="m"), HttpBackend)
    with pytest.raises(ValueError):
        make_backend("carrier-pigeon")
    with pytest.raises(ValueError):
        make_backend("http")
