from __future__ import annotations

import json
import subprocess
import sys

import pytest

SYNTAX_ERROR_TYPES = {"SyntaxError", "IndentationError", "TabError"}
SCHEMA_ERROR_TYPES = {"KeyError", "AttributeError", "UndefinedVariableError"}
MEANINGFUL_KINDS = {"tabular", "column", "array", "tensor", "scalar"}


def classify_status(response: dict) -> str:
    """The taxonomy mapping documented in PROTOCOL.md, applied to a raw
    worker response (the orchestrator side implements the same table)."""
    outcome = response["outcome"]
    if outcome == "timeout":
        return "timeout"
    if outcome == "ok":
        meaningful = any(
            v["kind"] in MEANINGFUL_KINDS for v in response["output_vars"]
        )
        return "ok" if meaningful else "no_output"
    short = (response.get("error_type") or "").rsplit(".", 1)[-1]
    if short in SYNTAX_ERROR_TYPES:
        return "syntax_error"
    if short in SCHEMA_ERROR_TYPES:
        return "schema_error"
    return "runtime_error"


class WorkerProcess:
    def __init__(self, extra_args=()):
        self.proc = subprocess.Popen(
            [sys.executable, "-m", "sandbox_worker", "--protocol-version", "1",
             *extra_args],
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            stderr=subprocess.DEVNULL,
            text=True,
            bufsize=1,
        )
        self.hello = json.loads(self.proc.stdout.readline())

    def ask(self, preamble: str, candidate: str, timeout_ms: int = 10_000,
            request_id: str = "req-1") -> dict:
        request = {
            "type": "exec",
            "request_id": request_id,
            "preamble_code": preamble,
            "candidate_code": candidate,
            "timeout_ms": timeout_ms,
            "trace": True,
        }
        self.proc.stdin.write(json.dumps(request) + "\n")
        self.proc.stdin.flush()
        return json.loads(self.proc.stdout.readline())

    def send_raw(self, line: str) -> dict:
        self.proc.stdin.write(line + "\n")
        self.proc.stdin.flush()
        return json.loads(self.proc.stdout.readline())

    def close(self):
        if self.proc.poll() is None:
            self.proc.stdin.close()
            self.proc.wait(timeout=5)


@pytest.fixture
def worker():
    process = WorkerProcess()
    yield process
    process.close()


@pytest.fixture(scope="session")
def drinks_csv(tmp_path_factory):
    path = tmp_path_factory.mktemp("data") / "drinks.csv"
    path.write_text(
        "country,beer_servings,continent\n"
        "Andorra,245,EU\n"
        "Angola,217,AF\n"
        "Argentina,193,SA\n"
        "Austria,279,EU\n"
        "Australia,261,OC\n"
    )
    return path


@pytest.fixture(scope="session")
def preamble(drinks_csv):
    return f"import pandas as pd\ndf = pd.read_csv({str(drinks_csv)!r})"
