"""Drives sandbox workers over a line-delimited JSON protocol.

Each worker is a subprocess speaking one JSON object per line on
stdin/stdout; stderr goes to a log file and is never parsed. A replay source
serves previously recorded execution records so the pipeline and its tests
run without any live worker.
"""

from __future__ import annotations

import json
import logging
import queue
import select
import shlex
import subprocess
import tempfile
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Mapping, Optional, Sequence, Union

from specforge.model import (
    CodeCandidate,
    ExecStatus,
    ExecutionRecord,
    ProgrammaticContext,
    VariableSnapshot,
    has_meaningful_output,
    read_records,
)

logger = logging.getLogger(__name__)

PROTOCOL_VERSION = 1
DEFAULT_TIMEOUT_MS = 10_000
HARD_TIMEOUT_CAP_MS = 600_000

# Exception families observed from guest code, keyed by final type name.
_SYNTAX_ERROR_TYPES = frozenset({"SyntaxError", "IndentationError", "TabError"})
_SCHEMA_ERROR_TYPES = frozenset({"KeyError", "AttributeError", "UndefinedVariableError"})


class PoolExhausted(Exception):
    """Every worker in the pool failed to start."""


class ReplayMiss(KeyError):
    """A candidate has no record in the replay fixture."""


@dataclass(frozen=True)
class ExecRequest:
    request_id: str
    preamble_code: str
    candidate_code: str
    timeout_ms: int = DEFAULT_TIMEOUT_MS
    trace: bool = True

    def __post_init__(self) -> None:
        if not 0 < self.timeout_ms <= HARD_TIMEOUT_CAP_MS:
            raise ValueError(
                f"timeout_ms must be in (0, {HARD_TIMEOUT_CAP_MS}]"
            )

    def to_wire(self) -> dict:
        return {
            "type": "exec",
            "request_id": self.request_id,
            "preamble_code": self.preamble_code,
            "candidate_code": self.candidate_code,
            "timeout_ms": self.timeout_ms,
            "trace": self.trace,
        }


def classify_error(
    worker_status: str, error_type_name: str = "", error_message: str = ""
) -> ExecStatus:
    """Map a raw worker outcome onto the status taxonomy. Total function."""
    if worker_status == "timeout":
        return ExecStatus.TIMEOUT
    if worker_status == "ok":
        # Ran fine but produced nothing worth keeping.
        return ExecStatus.NO_OUTPUT
    short_name = error_type_name.rsplit(".", 1)[-1] if error_type_name else ""
    if short_name in _SYNTAX_ERROR_TYPES:
        return ExecStatus.SYNTAX_ERROR
    if short_name in _SCHEMA_ERROR_TYPES:
        return ExecStatus.SCHEMA_ERROR
    return ExecStatus.RUNTIME_ERROR


def record_from_response(candidate_id: str, response: dict) -> ExecutionRecord:
    """Build an ExecutionRecord from a wire response, applying the taxonomy."""
    outcome = response.get("outcome", "error")
    input_vars = tuple(
        VariableSnapshot.from_record(v) for v in response.get("input_vars", [])
    )
    api_calls = tuple(response.get("api_calls", []))
    stdout_excerpt = response.get("stdout_excerpt", "")
    duration_ms = int(response.get("duration_ms", 0))

    if outcome == "ok":
        output_vars = tuple(
            VariableSnapshot.from_record(v) for v in response.get("output_vars", [])
        )
        if has_meaningful_output(output_vars):
            return ExecutionRecord(
                candidate_id=candidate_id,
                status=ExecStatus.OK,
                error_message=None,
                input_vars=input_vars,
                output_vars=output_vars,
                api_calls=api_calls,
                stdout_excerpt=stdout_excerpt,
                duration_ms=duration_ms,
            )
        status = classify_error("ok")
        message = None
    else:
        error_type = response.get("error_type", "") or ""
        error_text = response.get("error_message", "") or ""
        status = classify_error(outcome, error_type, error_text)
        message = f"{error_type}: {error_text}" if error_type else (error_text or None)
    return ExecutionRecord(
        candidate_id=candidate_id,
        status=status,
        error_message=message,
        input_vars=input_vars,
        output_vars=(),
        api_calls=api_calls,
        stdout_excerpt=stdout_excerpt,
        duration_ms=duration_ms,
    )


def execution_rate(records: Sequence[ExecutionRecord]) -> float:
    if not records:
        raise ValueError("execution_rate requires at least one record")
    ok = sum(1 for r in records if r.status is ExecStatus.OK)
    return ok / len(records)


def status_histogram(records: Sequence[ExecutionRecord]) -> dict:
    counts: dict[str, int] = {}
    for record in records:
        counts[record.status.value] = counts.get(record.status.value, 0) + 1
    return counts


class ReplaySource:
    """Serves recorded execution records keyed by candidate_id."""

    def __init__(self, records: Sequence[ExecutionRecord]):
        self._by_id = {r.candidate_id: r for r in records}

    @classmethod
    def from_file(cls, path: str | Path) -> "ReplaySource":
        _, raw = read_records(path)
        return cls([ExecutionRecord.from_record(r) for r in raw])

    def lookup(self, candidate_id: str) -> ExecutionRecord:
        try:
            return self._by_id[candidate_id]
        except KeyError:
            raise ReplayMiss(candidate_id) from None


class _Worker:
    """One live subprocess plus its line-oriented protocol state."""

    def __init__(self, command: list[str], worker_id: int, log_dir: Path):
        self.command = command
        self.worker_id = worker_id
        self.log_path = log_dir / f"worker-{worker_id}.log"
        self.proc: Optional[subprocess.Popen] = None
        self._log_handle = None

    def start(self, handshake_timeout: float = 10.0) -> None:
        self._log_handle = self.log_path.open("ab")
        self.proc = subprocess.Popen(
            self.command + ["--protocol-version", str(PROTOCOL_VERSION)],
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            stderr=self._log_handle,
            text=True,
            bufsize=1,
        )
        hello_line = self._read_line(handshake_timeout)
        if hello_line is None:
            self.stop()
            raise RuntimeError("worker produced no handshake")
        hello = json.loads(hello_line)
        if hello.get("type") != "hello" or hello.get("protocol_version") != PROTOCOL_VERSION:
            self.stop()
            raise RuntimeError(f"protocol handshake mismatch: {hello!r}")

    def _read_line(self, timeout_s: float) -> Optional[str]:
        assert self.proc is not None
        deadline = time.monotonic() + timeout_s
        stream = self.proc.stdout
        while True:
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                return None
            ready, _, _ = select.select([stream], [], [], remaining)
            if not ready:
                return None
            line = stream.readline()
            if line == "":  # EOF: the worker died
                raise BrokenPipeError("worker closed stdout")
            if line.strip():
                return line

    def request(self, request: ExecRequest) -> dict:
        """Send one request; raises TimeoutError or BrokenPipeError."""
        assert self.proc is not None
        try:
            self.proc.stdin.write(json.dumps(request.to_wire()) + "\n")
            self.proc.stdin.flush()
        except (BrokenPipeError, OSError) as exc:
            raise BrokenPipeError(str(exc)) from None
        # Give the worker its own chance to report a timeout in-band; only
        # then escalate to a kill. Total wall clock stays under 2x timeout_ms.
        budget_s = (request.timeout_ms * 1.5) / 1000.0
        line = self._read_line(budget_s)
        if line is None:
            raise TimeoutError(f"no response within {budget_s:.1f}s")
        response = json.loads(line)
        if response.get("request_id") != request.request_id:
            raise BrokenPipeError(
                f"response for {response.get('request_id')!r}, "
                f"expected {request.request_id!r}"
            )
        return response

    def stop(self) -> None:
        if self.proc is not None and self.proc.poll() is None:
            self.proc.terminate()
            try:
                self.proc.wait(timeout=2.0)
            except subprocess.TimeoutExpired:
                self.proc.kill()
                self.proc.wait()
        if self._log_handle is not None:
            self._log_handle.close()
            self._log_handle = None
        self.proc = None


class WorkerPool:
    """N single-request workers fed from one queue of candidates."""

    def __init__(
        self,
        worker_command: str | Sequence[str],
        size: int = 1,
        timeout_ms: int = DEFAULT_TIMEOUT_MS,
        log_dir: Optional[str | Path] = None,
    ):
        if size < 1:
            raise ValueError("pool size must be >= 1")
        self.command = (
            shlex.split(worker_command)
            if isinstance(worker_command, str)
            else list(worker_command)
        )
        self.size = size
        self.timeout_ms = timeout_ms
        self.log_dir = Path(log_dir) if log_dir else Path(
            tempfile.mkdtemp(prefix="specforge-worker-logs-")
        )
        self.log_dir.mkdir(parents=True, exist_ok=True)

    def run(
        self, tasks: Sequence[tuple[CodeCandidate, ExecRequest]]
    ) -> dict[str, ExecutionRecord]:
        """Execute all tasks, restarting dead workers; one retry per task."""
        workers: list[_Worker] = []
        failures = []
        for worker_id in range(self.size):
            worker = _Worker(self.command, worker_id, self.log_dir)
            try:
                worker.start()
                workers.append(worker)
            except Exception as exc:
                failures.append(str(exc))
                logger.warning("worker %d failed to start: %s", worker_id, exc)
        if not workers:
            raise PoolExhausted(
                f"no worker could be started ({'; '.join(failures)})"
            )

        task_queue: queue.Queue = queue.Queue()
        for task in tasks:
            task_queue.put(task)
        results: dict[str, ExecutionRecord] = {}
        results_lock = threading.Lock()

        def drive(worker: _Worker) -> None:
            while True:
                try:
                    candidate, request = task_queue.get_nowait()
                except queue.Empty:
                    return
                record = self._run_one(worker, candidate, request)
                with results_lock:
                    results[candidate.candidate_id] = record

        threads = [
            threading.Thread(target=drive, args=(w,), daemon=True) for w in workers
        ]
        for thread in threads:
            thread.start()
        for thread in threads:
            thread.join()
        for worker in workers:
            worker.stop()
        return results

    def _run_one(
        self, worker: _Worker, candidate: CodeCandidate, request: ExecRequest
    ) -> ExecutionRecord:
        for attempt in (1, 2):
            started = time.monotonic()
            try:
                response = worker.request(request)
                return record_from_response(candidate.candidate_id, response)
            except TimeoutError:
                worker.stop()
                self._respawn(worker)
                return ExecutionRecord(
                    candidate_id=candidate.candidate_id,
                    status=ExecStatus.TIMEOUT,
                    error_message=f"killed after exceeding {request.timeout_ms} ms",
                    duration_ms=int((time.monotonic() - started) * 1000),
                )
            except (BrokenPipeError, json.JSONDecodeError) as exc:
                # Worker died or spoke garbage: restart, retry the task once.
                logger.warning(
                    "worker %d failed on %s (attempt %d): %s",
                    worker.worker_id, candidate.candidate_id, attempt, exc,
                )
                worker.stop()
                self._respawn(worker)
                if attempt == 2:
                    return ExecutionRecord(
                        candidate_id=candidate.candidate_id,
                        status=ExecStatus.RUNTIME_ERROR,
                        error_message=f"worker died twice: {exc}",
                        duration_ms=int((time.monotonic() - started) * 1000),
                    )
        raise AssertionError("unreachable")

    def _respawn(self, worker: _Worker) -> None:
        try:
            worker.start()
        except Exception as exc:
            logger.error("worker %d could not be restarted: %s", worker.worker_id, exc)


def build_context_lookup(
    intents: Sequence, contexts: Sequence[ProgrammaticContext]
) -> Callable[[CodeCandidate], ProgrammaticContext]:
    context_by_id = {c.context_id: c for c in contexts}
    intent_to_context = {i.intent_id: i.context_id for i in intents}

    def lookup(candidate: CodeCandidate) -> ProgrammaticContext:
        context_id = intent_to_context.get(candidate.intent_id)
        if context_id is None or context_id not in context_by_id:
            raise LookupError(
                f"candidate {candidate.candidate_id} does not resolve to a context"
            )
        return context_by_id[context_id]

    return lookup


def execute_candidates(
    candidates: Sequence[CodeCandidate],
    context_lookup: Callable[[CodeCandidate], ProgrammaticContext],
    pool: Union[WorkerPool, ReplaySource],
    timeout_ms: int = DEFAULT_TIMEOUT_MS,
) -> list[ExecutionRecord]:
    """One record per candidate, sorted by candidate_id."""
    if isinstance(pool, ReplaySource):
        for candidate in candidates:
            context_lookup(candidate)  # still enforce resolvability
        records = [pool.lookup(c.candidate_id) for c in candidates]
        return sorted(records, key=lambda r: r.candidate_id)

    tasks = []
    for candidate in candidates:
        context = context_lookup(candidate)
        tasks.append(
            (
                candidate,
                ExecRequest(
                    request_id=candidate.candidate_id,
                    preamble_code=context.preamble_code,
                    candidate_code=candidate.source,
                    timeout_ms=timeout_ms,
                ),
            )
        )
    results = pool.run(tasks)
    records = [results[c.candidate_id] for c in candidates]
    return sorted(records, key=lambda r: r.candidate_id)
