"""Protocol entry point: JSON lines in on stdin, JSON lines out on stdout.

One request at a time, one fresh namespace per request. Guest failures are
reported in-band; nothing a guest raises may kill the worker process.
"""

from __future__ import annotations

import argparse
import ast
import contextlib
import io
import json
import os
import sys
import time

from sandbox_worker import PROTOCOL_VERSION
from sandbox_worker.limits import (
    GuestTimeout,
    apply_process_limits,
    disable_network,
    guest_alarm,
    scratch_directory,
)
from sandbox_worker.snapshot import DEFAULT_ROW_CAP, snapshot_variable
from sandbox_worker.tracing import (
    OUTPUT_EXPRESSION_NAME,
    digest_namespace,
    extract_api_calls,
    is_traceable_value,
    loaded_names,
    namespace_delta,
    split_trailing_expression,
)

STDOUT_EXCERPT_CHARS = 2000
DEFAULT_TIMEOUT_MS = 10_000


def _emit(stream, payload: dict) -> None:
    stream.write(json.dumps(payload) + "\n")
    stream.flush()


def _base_response(request_id, started: float) -> dict:
    return {
        "type": "result",
        "request_id": request_id,
        "duration_ms": int((time.monotonic() - started) * 1000),
    }


def run_traced(request: dict, row_cap: int = DEFAULT_ROW_CAP) -> dict:
    """Execute preamble then candidate in a fresh namespace and trace it."""
    started = time.monotonic()
    request_id = request.get("request_id")
    preamble = request.get("preamble_code", "")
    candidate = request.get("candidate_code", "")
    timeout_ms = int(request.get("timeout_ms", DEFAULT_TIMEOUT_MS))
    trace = bool(request.get("trace", True))

    def finish(**fields) -> dict:
        response = _base_response(request_id, started)
        response.update(fields)
        return response

    try:
        tree = ast.parse(candidate)
    except SyntaxError as exc:
        return finish(
            outcome="error",
            error_type="SyntaxError",
            error_message=str(exc),
            input_vars=[],
            output_vars=[],
            api_calls=[],
            mutated_names=[],
            stdout_excerpt="",
        )

    api_calls = extract_api_calls(tree)
    referenced = loaded_names(tree)
    namespace: dict = {"__name__": "__main__", "__builtins__": __builtins__}
    stdout_buffer = io.StringIO()
    modules_before = set(sys.modules)

    def excerpt() -> str:
        return stdout_buffer.getvalue()[:STDOUT_EXCERPT_CHARS]

    def purge_partial_imports() -> None:
        # A timeout can interrupt an import mid-module, leaving a partially
        # initialized entry that would poison every later request.
        for name in set(sys.modules) - modules_before:
            sys.modules.pop(name, None)

    guest_stdin = io.StringIO()
    with scratch_directory(), guest_alarm(timeout_ms):
        real_stdin = sys.stdin
        sys.stdin = guest_stdin
        try:
            with contextlib.redirect_stdout(stdout_buffer):
                try:
                    exec(compile(preamble, "<preamble>", "exec"), namespace)
                except GuestTimeout as exc:
                    purge_partial_imports()
                    return finish(
                        outcome="timeout",
                        error_type="GuestTimeout",
                        error_message=str(exc),
                        input_vars=[], output_vars=[], api_calls=api_calls,
                        mutated_names=[], stdout_excerpt=excerpt(),
                    )
                except BaseException as exc:
                    return finish(
                        outcome="error",
                        error_type=type(exc).__qualname__,
                        error_message=f"preamble failed: {exc}",
                        input_vars=[], output_vars=[], api_calls=api_calls,
                        mutated_names=[], stdout_excerpt=excerpt(),
                    )

                pre_digests = digest_namespace(namespace) if trace else {}
                input_names = sorted(referenced & pre_digests.keys())
                input_vars = [
                    snapshot_variable(name, namespace[name], row_cap)
                    for name in input_names
                ]

                body, trailing = split_trailing_expression(tree)
                captured_output = False
                try:
                    exec(compile(body, "<candidate>", "exec"), namespace)
                    if trailing is not None:
                        value = eval(compile(trailing, "<candidate>", "eval"), namespace)
                        if value is not None and is_traceable_value(value):
                            namespace[OUTPUT_EXPRESSION_NAME] = value
                            captured_output = True
                except GuestTimeout as exc:
                    purge_partial_imports()
                    return finish(
                        outcome="timeout",
                        error_type="GuestTimeout",
                        error_message=str(exc),
                        input_vars=input_vars, output_vars=[],
                        api_calls=api_calls, mutated_names=[],
                        stdout_excerpt=excerpt(),
                    )
                except BaseException as exc:
                    return finish(
                        outcome="error",
                        error_type=type(exc).__qualname__,
                        error_message=str(exc),
                        input_vars=input_vars, output_vars=[],
                        api_calls=api_calls, mutated_names=[],
                        stdout_excerpt=excerpt(),
                    )

                new_names, mutated_names = (
                    namespace_delta(pre_digests, namespace) if trace else ([], [])
                )
                output_vars = []
                if captured_output:
                    output_vars.append(
                        snapshot_variable(
                            OUTPUT_EXPRESSION_NAME,
                            namespace[OUTPUT_EXPRESSION_NAME],
                            row_cap,
                        )
                    )
                for name in sorted(set(new_names) | set(mutated_names)):
                    output_vars.append(snapshot_variable(name, namespace[name], row_cap))
        finally:
            sys.stdin = real_stdin

    return finish(
        outcome="ok",
        error_type=None,
        error_message=None,
        input_vars=input_vars,
        output_vars=output_vars,
        api_calls=api_calls,
        mutated_names=mutated_names,
        stdout_excerpt=excerpt(),
    )


def main() -> None:
    parser = argparse.ArgumentParser(prog="sandbox-worker")
    parser.add_argument("--protocol-version", type=int, default=PROTOCOL_VERSION)
    parser.add_argument("--allow-network", action="store_true")
    parser.add_argument("--max-memory-mb", type=int, default=0)
    parser.add_argument("--cpu-seconds", type=int, default=0)
    parser.add_argument("--row-cap", type=int, default=DEFAULT_ROW_CAP)
    args = parser.parse_args()

    os.environ.setdefault("MPLBACKEND", "Agg")
    apply_process_limits(args.max_memory_mb or None, args.cpu_seconds or None)
    if not args.allow_network:
        disable_network()

    out = sys.stdout
    _emit(out, {"type": "hello", "protocol_version": PROTOCOL_VERSION})
    if args.protocol_version != PROTOCOL_VERSION:
        sys.exit(2)

    # Warm the guest libraries so a tight per-request timeout can never
    # interrupt their first import.
    for module in ("numpy", "pandas"):
        with contextlib.suppress(ImportError):
            __import__(module)

    for line in iter(sys.stdin.readline, ""):
        if not line.strip():
            continue
        try:
            request = json.loads(line)
        except json.JSONDecodeError as exc:
            _emit(out, {
                "type": "result",
                "request_id": None,
                "outcome": "error",
                "error_type": "ProtocolError",
                "error_message": f"unparseable request line: {exc}",
                "input_vars": [], "output_vars": [], "api_calls": [],
                "mutated_names": [], "stdout_excerpt": "", "duration_ms": 0,
            })
            continue
        try:
            response = run_traced(request, row_cap=args.row_cap)
        except BaseException as exc:  # belt and braces: never die mid-request
            response = {
                "type": "result",
                "request_id": request.get("request_id"),
                "outcome": "error",
                "error_type": type(exc).__qualname__,
                "error_message": f"worker internal failure: {exc}",
                "input_vars": [], "output_vars": [], "api_calls": [],
                "mutated_names": [], "stdout_excerpt": "", "duration_ms": 0,
            }
        _emit(out, response)


if __name__ == "__main__":
    main()
