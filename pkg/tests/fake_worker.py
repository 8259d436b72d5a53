"""Scripted protocol worker for orchestrator tests.

Reads exec requests from stdin and obeys directives embedded in the
candidate code:

    # directive: die                exit without responding
    # directive: die-once <path>    die the first time (marker file), then ok
    # directive: sleep <seconds>    stall before responding ok
    # directive: report-timeout     respond with outcome=timeout
    # directive: error <type> <msg> respond with outcome=error
    # directive: garbage            emit a non-JSON line
    # directive: no-output          respond ok with zero output variables

Anything else responds ok with one scalar output.
"""

import json
import os
import sys


def emit(payload):
    sys.stdout.write(json.dumps(payload) + "\n")
    sys.stdout.flush()


def ok_response(request, output_vars):
    return {
        "type": "result",
        "request_id": request["request_id"],
        "outcome": "ok",
        "input_vars": [],
        "output_vars": output_vars,
        "api_calls": ["df.head"],
        "stdout_excerpt": "",
        "duration_ms": 1,
    }


def scalar_output():
    return [
        {
            "name": "__output__",
            "type_name": "builtins.int",
            "kind": "scalar",
            "rendered": "7",
            "digest": "0" * 64,
            "columns": [["__output__", "int"]],
            "shape": None,
            "cells": [[7]],
        }
    ]


def main():
    emit({"type": "hello", "protocol_version": 1})
    for line in sys.stdin:
        if not line.strip():
            continue
        request = json.loads(line)
        code = request.get("candidate_code", "")
        directive = ""
        for code_line in code.splitlines():
            if code_line.startswith("# directive:"):
                directive = code_line.split(":", 1)[1].strip()
                break
        if directive == "die":
            os._exit(1)
        if directive.startswith("die-once"):
            marker = directive.split(None, 1)[1]
            if not os.path.exists(marker):
                open(marker, "w").close()
                os._exit(1)
            emit(ok_response(request, scalar_output()))
            continue
        if directive.startswith("sleep"):
            import time

            time.sleep(float(directive.split()[1]))
            emit(ok_response(request, scalar_output()))
            continue
        if directive == "report-timeout":
            emit(
                {
                    "type": "result",
                    "request_id": request["request_id"],
                    "outcome": "timeout",
                    "error_type": "GuestTimeout",
                    "error_message": "guest exceeded its time budget",
                    "duration_ms": request.get("timeout_ms", 0),
                }
            )
            continue
        if directive.startswith("error"):
            _, error_type, message = directive.split(None, 2)
            emit(
                {
                    "type": "result",
                    "request_id": request["request_id"],
                    "outcome": "error",
                    "error_type": error_type,
                    "error_message": message,
                    "api_calls": [],
                    "duration_ms": 1,
                }
            )
            continue
        if directive == "garbage":
            sys.stdout.write("this is not json\n")
            sys.stdout.flush()
            continue
        if directive == "no-output":
            emit(ok_response(request, []))
            continue
        emit(ok_response(request, scalar_output()))


if __name__ == "__main__":
    main()
