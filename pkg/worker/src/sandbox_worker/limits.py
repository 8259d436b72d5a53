"""Process-level resource confinement for untrusted guest code.

Not VM-grade isolation: guest code shares the interpreter. The guards here
bound memory and CPU, disable network sockets by policy, and confine file
writes to a per-request scratch directory.
"""

from __future__ import annotations

import contextlib
import os
import shutil
import signal
import socket
import tempfile

try:
    import resource
except ImportError:  # non-POSIX
    resource = None


class GuestTimeout(Exception):
    """Raised inside guest execution when the wall-clock budget expires."""


def apply_process_limits(max_memory_mb: int | None, cpu_seconds: int | None) -> None:
    """Hard caps set once at startup; they apply to the whole worker."""
    if resource is None:
        return
    if max_memory_mb:
        limit = max_memory_mb * 1024 * 1024
        with contextlib.suppress(ValueError, OSError):
            resource.setrlimit(resource.RLIMIT_AS, (limit, limit))
    if cpu_seconds:
        with contextlib.suppress(ValueError, OSError):
            resource.setrlimit(resource.RLIMIT_CPU, (cpu_seconds, cpu_seconds))


def disable_network() -> None:
    def _blocked(*args, **kwargs):
        raise OSError("network disabled by sandbox policy")

    socket.socket = _blocked  # type: ignore[misc]
    socket.create_connection = _blocked  # type: ignore[misc]


@contextlib.contextmanager
def guest_alarm(timeout_ms: int):
    """SIGALRM-based wall-clock budget; interrupts pure-Python loops. Native
    extension calls may overrun, which the orchestrator's kill handles."""

    def _on_alarm(signum, frame):
        raise GuestTimeout(f"exceeded {timeout_ms} ms")

    previous = signal.signal(signal.SIGALRM, _on_alarm)
    signal.setitimer(signal.ITIMER_REAL, timeout_ms / 1000.0)
    try:
        yield
    finally:
        signal.setitimer(signal.ITIMER_REAL, 0.0)
        signal.signal(signal.SIGALRM, previous)


@contextlib.contextmanager
def scratch_directory():
    """chdir into a fresh per-request directory so stray writes land there."""
    previous = os.getcwd()
    path = tempfile.mkdtemp(prefix="sandbox-request-")
    try:
        os.chdir(path)
        yield path
    finally:
        os.chdir(previous)
        shutil.rmtree(path, ignore_errors=True)
