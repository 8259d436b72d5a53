"""Text-generation backends and few-shot prompt assembly.

Two backends share one interface: an HTTP JSON completions-style endpoint
(url, model names, and bearer token from config/env) and a deterministic
mock whose scripted personas let the whole pipeline run offline.
"""

from __future__ import annotations

import itertools
import logging
import os
import re
import threading
import time
from dataclasses import dataclass, field
from typing import Callable, Optional, Protocol, Sequence

import requests

logger = logging.getLogger(__name__)

TOKEN_ENV_VAR = "SPECFORGE_API_TOKEN"

DEFAULT_TEMPERATURE = 0.8
DEFAULT_MAX_TOKENS = 1024
EXEMPLAR_TERMINATOR = "[END]"

_correlation = itertools.count(1)


class BackendError(Exception):
    """Transport or protocol failure after bounded retries."""


class QuotaError(BackendError):
    """The backend reported a rate limit."""


class MixedExemplarKinds(ValueError):
    """Few-shot exemplars of different prompt families were mixed."""


@dataclass(frozen=True)
class PromptRequest:
    role: str  # "generalist" or "coder"
    prompt_text: str
    n_samples: int = 1
    temperature: float = DEFAULT_TEMPERATURE
    max_tokens: int = DEFAULT_MAX_TOKENS
    stop_sequences: tuple = ()
    seed: int = 0

    def __post_init__(self) -> None:
        if self.n_samples < 1:
            raise ValueError("n_samples must be >= 1")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        object.__setattr__(
            self, "stop_sequences", tuple(self.stop_sequences)
        )


@dataclass(frozen=True)
class FewShotExemplar:
    kind: str  # intent_gen | solution_gen | io_summary
    body: str
    terminator: str = EXEMPLAR_TERMINATOR

    def __post_init__(self) -> None:
        if not self.body:
            raise ValueError("exemplar body must be non-empty")


def assemble_prompt(
    kind: str, exemplars: Sequence[FewShotExemplar], payload: str
) -> str:
    """Concatenate exemplar bodies (each closed by its terminator), then the payload."""
    for exemplar in exemplars:
        if exemplar.kind != kind:
            raise MixedExemplarKinds(
                f"exemplar of kind {exemplar.kind!r} in a {kind!r} prompt"
            )
    parts = []
    for exemplar in exemplars:
        block = exemplar.body
        if exemplar.terminator:
            block += "\n" + exemplar.terminator
        parts.append(block + "\n\n")
    return "".join(parts) + payload


class Backend(Protocol):
    name: str

    def raw_complete(self, request: PromptRequest) -> list[str]: ...


def complete(request: PromptRequest, backend: Backend) -> list[str]:
    """Sample completions; each is truncated at the first stop sequence."""
    completions = backend.raw_complete(request)
    if len(completions) != request.n_samples:
        raise BackendError(
            f"{backend.name} returned {len(completions)} completions, "
            f"expected {request.n_samples}"
        )
    return [_truncate_at_stop(c, request.stop_sequences) for c in completions]


def _truncate_at_stop(text: str, stop_sequences: Sequence[str]) -> str:
    cut = len(text)
    for stop in stop_sequences:
        index = text.find(stop)
        if index != -1 and index < cut:
            cut = index
    return text[:cut]


class HttpBackend:
    """Completions-style HTTP JSON backend.

    POSTs {model, prompt, n, temperature, max_tokens, stop, seed} and expects
    {"choices": [{"text": ...}, ...]}. Retries transient failures with
    exponential backoff; a 429 surfaces immediately as QuotaError.
    """

    name = "http"

    def __init__(
        self,
        url: str,
        model: str,
        token: Optional[str] = None,
        timeout: float = 120.0,
        retries: int = 3,
        backoff_start: float = 1.0,
        max_concurrency: int = 4,
        sleep: Callable[[float], None] = time.sleep,
    ):
        self.url = url
        self.model = model
        self.token = token if token is not None else os.environ.get(TOKEN_ENV_VAR)
        self.timeout = timeout
        self.retries = retries
        self.backoff_start = backoff_start
        self._sleep = sleep
        self._session = requests.Session()
        # Shareable handle: concurrent in-flight requests capped here.
        self._slots = threading.BoundedSemaphore(max(1, max_concurrency))

    def raw_complete(self, request: PromptRequest) -> list[str]:
        with self._slots:
            return self._complete_once(request)

    def _complete_once(self, request: PromptRequest) -> list[str]:
        body = {
            "model": self.model,
            "prompt": request.prompt_text,
            "n": request.n_samples,
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
            "stop": list(request.stop_sequences),
            "seed": request.seed,
        }
        headers = {"Content-Type": "application/json"}
        if self.token:
            headers["Authorization"] = f"Bearer {self.token}"
        correlation_id = f"req-{next(_correlation)}"

        delay = self.backoff_start
        last_error: Optional[str] = None
        for attempt in range(1, self.retries + 1):
            try:
                response = self._session.post(
                    self.url, json=body, headers=headers, timeout=self.timeout
                )
            except requests.RequestException as exc:
                last_error = str(exc)
            else:
                if response.status_code == 429:
                    raise QuotaError(f"{correlation_id}: rate limited by {self.url}")
                if response.status_code == 200:
                    payload = response.json()
                    return [choice["text"] for choice in payload["choices"]]
                last_error = f"HTTP {response.status_code}"
            logger.warning(
                "%s attempt %d/%d failed: %s", correlation_id, attempt,
                self.retries, last_error,
            )
            if attempt < self.retries:
                self._sleep(delay)
                delay *= 2
        raise BackendError(f"{correlation_id}: {last_error} after {self.retries} attempts")


# --- deterministic mock -----------------------------------------------------

_SCHEMA_HEADER_RE = re.compile(r"\|\s*([^|]+?)\s*\((int|float|string|bool|datetime)\)")
_SERIES_COUNT_RE = re.compile(r"a series of (\d+) contextually dependent")

_TASK_TEMPLATES = (
    "How many rows are there in the dataset?",
    "What is the average {a} across all records?",
    "Show the top 5 records sorted by {b}.",
    "How many distinct values does the {c} column contain?",
    "Create a new column called {a}_rank that ranks records by {a}.",
    "What is the maximum {b} for each {c}?",
    "Which {c} appears most frequently?",
    "Compute the ratio of {a} to {b} for every record.",
    "List records where {a} is greater than its median.",
    "Group by {c} and report the mean {b} of each group.",
)

_CODE_TEMPLATES = (
    "df.groupby({c!r})[{b!r}].mean()",
    "df[{a!r}].describe()",
    "df.sort_values({b!r}, ascending=False).head(5)",
    "df[{c!r}].value_counts()",
    "result = df[[{a!r}, {b!r}]].dropna()\nresult",
)


def _prompt_columns(prompt_text: str) -> list[str]:
    """Column names from the last schema header block in the prompt."""
    names = []
    for line in prompt_text.splitlines():
        found = _SCHEMA_HEADER_RE.findall(line)
        if found:
            names = [name for name, _ in found]
    return names or ["value"]


class MockBackend:
    """Scripted personas keyed off prompt markers; pure in (prompt, seed, index)."""

    name = "mock"

    def raw_complete(self, request: PromptRequest) -> list[str]:
        return [
            self._complete_one(request.prompt_text, request.seed, index)
            for index in range(request.n_samples)
        ]

    def _complete_one(self, prompt_text: str, seed: int, index: int) -> str:
        if prompt_text.rstrip().endswith("The I/O specification is:"):
            return self._io_summary(prompt_text)
        if "# Solution:" in prompt_text:
            return self._solution(prompt_text, seed, index)
        if "tasks for the dataset:" in prompt_text:
            return self._intents(prompt_text, seed)
        return f"(mock completion {seed}/{index})"

    def _intents(self, prompt_text: str, seed: int) -> str:
        match = _SERIES_COUNT_RE.search(prompt_text)
        count = int(match.group(1)) if match else 10
        columns = _prompt_columns(prompt_text)
        offset = seed % len(_TASK_TEMPLATES)
        lines = []
        for i in range(count):
            template = _TASK_TEMPLATES[(offset + i) % len(_TASK_TEMPLATES)]
            a = columns[i % len(columns)]
            b = columns[(i + 1) % len(columns)]
            c = columns[(i + 2) % len(columns)]
            lines.append(f"Task {i + 1}: " + template.format(a=a, b=b, c=c))
        return "\n".join(lines) + "\n[END]\n"

    def _solution(self, prompt_text: str, seed: int, index: int) -> str:
        columns = _prompt_columns(prompt_text)
        template = _CODE_TEMPLATES[(seed + index) % len(_CODE_TEMPLATES)]
        a = columns[index % len(columns)]
        b = columns[(index + 1) % len(columns)]
        c = columns[(index + 2) % len(columns)]
        code = template.format(a=a, b=b, c=c)
        return f"```python\n{code}\n```\n[END]\n"

    def _io_summary(self, prompt_text: str) -> str:
        output_vars = _prompt_output_vars(prompt_text)
        columns = sorted(_prompt_input_columns(prompt_text))[:3]
        sentences = [f"{name}: a {type_name}." for name, type_name in output_vars]
        sentences.append(
            "Given the user intent and the code, the salient columns (at most "
            f"given 3) in the input dataframe are {', '.join(columns)}."
        )
        return " ".join(sentences)


_INPUT_COLUMNS_RE = re.compile(r"# Columns in \S+ with example values:\n# ([^\n]+)")
_OUTPUT_SECTION_RE = re.compile(
    r"# The execution output is:\n(.*?)\n\n# The user intent is:", re.DOTALL
)
_OUTPUT_VAR_RE = re.compile(r"^(\S+):$", re.MULTILINE)


def _prompt_input_columns(prompt_text: str) -> list[str]:
    match = None
    for match in _INPUT_COLUMNS_RE.finditer(prompt_text):
        pass
    if match is None:
        return ["value"]
    entries = match.group(1).split(", ")
    return [entry.split(" (")[0] for entry in entries if entry]


def _prompt_output_vars(prompt_text: str) -> list[tuple[str, str]]:
    section_match = None
    for section_match in _OUTPUT_SECTION_RE.finditer(prompt_text):
        pass
    if section_match is None:
        return [("__output__", "unknown")]
    section = section_match.group(1)
    result = []
    for var_match in _OUTPUT_VAR_RE.finditer(section):
        name = var_match.group(1)
        rest = section[var_match.end():].lstrip("\n")
        first_line = rest.splitlines()[0].strip() if rest else "unknown"
        # Bare type names appear in noisy prompts; tables start with a pipe.
        type_name = first_line if not first_line.startswith("|") else "pandas.core.frame.DataFrame"
        result.append((name, type_name))
    return result or [("__output__", "unknown")]


def make_backend(kind: str, url: str = "", model: str = "", **kwargs) -> Backend:
    if kind == "mock":
        return MockBackend()
    if kind == "http":
        if not url or not model:
            raise ValueError("http backend requires url and model")
        return HttpBackend(url=url, model=model, **kwargs)
    raise ValueError(f"unknown backend kind: {kind!r}")
