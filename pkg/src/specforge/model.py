"""Shared domain types for the pipeline.

Every stage produces and consumes these value objects. All of them are
immutable after construction and serialize to newline-delimited record files
(one JSON object per line, UTF-8, header record first).
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Iterable, Iterator, Optional, Sequence

SCHEMA_VERSION = 1
DIGEST_ALGORITHM = "sha256"
TOOL_VERSION = "0.1.0"

# Full cell values kept per variable for functional-equivalence checks.
# Prompt renderings are truncated separately and much harder.
CELL_ROW_CAP = 1000


class ValidationError(ValueError):
    """A domain value violates one of its invariants."""


def canonical_digest(data: bytes) -> str:
    """Fixed-length lowercase hex digest of a canonical byte sequence."""
    return hashlib.sha256(data).hexdigest()


def canonical_json(value: Any) -> bytes:
    """Stable JSON encoding: sorted keys, no whitespace, UTF-8."""
    return json.dumps(
        value, sort_keys=True, separators=(",", ":"), ensure_ascii=False
    ).encode("utf-8")


def content_id(prefix: str, *defining_fields: Any) -> str:
    """Deterministic identifier derived from a value's defining fields."""
    return f"{prefix}-{canonical_digest(canonical_json(list(defining_fields)))[:16]}"


class VariableKind(str, Enum):
    TABULAR = "tabular"
    COLUMN = "column"
    ARRAY = "array"
    TENSOR = "tensor"
    SCALAR = "scalar"
    CONTAINER = "container"
    OTHER = "other"


# Kinds whose values count as meaningful pipeline output.
MEANINGFUL_KINDS = frozenset(
    {
        VariableKind.TABULAR,
        VariableKind.COLUMN,
        VariableKind.ARRAY,
        VariableKind.TENSOR,
        VariableKind.SCALAR,
    }
)


class ExecStatus(str, Enum):
    OK = "ok"
    SYNTAX_ERROR = "syntax_error"
    SCHEMA_ERROR = "schema_error"
    RUNTIME_ERROR = "runtime_error"
    TIMEOUT = "timeout"
    NO_OUTPUT = "no_output"


class SpecType(str, Enum):
    TYPE_DESC = "type_desc"
    IO_EXAMPLES = "io_examples"
    IO_SUMMARY = "io_summary"


def _require(condition: bool, message: str) -> None:
    if not condition:
        raise ValidationError(message)


@dataclass(frozen=True)
class ProgrammaticContext:
    """Guest-code preamble plus the rendered schema of a tabular dataset."""

    RECORD_TYPE = "context"

    context_id: str
    source_path: str
    preamble_code: str
    schema_text: str
    column_count: int

    def __post_init__(self) -> None:
        _require(bool(self.preamble_code), "preamble_code must be non-empty")
        _require(bool(self.schema_text), "schema_text must be non-empty")
        _require(self.column_count >= 0, "column_count must be nonnegative")

    @classmethod
    def create(
        cls, source_path: str, preamble_code: str, schema_text: str, column_count: int
    ) -> "ProgrammaticContext":
        cid = content_id("ctx", source_path, preamble_code, schema_text)
        return cls(cid, source_path, preamble_code, schema_text, column_count)

    def to_record(self) -> dict:
        return {
            "record_type": self.RECORD_TYPE,
            "context_id": self.context_id,
            "source_path": self.source_path,
            "preamble_code": self.preamble_code,
            "schema_text": self.schema_text,
            "column_count": self.column_count,
        }

    @classmethod
    def from_record(cls, record: dict) -> "ProgrammaticContext":
        return cls(
            context_id=record["context_id"],
            source_path=record["source_path"],
            preamble_code=record["preamble_code"],
            schema_text=record["schema_text"],
            column_count=record["column_count"],
        )


@dataclass(frozen=True)
class IOSpecification:
    """A semantic constraint block appended to an intent."""

    RECORD_TYPE = "io_spec"

    spec_type: SpecType
    rendered: str
    noisy: bool = False

    def __post_init__(self) -> None:
        _require(bool(self.rendered), "rendered must be non-empty")
        _require(
            not self.noisy or self.spec_type is SpecType.IO_SUMMARY,
            "only io_summary specifications may be noisy",
        )

    def to_record(self) -> dict:
        return {
            "record_type": self.RECORD_TYPE,
            "spec_type": self.spec_type.value,
            "rendered": self.rendered,
            "noisy": self.noisy,
        }

    @classmethod
    def from_record(cls, record: dict) -> "IOSpecification":
        return cls(
            spec_type=SpecType(record["spec_type"]),
            rendered=record["rendered"],
            noisy=record.get("noisy", False),
        )


@dataclass(frozen=True)
class Intent:
    """A natural-language task description tied to a context."""

    RECORD_TYPE = "intent"

    intent_id: str
    context_id: str
    ordinal: int
    text: str
    spec: Optional[IOSpecification] = None

    def __post_init__(self) -> None:
        _require(bool(self.text), "text must be non-empty")
        _require(self.ordinal >= 1, "ordinal must be >= 1")

    @classmethod
    def create(
        cls,
        context_id: str,
        ordinal: int,
        text: str,
        spec: Optional[IOSpecification] = None,
    ) -> "Intent":
        iid = content_id("int", context_id, ordinal, text)
        return cls(iid, context_id, ordinal, text, spec)

    def rendered_text(self) -> str:
        """Prompt/dataset rendering: intent text plus any attached spec.

        I/O summaries render in the notebook fixture layout, wrapped in a
        docstring block titled "Input-output Summary:"; the other spec types
        are appended after a single newline.
        """
        if self.spec is None:
            return self.text
        if self.spec.spec_type is SpecType.IO_SUMMARY:
            block = f'"""\nInput-output Summary:\n{self.spec.rendered}\n"""'
            return f"{self.text}\n{block}"
        return f"{self.text}\n{self.spec.rendered}"

    def to_record(self) -> dict:
        return {
            "record_type": self.RECORD_TYPE,
            "intent_id": self.intent_id,
            "context_id": self.context_id,
            "ordinal": self.ordinal,
            "text": self.text,
            "spec": self.spec.to_record() if self.spec is not None else None,
        }

    @classmethod
    def from_record(cls, record: dict) -> "Intent":
        spec = record.get("spec")
        return cls(
            intent_id=record["intent_id"],
            context_id=record["context_id"],
            ordinal=record["ordinal"],
            text=record["text"],
            spec=IOSpecification.from_record(spec) if spec else None,
        )


@dataclass(frozen=True)
class CodeCandidate:
    """One sampled guest-code solution for an intent."""

    RECORD_TYPE = "candidate"

    candidate_id: str
    intent_id: str
    source: str
    sample_index: int
    temperature: float

    def __post_init__(self) -> None:
        _require(bool(self.source), "source must be non-empty")
        _require(self.sample_index >= 0, "sample_index must be nonnegative")
        _require(0.0 <= self.temperature <= 2.0, "temperature must be in [0, 2]")

    @classmethod
    def create(
        cls, intent_id: str, source: str, sample_index: int, temperature: float
    ) -> "CodeCandidate":
        cid = content_id("cand", intent_id, sample_index, source)
        return cls(cid, intent_id, source, sample_index, temperature)

    def to_record(self) -> dict:
        return {
            "record_type": self.RECORD_TYPE,
            "candidate_id": self.candidate_id,
            "intent_id": self.intent_id,
            "source": self.source,
            "sample_index": self.sample_index,
            "temperature": self.temperature,
        }

    @classmethod
    def from_record(cls, record: dict) -> "CodeCandidate":
        return cls(
            candidate_id=record["candidate_id"],
            intent_id=record["intent_id"],
            source=record["source"],
            sample_index=record["sample_index"],
            temperature=record["temperature"],
        )


def _freeze_cells(cells: Any) -> Optional[tuple]:
    if cells is None:
        return None
    return tuple(tuple(column) for column in cells)


@dataclass(frozen=True)
class VariableSnapshot:
    """Traced state of one guest variable, truncated for prompts.

    ``cells`` holds up to CELL_ROW_CAP full rows column-major (a tuple of
    columns, each a tuple of scalars) for equivalence checks; ``rendered`` is
    the short pipe-table text used in prompts.
    """

    RECORD_TYPE = "variable"

    name: str
    type_name: str
    kind: VariableKind
    rendered: str
    digest: str
    columns: Optional[tuple] = None  # ((name, dtype), ...)
    shape: Optional[tuple] = None
    cells: Optional[tuple] = None

    def __post_init__(self) -> None:
        _require(bool(self.rendered), "rendered must be non-empty")
        object.__setattr__(self, "kind", VariableKind(self.kind))
        if self.columns is not None:
            object.__setattr__(
                self, "columns", tuple((str(n), str(d)) for n, d in self.columns)
            )
        if self.shape is not None:
            object.__setattr__(self, "shape", tuple(int(s) for s in self.shape))
        if self.cells is not None:
            frozen = _freeze_cells(self.cells)
            object.__setattr__(self, "cells", frozen)
            _require(self.columns is not None, "cells require columns")
            _require(
                len(frozen) == len(self.columns),
                "cells must have one entry per column",
            )
            lengths = {len(column) for column in frozen}
            _require(len(lengths) <= 1, "all cell columns must have equal length")
            if lengths:
                _require(
                    lengths.pop() <= CELL_ROW_CAP,
                    f"cells capped at {CELL_ROW_CAP} rows",
                )

    @property
    def row_count(self) -> int:
        if not self.cells:
            return 0
        return len(self.cells[0])

    def to_record(self) -> dict:
        return {
            "record_type": self.RECORD_TYPE,
            "name": self.name,
            "type_name": self.type_name,
            "kind": self.kind.value,
            "rendered": self.rendered,
            "digest": self.digest,
            "columns": [list(c) for c in self.columns] if self.columns else None,
            "shape": list(self.shape) if self.shape is not None else None,
            "cells": [list(c) for c in self.cells] if self.cells is not None else None,
        }

    @classmethod
    def from_record(cls, record: dict) -> "VariableSnapshot":
        columns = record.get("columns")
        shape = record.get("shape")
        cells = record.get("cells")
        return cls(
            name=record["name"],
            type_name=record["type_name"],
            kind=VariableKind(record["kind"]),
            rendered=record["rendered"],
            digest=record["digest"],
            columns=tuple(tuple(c) for c in columns) if columns else None,
            shape=tuple(shape) if shape is not None else None,
            cells=_freeze_cells(cells) if cells else None,
        )


@dataclass(frozen=True)
class ExecutionRecord:
    """Outcome of running one candidate in its context."""

    RECORD_TYPE = "execution"

    candidate_id: str
    status: ExecStatus
    error_message: Optional[str] = None
    input_vars: tuple = ()
    output_vars: tuple = ()
    api_calls: tuple = ()
    stdout_excerpt: str = ""
    duration_ms: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "status", ExecStatus(self.status))
        object.__setattr__(self, "input_vars", tuple(self.input_vars))
        object.__setattr__(self, "output_vars", tuple(self.output_vars))
        object.__setattr__(self, "api_calls", tuple(str(a) for a in self.api_calls))
        _require(self.duration_ms >= 0, "duration_ms must be nonnegative")
        if self.status is ExecStatus.OK:
            _require(bool(self.output_vars), "status=ok requires output variables")
        else:
            _require(
                not self.output_vars,
                "non-ok records must not carry output variables",
            )

    def to_record(self) -> dict:
        return {
            "record_type": self.RECORD_TYPE,
            "candidate_id": self.candidate_id,
            "status": self.status.value,
            "error_message": self.error_message,
            "input_vars": [v.to_record() for v in self.input_vars],
            "output_vars": [v.to_record() for v in self.output_vars],
            "api_calls": list(self.api_calls),
            "stdout_excerpt": self.stdout_excerpt,
            "duration_ms": self.duration_ms,
        }

    @classmethod
    def from_record(cls, record: dict) -> "ExecutionRecord":
        return cls(
            candidate_id=record["candidate_id"],
            status=ExecStatus(record["status"]),
            error_message=record.get("error_message"),
            input_vars=tuple(
                VariableSnapshot.from_record(v) for v in record.get("input_vars", [])
            ),
            output_vars=tuple(
                VariableSnapshot.from_record(v) for v in record.get("output_vars", [])
            ),
            api_calls=tuple(record.get("api_calls", [])),
            stdout_excerpt=record.get("stdout_excerpt", ""),
            duration_ms=record.get("duration_ms", 0),
        )


def has_meaningful_output(output_vars: Sequence[VariableSnapshot]) -> bool:
    """True when at least one output is of a kind worth training on."""
    return any(v.kind in MEANINGFUL_KINDS for v in output_vars)


# Prompt renderings of traced tables are tightly truncated: values exist to
# anchor the task, not to transport data.
RENDER_ROW_LIMIT = 3
RENDER_COLUMN_LIMIT = 20


def render_pipe_table(
    columns: Sequence[tuple[str, str]],
    rows: Sequence[Sequence[Any]],
    max_rows: int = RENDER_ROW_LIMIT,
    max_columns: int = RENDER_COLUMN_LIMIT,
) -> str:
    """Snapshot pipe-table text: dtype-suffixed headers, one dash cell per
    column, then up to max_rows data rows; wide tables end in an elision cell.

    This is the wire rendering convention for traced variables; workers emit
    the same layout.
    """
    if not columns:
        return ""
    shown = list(columns)[:max_columns]
    elided = len(columns) > max_columns
    header_cells = [f"{name}({dtype})" for name, dtype in shown]
    if elided:
        header_cells.append("...")
    header = "|" + "|".join(header_cells) + "|"
    separator = "|" + "|".join("-----" for _ in header_cells) + "|"
    lines = [header, separator]
    for row in list(rows)[:max_rows]:
        cells = ["nan" if value is None else str(value) for value in row[: len(shown)]]
        cells += [""] * (len(shown) - len(cells))
        if elided:
            cells.append("...")
        lines.append("| " + " | ".join(cells) + " |")
    return "\n".join(lines)


@dataclass(frozen=True)
class Provenance:
    """Filter decisions recorded on each emitted training example.

    candidate_id keeps examples joinable back to their execution record.
    """

    executable: bool
    candidate_id: str = ""
    api_calls: tuple = ()
    selection_reason: str = ""

    def __post_init__(self) -> None:
        object.__setattr__(self, "api_calls", tuple(str(a) for a in self.api_calls))

    def to_record(self) -> dict:
        return {
            "executable": self.executable,
            "candidate_id": self.candidate_id,
            "api_calls": list(self.api_calls),
            "selection_reason": self.selection_reason,
        }

    @classmethod
    def from_record(cls, record: dict) -> "Provenance":
        return cls(
            executable=record["executable"],
            candidate_id=record.get("candidate_id", ""),
            api_calls=tuple(record.get("api_calls", [])),
            selection_reason=record.get("selection_reason", ""),
        )


@dataclass(frozen=True)
class SyntheticExample:
    """A filtered (context, spec-augmented intent, solution) training record."""

    RECORD_TYPE = "synthetic_example"

    context: ProgrammaticContext
    intent: Intent
    solution: str
    provenance: Provenance

    def __post_init__(self) -> None:
        _require(bool(self.solution), "solution must be non-empty")
        _require(
            self.provenance.executable,
            "synthetic examples require an executable solution",
        )

    @classmethod
    def from_execution(
        cls,
        context: ProgrammaticContext,
        intent: Intent,
        solution: str,
        record: ExecutionRecord,
        selection_reason: str = "",
    ) -> "SyntheticExample":
        if record.status is not ExecStatus.OK:
            raise ValidationError(
                f"cannot build example from {record.status.value} execution"
            )
        return cls(
            context=context,
            intent=intent,
            solution=solution,
            provenance=Provenance(
                executable=True,
                candidate_id=record.candidate_id,
                api_calls=record.api_calls,
                selection_reason=selection_reason,
            ),
        )

    def finetune_input(self) -> str:
        """The model-facing input: rendered context then augmented intent."""
        return (
            f"{self.context.preamble_code}\n\n"
            f"{self.context.schema_text}\n\n"
            f"{self.intent.rendered_text()}"
        )

    def to_record(self) -> dict:
        return {
            "record_type": self.RECORD_TYPE,
            "input": self.finetune_input(),
            "target": self.solution,
            "meta": self.provenance.to_record(),
            "context": self.context.to_record(),
            "intent": self.intent.to_record(),
        }

    @classmethod
    def from_record(cls, record: dict) -> "SyntheticExample":
        return cls(
            context=ProgrammaticContext.from_record(record["context"]),
            intent=Intent.from_record(record["intent"]),
            solution=record["target"],
            provenance=Provenance.from_record(record["meta"]),
        )


RECORD_TYPES = {
    ProgrammaticContext.RECORD_TYPE: ProgrammaticContext,
    Intent.RECORD_TYPE: Intent,
    CodeCandidate.RECORD_TYPE: CodeCandidate,
    VariableSnapshot.RECORD_TYPE: VariableSnapshot,
    ExecutionRecord.RECORD_TYPE: ExecutionRecord,
    SyntheticExample.RECORD_TYPE: SyntheticExample,
}


def parse_record(record: dict) -> Any:
    """Rebuild a typed value from a raw record dict, by its record_type tag."""
    kind = record.get("record_type")
    cls = RECORD_TYPES.get(kind)
    if cls is None:
        raise ValidationError(f"unknown record_type: {kind!r}")
    return cls.from_record(record)


def file_header(seed: int = 0) -> dict:
    return {
        "record_type": "header",
        "schema_version": SCHEMA_VERSION,
        "digest_algorithm": DIGEST_ALGORITHM,
        "tool_version": TOOL_VERSION,
        "seed": seed,
    }


def write_records(
    path: str | Path, records: Iterable[Any], seed: int = 0
) -> int:
    """Write a header record then one JSON record per line. Returns count."""
    path = Path(path)
    count = 0
    with path.open("w", encoding="utf-8") as fh:
        fh.write(json.dumps(file_header(seed), sort_keys=True) + "\n")
        for record in records:
            payload = record.to_record() if hasattr(record, "to_record") else record
            fh.write(json.dumps(payload, sort_keys=True, ensure_ascii=False) + "\n")
            count += 1
    return count


def read_records(path: str | Path) -> tuple[dict, list[dict]]:
    """Read a record file; returns (header, records) as raw dicts."""
    path = Path(path)
    with path.open("r", encoding="utf-8") as fh:
        lines = [line for line in fh.read().splitlines() if line.strip()]
    if not lines:
        raise ValidationError(f"{path}: empty record file")
    header = json.loads(lines[0])
    if header.get("record_type") != "header":
        raise ValidationError(f"{path}: missing header record")
    if header.get("schema_version") != SCHEMA_VERSION:
        raise ValidationError(
            f"{path}: unsupported schema_version {header.get('schema_version')}"
        )
    return header, [json.loads(line) for line in lines[1:]]


def read_typed(path: str | Path) -> list:
    """Read a record file and parse every line into its domain type."""
    _, raw = read_records(path)
    return [parse_record(r) for r in raw]


def iter_typed(records: Iterable[dict]) -> Iterator[Any]:
    for record in records:
        yield parse_record(record)
