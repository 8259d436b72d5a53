"""Turns raw tabular dataset files into programmatic contexts.

A context pairs a dataset-loading preamble with a pipe-delimited schema
rendering: the header (column names with inferred dtypes) plus the first
three data rows, every cell truncated to 50 characters.
"""

from __future__ import annotations

import csv
import re
from dataclasses import dataclass
from datetime import datetime
from pathlib import Path
from typing import Iterable, Optional, Sequence

from specforge.model import ProgrammaticContext

CELL_CHAR_LIMIT = 50
TRUNCATION_MARKER = "…"
SCHEMA_ROW_LIMIT = 3
SCHEMA_COLUMN_LIMIT = 20
ELISION_CELL = "..."
TABLE_VARIABLE = "df"

# Rows sampled per column for dtype inference.
_DTYPE_SAMPLE_ROWS = 100

_INT_RE = re.compile(r"^[+-]?\d+$")
_FLOAT_RE = re.compile(r"^[+-]?(\d+\.?\d*|\.\d+)([eE][+-]?\d+)?$")

# Compact date layouts only; prose dates ("September 25, 2021") stay strings.
DATE_FORMATS = (
    "%d-%b-%y",
    "%d-%b-%Y",
    "%Y-%m-%d",
    "%d/%m/%Y",
    "%m/%d/%Y",
    "%Y/%m/%d",
    "%d-%m-%Y",
)


class EmptyCorpus(Exception):
    """No file in the input directory parsed as a table."""


@dataclass(frozen=True)
class ColumnProfile:
    """One column's name, inferred dtype, and up to 3 example values."""

    name: str
    inferred_dtype: str
    example_values: tuple = ()

    def __post_init__(self) -> None:
        if not self.name:
            raise ValueError("column name must be non-empty")
        object.__setattr__(
            self, "example_values", tuple(self.example_values)[:3]
        )


@dataclass
class MiningReport:
    contexts: list
    skipped: list


def truncate_cell(text: str) -> str:
    """Cap a rendered cell at 50 characters, marking the cut."""
    if len(text) <= CELL_CHAR_LIMIT:
        return text
    return text[:CELL_CHAR_LIMIT] + TRUNCATION_MARKER


def infer_dtype(values: Sequence[str]) -> str:
    """Infer a column dtype from string values.

    int if all parse as integers, else float if all parse as numbers, else
    bool for true/false columns, else datetime when every value matches one
    of the configured compact date layouts, else string. All-blank columns
    are strings.
    """
    present = [v.strip() for v in values if v is not None and v.strip()]
    if not present:
        return "string"
    if all(_INT_RE.match(v) for v in present):
        return "int"
    if all(_FLOAT_RE.match(v) for v in present):
        return "float"
    if all(v.lower() in ("true", "false") for v in present):
        return "bool"
    if all(_matches_date(v) for v in present):
        return "datetime"
    return "string"


def _matches_date(value: str) -> bool:
    for fmt in DATE_FORMATS:
        try:
            datetime.strptime(value, fmt)
            return True
        except ValueError:
            continue
    return False


def render_schema(columns: Sequence[ColumnProfile], rows: Sequence[Sequence[str]]) -> str:
    """Render the header-plus-rows pipe block.

    Layout: one header line of ``| name (dtype) |`` cells, a dash separator
    spanning the header width, then up to 3 data rows. Past 20 columns, the
    remainder is elided with a ``...`` cell on every line.
    """
    if not columns:
        return ""
    shown = list(columns[:SCHEMA_COLUMN_LIMIT])
    elided = len(columns) > SCHEMA_COLUMN_LIMIT

    header_cells = [f"{c.name} ({c.inferred_dtype})" for c in shown]
    if elided:
        header_cells.append(ELISION_CELL)
    header = "| " + " | ".join(header_cells) + " |"
    separator = "|" + "-" * max(len(header) - 2, 1) + "|"

    lines = [header, separator]
    for row in list(rows)[:SCHEMA_ROW_LIMIT]:
        cells = [truncate_cell(str(cell)) for cell in row[: len(shown)]]
        cells += [""] * (len(shown) - len(cells))
        if elided:
            cells.append(ELISION_CELL)
        lines.append("| " + " | ".join(cells) + " |")
    return "\n".join(lines)


def _sniff_delimiter(sample_line: str) -> str:
    return "\t" if sample_line.count("\t") > sample_line.count(",") else ","


def parse_table(path: Path) -> Optional[tuple[list[str], list[list[str]]]]:
    """Parse one file into (header, data rows); None when unparseable."""
    try:
        text = path.read_text(encoding="utf-8-sig")
    except (OSError, UnicodeDecodeError):
        return None
    lines = text.splitlines()
    first = next((line for line in lines if line.strip()), None)
    if first is None:
        return None
    delimiter = _sniff_delimiter(first)
    try:
        parsed = list(csv.reader(lines, delimiter=delimiter))
    except csv.Error:
        return None
    parsed = [row for row in parsed if any(cell.strip() for cell in row)]
    if not parsed:
        return None
    header = [name.strip() for name in parsed[0]]
    if not any(header):
        return None
    header = [name if name else f"column_{i}" for i, name in enumerate(header)]
    width = len(header)
    rows = [(row + [""] * width)[:width] for row in parsed[1:]]
    return header, rows


def profile_columns(header: Sequence[str], rows: Sequence[Sequence[str]]) -> list[ColumnProfile]:
    profiles = []
    sample = rows[:_DTYPE_SAMPLE_ROWS]
    for index, name in enumerate(header):
        values = [row[index] for row in sample]
        profiles.append(
            ColumnProfile(
                name=name,
                inferred_dtype=infer_dtype(values),
                example_values=tuple(
                    truncate_cell(row[index]) for row in rows[:3]
                ),
            )
        )
    return profiles


def context_from_file(path: Path) -> Optional[ProgrammaticContext]:
    parsed = parse_table(path)
    if parsed is None:
        return None
    header, rows = parsed
    profiles = profile_columns(header, rows)
    schema_text = render_schema(profiles, rows[:SCHEMA_ROW_LIMIT])
    # Workers run guest code in a scratch directory, so the load statement
    # must name the dataset unambiguously.
    preamble = (
        "import pandas as pd\n"
        f"{TABLE_VARIABLE} = pd.read_csv({str(path.resolve())!r})"
    )
    return ProgrammaticContext.create(
        source_path=str(path),
        preamble_code=preamble,
        schema_text=schema_text,
        column_count=len(header),
    )


def scan_directory(input_dir: str | Path, limit: Optional[int] = None) -> MiningReport:
    """Mine every tabular file under a directory, lexicographic order."""
    root = Path(input_dir)
    files = sorted(
        p for p in root.iterdir() if p.is_file() and p.suffix.lower() in (".csv", ".tsv")
    )
    contexts = []
    skipped = []
    for path in files:
        if limit is not None and len(contexts) >= limit:
            break
        context = context_from_file(path)
        if context is None:
            skipped.append(str(path))
        else:
            contexts.append(context)
    if not contexts:
        raise EmptyCorpus(f"no parseable tabular files under {root}")
    return MiningReport(contexts=contexts, skipped=skipped)


def mine_contexts(input_dir: str | Path, limit: Optional[int] = None) -> list[ProgrammaticContext]:
    return scan_directory(input_dir, limit).contexts


def schema_prompt_block(context: ProgrammaticContext) -> str:
    """Dataset title line plus the schema block, as shown to intent writers."""
    name = Path(context.source_path).name
    return (
        f"First 3 rows from dataset {name} (column data types in parentheses)\n"
        f"{context.schema_text}"
    )
