"""Offline fixtures: synthetic CSV corpora and scripted execution records.

These helpers let the full pipeline run end to end with the mock backend
and a replay execution source, with a known executability profile.
"""

from __future__ import annotations

import random
import re
from pathlib import Path
from typing import Sequence

from specforge.model import (
    CodeCandidate,
    ExecStatus,
    ExecutionRecord,
    VariableKind,
    VariableSnapshot,
    canonical_digest,
    canonical_json,
    render_pipe_table,
)

_COLUMN_POOL = (
    ("region", "string"),
    ("population", "int"),
    ("gdp", "float"),
    ("growth_rate", "float"),
    ("capital", "string"),
    ("area_km2", "int"),
    ("median_age", "float"),
    ("literacy", "float"),
)

_WORDS = (
    "north", "south", "east", "west", "upper", "lower", "new", "old",
    "port", "lake", "fort", "san", "mount", "grand", "little", "big",
)

_CALL_RE = re.compile(r"([A-Za-z_][A-Za-z0-9_]*(?:\.[A-Za-z_][A-Za-z0-9_]*)*)\(")


def write_demo_corpus(directory: str | Path, n_files: int = 20, seed: int = 0) -> list[Path]:
    """Write n deterministic CSV files with mixed column dtypes."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for index in range(n_files):
        rng = random.Random(f"{seed}:{index}")
        n_columns = 3 + rng.randrange(4)
        columns = [_COLUMN_POOL[(index + j) % len(_COLUMN_POOL)] for j in range(n_columns)]
        rows = []
        for _ in range(8 + rng.randrange(8)):
            row = []
            for name, dtype in columns:
                if dtype == "int":
                    row.append(str(rng.randrange(1, 100000)))
                elif dtype == "float":
                    row.append(f"{rng.uniform(0, 100):.2f}")
                else:
                    row.append(f"{rng.choice(_WORDS)} {rng.choice(_WORDS)}")
            rows.append(row)
        path = directory / f"table_{index:03d}.csv"
        lines = [",".join(name for name, _ in columns)]
        lines += [",".join(row) for row in rows]
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        paths.append(path)
    return paths


def _api_calls_from_source(source: str) -> tuple:
    return tuple(sorted(set(_CALL_RE.findall(source))))


def _fake_output(candidate: CodeCandidate) -> VariableSnapshot:
    rng = random.Random(candidate.candidate_id)
    values = [round(rng.uniform(0, 50), 2) for _ in range(3)]
    cells = (tuple(values),)
    return VariableSnapshot(
        name="__output__",
        type_name="pandas.core.frame.DataFrame",
        kind=VariableKind.TABULAR,
        rendered=render_pipe_table((("value", "float"),), [[v] for v in values]),
        digest=canonical_digest(canonical_json(cells)),
        columns=(("value", "float"),),
        shape=(3, 1),
        cells=cells,
    )


def _fake_input(candidate: CodeCandidate) -> VariableSnapshot:
    columns = (("region", "string"), ("population", "int"))
    cells = (("north lake", "san fort"), (1200, 5400))
    rows = [["north lake", 1200], ["san fort", 5400]]
    return VariableSnapshot(
        name="df",
        type_name="pandas.core.frame.DataFrame",
        kind=VariableKind.TABULAR,
        rendered=render_pipe_table(columns, rows),
        digest=canonical_digest(canonical_json(cells)),
        columns=columns,
        shape=(2, 2),
        cells=cells,
    )


def synthesize_replay_records(
    candidates: Sequence[CodeCandidate], ok_per_five: int = 3
) -> list[ExecutionRecord]:
    """Scripted execution outcomes: per intent, the lowest sample indexes
    succeed (ok_per_five of every 5), then one schema error, then one syntax
    error. With 5 samples per intent this yields an exact 60% execution rate.
    """
    by_intent: dict[str, list[CodeCandidate]] = {}
    for candidate in candidates:
        by_intent.setdefault(candidate.intent_id, []).append(candidate)

    records = []
    for intent_id in sorted(by_intent):
        group = sorted(by_intent[intent_id], key=lambda c: c.sample_index)
        for position, candidate in enumerate(group):
            slot = position % 5
            if slot < ok_per_five:
                records.append(
                    ExecutionRecord(
                        candidate_id=candidate.candidate_id,
                        status=ExecStatus.OK,
                        input_vars=(_fake_input(candidate),),
                        output_vars=(_fake_output(candidate),),
                        api_calls=_api_calls_from_source(candidate.source),
                        duration_ms=12,
                    )
                )
            elif slot == 3:
                records.append(
                    ExecutionRecord(
                        candidate_id=candidate.candidate_id,
                        status=ExecStatus.SCHEMA_ERROR,
                        error_message="KeyError: 'missing_column'",
                        api_calls=_api_calls_from_source(candidate.source),
                        duration_ms=8,
                    )
                )
            else:
                records.append(
                    ExecutionRecord(
                        candidate_id=candidate.candidate_id,
                        status=ExecStatus.SYNTAX_ERROR,
                        error_message="SyntaxError: invalid syntax",
                        duration_ms=3,
                    )
                )
    return records
