from __future__ import annotations

import pytest

from specforge.model import (
    CodeCandidate,
    ExecStatus,
    ExecutionRecord,
    Intent,
    ProgrammaticContext,
    VariableKind,
    VariableSnapshot,
    canonical_digest,
    canonical_json,
    render_pipe_table,
)


def make_snapshot(
    name="__output__",
    type_name="pandas.core.frame.DataFrame",
    kind=VariableKind.TABULAR,
    columns=(("value", "float"),),
    cells=((1.0, 2.0, 3.0),),
    rendered=None,
):
    if rendered is None:
        if columns and cells:
            rows = list(zip(*cells))
            rendered = render_pipe_table(columns, rows)
        else:
            rendered = "42"
    return VariableSnapshot(
        name=name,
        type_name=type_name,
        kind=kind,
        rendered=rendered,
        digest=canonical_digest(canonical_json(cells)),
        columns=columns,
        shape=(len(cells[0]), len(cells)) if cells else None,
        cells=cells,
    )


def make_scalar(name="x", value=42, dtype="int"):
    return VariableSnapshot(
        name=name,
        type_name=f"builtins.{dtype}",
        kind=VariableKind.SCALAR,
        rendered=str(value),
        digest=canonical_digest(canonical_json(value)),
        columns=((name, dtype),),
        cells=((value,),),
    )


def make_record(candidate_id="cand-1", status=ExecStatus.OK, outputs=None, **kwargs):
    if outputs is None:
        outputs = (make_snapshot(),) if status is ExecStatus.OK else ()
    return ExecutionRecord(
        candidate_id=candidate_id,
        status=status,
        output_vars=tuple(outputs),
        **kwargs,
    )


@pytest.fixture
def context():
    return ProgrammaticContext.create(
        source_path="data/cities.csv",
        preamble_code="import pandas as pd\ndf = pd.read_csv('data/cities.csv')",
        schema_text=(
            "| city (string) | population (int) | gdp (float) |\n"
            "|---------------------------------------------|\n"
            "| Springfield | 11200 | 3.4 |\n"
            "| Riverton | 80100 | 9.1 |\n"
            "| Lakeside | 5600 | 1.2 |"
        ),
        column_count=3,
    )


@pytest.fixture
def intent(context):
    return Intent.create(context.context_id, 1, "Show the most populous city.")


@pytest.fixture
def candidate(intent):
    return CodeCandidate.create(
        intent_id=intent.intent_id,
        source="df.sort_values('population', ascending=False).head(1)",
        sample_index=0,
        temperature=0.8,
    )
