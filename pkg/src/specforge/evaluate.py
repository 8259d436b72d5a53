"""Scoring: pass@k estimation, fuzzy output equivalence, error reporting."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Optional, Sequence

from specforge.model import (
    ExecStatus,
    ExecutionRecord,
    Intent,
    ProgrammaticContext,
    VariableKind,
    VariableSnapshot,
    read_records,
    write_records,
)

DEFAULT_TOLERANCE = 1e-6

_CELL_KINDS = frozenset(
    {
        VariableKind.TABULAR,
        VariableKind.COLUMN,
        VariableKind.ARRAY,
        VariableKind.TENSOR,
    }
)


class DomainError(ValueError):
    """pass@k inputs outside 0 <= c <= n, 1 <= k <= n."""


class Incomparable(Exception):
    """Snapshot kinds cannot be reconciled for comparison."""


class RaggedSamples(ValueError):
    """Problems were scored with differing sample counts."""


def pass_at_k(n: int, c: int, k: int) -> float:
    """Unbiased estimator 1 - C(n-c, k)/C(n, k), in stable product form."""
    if not (0 <= c <= n) or not (1 <= k <= n):
        raise DomainError(f"invalid pass@k inputs n={n} c={c} k={k}")
    if c == 0:
        return 0.0
    if n - c < k:
        return 1.0
    product = 1.0
    for i in range(n - c + 1, n + 1):
        product *= 1.0 - k / i
    return 1.0 - product


def _is_number(value) -> bool:
    return isinstance(value, (int, float)) and not isinstance(value, bool)


def _cell_equal(a, b, tol: float) -> bool:
    """Numeric within tol (NaN==NaN, missing==missing), else trimmed strings."""
    a_missing = a is None or (_is_number(a) and math.isnan(a))
    b_missing = b is None or (_is_number(b) and math.isnan(b))
    if a_missing or b_missing:
        return a_missing and b_missing
    if _is_number(a) and _is_number(b):
        return abs(a - b) <= tol
    return str(a).strip() == str(b).strip()


def _columns_match(ref: Sequence, cand: Sequence, tol: float) -> bool:
    if len(ref) != len(cand):
        return False
    return all(_cell_equal(r, c, tol) for r, c in zip(ref, cand))


def _sorted_columns(columns: Sequence[Sequence]) -> list[list]:
    """Canonically reorder rows (shared across all columns of one table)."""
    if not columns:
        return []
    rows = list(zip(*columns))
    rows.sort(key=lambda row: tuple(str(cell) for cell in row))
    return [list(column) for column in zip(*rows)] if rows else [[] for _ in columns]


def _scalar_value(snapshot: VariableSnapshot):
    if snapshot.cells and snapshot.cells[0]:
        return snapshot.cells[0][0]
    text = snapshot.rendered.strip()
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        return text


def outputs_equivalent(
    candidate: VariableSnapshot,
    reference: VariableSnapshot,
    tol: float = DEFAULT_TOLERANCE,
    sorted_rows: bool = False,
) -> bool:
    """Fuzzy functional equivalence of two traced outputs.

    Scalars compare within tol (numbers) or by string. Tables compare by an
    injective mapping from reference columns into candidate columns with
    element-wise matches in row order, ignoring column names; the candidate
    may carry extra columns. Column-kind values act as one-column tables.
    """
    ref_scalar = reference.kind is VariableKind.SCALAR
    cand_scalar = candidate.kind is VariableKind.SCALAR
    if ref_scalar and cand_scalar:
        return _cell_equal(_scalar_value(candidate), _scalar_value(reference), tol)
    if ref_scalar != cand_scalar:
        raise Incomparable(
            f"cannot compare {candidate.kind.value} against {reference.kind.value}"
        )
    if reference.kind not in _CELL_KINDS or candidate.kind not in _CELL_KINDS:
        raise Incomparable(
            f"kind {reference.kind.value} vs {candidate.kind.value} "
            "has no cell representation"
        )
    if reference.cells is None or candidate.cells is None:
        raise Incomparable("both snapshots must carry cells")

    ref_columns = [list(column) for column in reference.cells]
    cand_columns = [list(column) for column in candidate.cells]
    if sorted_rows:
        ref_columns = _sorted_columns(ref_columns)
        cand_columns = _sorted_columns(cand_columns)
    if len(ref_columns) > len(cand_columns):
        return False

    compatible = [
        [ _columns_match(r, c, tol) for c in cand_columns ] for r in ref_columns
    ]
    return _injective_mapping_exists(compatible, len(cand_columns))


def _injective_mapping_exists(compatible: list[list[bool]], n_candidates: int) -> bool:
    """Bipartite matching (Kuhn's algorithm) saturating every reference column."""
    assigned: list[Optional[int]] = [None] * n_candidates

    def try_assign(row: int, seen: list[bool]) -> bool:
        for col in range(n_candidates):
            if compatible[row][col] and not seen[col]:
                seen[col] = True
                if assigned[col] is None or try_assign(assigned[col], seen):
                    assigned[col] = row
                    return True
        return False

    for row in range(len(compatible)):
        if not try_assign(row, [False] * n_candidates):
            return False
    return True


@dataclass(frozen=True)
class EvalProblem:
    """One benchmark problem with its executed reference output."""

    RECORD_TYPE = "eval_problem"

    problem_id: str
    context: ProgrammaticContext
    intent: Intent
    reference_solution: str
    reference_output: VariableSnapshot

    def to_record(self) -> dict:
        return {
            "record_type": self.RECORD_TYPE,
            "problem_id": self.problem_id,
            "context": self.context.to_record(),
            "intent": self.intent.to_record(),
            "reference_solution": self.reference_solution,
            "reference_output": self.reference_output.to_record(),
        }

    @classmethod
    def from_record(cls, record: dict) -> "EvalProblem":
        return cls(
            problem_id=record["problem_id"],
            context=ProgrammaticContext.from_record(record["context"]),
            intent=Intent.from_record(record["intent"]),
            reference_solution=record["reference_solution"],
            reference_output=VariableSnapshot.from_record(record["reference_output"]),
        )

    @classmethod
    def from_execution(
        cls,
        problem_id: str,
        context: ProgrammaticContext,
        intent: Intent,
        solution: str,
        record: ExecutionRecord,
    ) -> "EvalProblem":
        """Ingest a problem from its executed annotated solution.

        The reference output is the record's best output variable
        (__output__ preferred); non-ok executions are rejected so every
        problem is grounded in a real run.
        """
        if record.status is not ExecStatus.OK:
            raise ValueError(
                f"problem {problem_id}: reference executed with status "
                f"{record.status.value}, not ok"
            )
        ordered = sorted(
            record.output_vars, key=lambda v: (v.name != "__output__", v.name)
        )
        return cls(
            problem_id=problem_id,
            context=context,
            intent=intent,
            reference_solution=solution,
            reference_output=ordered[0],
        )


def read_problems(path: str | Path) -> list[EvalProblem]:
    _, raw = read_records(path)
    return [EvalProblem.from_record(r) for r in raw]


def write_problems(path: str | Path, problems: Sequence[EvalProblem], seed: int = 0) -> int:
    return write_records(path, problems, seed=seed)


def prediction_matches(
    record: ExecutionRecord,
    reference_output: VariableSnapshot,
    tol: float = DEFAULT_TOLERANCE,
    sorted_rows: bool = False,
) -> bool:
    """True when the record's best output variable matches the reference.

    Any equivalent output counts; __output__ is checked first so the chosen
    witness is deterministic.
    """
    if record.status is not ExecStatus.OK:
        return False
    ordered = sorted(
        record.output_vars, key=lambda v: (v.name != "__output__", v.name)
    )
    for variable in ordered:
        try:
            if outputs_equivalent(variable, reference_output, tol, sorted_rows):
                return True
        except Incomparable:
            continue
    return False


def score_corpus(
    problems: Sequence[EvalProblem],
    predictions: Mapping[str, Sequence[ExecutionRecord]],
    ks: Sequence[int],
    tol: float = DEFAULT_TOLERANCE,
    sorted_rows: bool = False,
    empirical: bool = False,
) -> dict:
    """Mean pass@k over problems plus the execution-rate companion report."""
    if not problems:
        raise ValueError("score_corpus requires at least one problem")
    sample_counts = {len(predictions.get(p.problem_id, ())) for p in problems}
    if len(sample_counts) != 1:
        raise RaggedSamples(f"per-problem sample counts differ: {sorted(sample_counts)}")
    n = sample_counts.pop()
    if n == 0:
        raise RaggedSamples("no predictions supplied")
    for k in ks:
        if not 1 <= k <= n:
            raise DomainError(f"k={k} outside [1, {n}]")

    all_records = []
    per_problem_correct = []
    per_problem_flags = []
    for problem in problems:
        records = list(predictions[problem.problem_id])
        all_records.extend(records)
        flags = [
            prediction_matches(r, problem.reference_output, tol, sorted_rows)
            for r in records
        ]
        per_problem_flags.append(flags)
        per_problem_correct.append(sum(flags))

    scores = {}
    for k in ks:
        if empirical:
            values = [
                1.0 if any(flags[:k]) else 0.0 for flags in per_problem_flags
            ]
        else:
            values = [pass_at_k(n, c, k) for c in per_problem_correct]
        scores[str(k)] = sum(values) / len(values)

    ok = sum(1 for r in all_records if r.status is ExecStatus.OK)
    histogram: dict[str, int] = {}
    for record in all_records:
        histogram[record.status.value] = histogram.get(record.status.value, 0) + 1
    return {
        "schema_version": 1,
        "problems": len(problems),
        "samples_per_problem": n,
        "estimator": "empirical" if empirical else "unbiased",
        "pass_at_k": scores,
        "execution_rate": ok / len(all_records),
        "status_histogram": histogram,
    }


def error_report(records: Sequence[ExecutionRecord]) -> dict:
    """Status frequency table plus a plot-ready series."""
    counts: dict[str, int] = {}
    for record in records:
        counts[record.status.value] = counts.get(record.status.value, 0) + 1
    ok = counts.get(ExecStatus.OK.value, 0)
    series = [
        {"status": status.value, "count": counts[status.value]}
        for status in ExecStatus
        if status.value in counts
    ]
    return {
        "schema_version": 1,
        "total": len(records),
        "counts": counts,
        "execution_rate": ok / len(records) if records else 0.0,
        "series": series,
    }
