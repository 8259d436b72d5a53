"""Solution sampling, quality filtering, and fine-tuning file assembly."""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Optional, Sequence

from specforge.contexts import schema_prompt_block
from specforge.llm import Backend, FewShotExemplar, PromptRequest, assemble_prompt, complete
from specforge.model import (
    CodeCandidate,
    ExecStatus,
    ExecutionRecord,
    Intent,
    IOSpecification,
    ProgrammaticContext,
    SyntheticExample,
    read_records,
)
from specforge.specderive import augment_intent

DEFAULT_SAMPLES_PER_INTENT = 5
DEFAULT_SAMPLING_TEMPERATURE = 0.8
DEFAULT_PER_INTENT_CAP = 2

_FENCED_RE = re.compile(r"```(?:[A-Za-z0-9_+-]*)\n(.*?)```", re.DOTALL)
_CELL_MARKER = "# In[ ]:"


class MissingAuxiliary(Exception):
    """A mixture ratio below 1 needs an auxiliary source."""


def extract_code(completion: str) -> Optional[str]:
    """Guest code from a completion: fenced block, else first notebook cell,
    else the whole text. None when nothing non-blank remains."""
    match = _FENCED_RE.search(completion)
    if match:
        code = match.group(1).strip()
        return code or None
    if _CELL_MARKER in completion:
        cell = completion.split(_CELL_MARKER)[1]
        code = cell.split("```")[0].strip()
        return code or None
    code = completion.strip()
    return code or None


def solution_payload(context: ProgrammaticContext, intent: Intent) -> str:
    return (
        f"{context.preamble_code}\n\n"
        f"{schema_prompt_block(context)}\n\n"
        f"# Task:\n{intent.rendered_text()}\n\n"
        "# Solution:\n"
    )


@dataclass
class SamplingReport:
    candidates: list
    extraction_failures: int = 0


def sample_solutions(
    intents: Sequence[Intent],
    contexts: Mapping[str, ProgrammaticContext],
    backend: Backend,
    samples_per_intent: int = DEFAULT_SAMPLES_PER_INTENT,
    temperature: float = DEFAULT_SAMPLING_TEMPERATURE,
    exemplars: Sequence[FewShotExemplar] = (),
    seed: int = 0,
) -> SamplingReport:
    """Draw candidate solutions for every intent from the coder backend.

    sample_index follows the completion index, so a dropped extraction
    leaves a gap rather than renumbering later samples.
    """
    if samples_per_intent < 1:
        raise ValueError("samples_per_intent must be >= 1")
    report = SamplingReport(candidates=[])
    for intent in intents:
        context = contexts[intent.context_id]
        prompt = assemble_prompt(
            "solution_gen", exemplars, solution_payload(context, intent)
        )
        request = PromptRequest(
            role="coder",
            prompt_text=prompt,
            n_samples=samples_per_intent,
            temperature=temperature,
            stop_sequences=("[END]",),
            seed=seed,
        )
        for sample_index, completion in enumerate(complete(request, backend)):
            source = extract_code(completion)
            if source is None:
                report.extraction_failures += 1
                continue
            report.candidates.append(
                CodeCandidate.create(
                    intent_id=intent.intent_id,
                    source=source,
                    sample_index=sample_index,
                    temperature=temperature,
                )
            )
    return report


def _greedy_api_selection(
    executable: Sequence[tuple[CodeCandidate, ExecutionRecord]], cap: int
) -> list[tuple[CodeCandidate, ExecutionRecord, int]]:
    """Pick up to cap candidates maximizing marginal new api_calls coverage.

    Ties break toward the lower sample_index. Returns (candidate, record,
    marginal_gain) in selection order.
    """
    remaining = sorted(executable, key=lambda pair: pair[0].sample_index)
    covered: set[str] = set()
    chosen = []
    while remaining and len(chosen) < cap:
        best_index = 0
        best_gain = -1
        for index, (candidate, record) in enumerate(remaining):
            gain = len(set(record.api_calls) - covered)
            if gain > best_gain:
                best_index, best_gain = index, gain
        candidate, record = remaining.pop(best_index)
        covered |= set(record.api_calls)
        chosen.append((candidate, record, best_gain))
    return chosen


def select_examples(
    records: Sequence[ExecutionRecord],
    candidates: Sequence[CodeCandidate],
    intents: Sequence[Intent],
    contexts: Sequence[ProgrammaticContext],
    per_intent_cap: int = DEFAULT_PER_INTENT_CAP,
    specs_by_candidate: Optional[Mapping[str, IOSpecification]] = None,
) -> list[SyntheticExample]:
    """Keep executable candidates, most API-diverse first, cap per intent.

    When a spec exists for a chosen candidate, the example's intent is
    augmented with it.
    """
    record_by_candidate = {r.candidate_id: r for r in records}
    intent_by_id = {i.intent_id: i for i in intents}
    context_by_id = {c.context_id: c for c in contexts}
    specs_by_candidate = specs_by_candidate or {}

    grouped: dict[str, list[tuple[CodeCandidate, ExecutionRecord]]] = {}
    for candidate in candidates:
        record = record_by_candidate.get(candidate.candidate_id)
        if record is None or record.status is not ExecStatus.OK:
            continue
        grouped.setdefault(candidate.intent_id, []).append((candidate, record))

    examples = []
    for intent_id in sorted(grouped):
        intent = intent_by_id[intent_id]
        context = context_by_id[intent.context_id]
        for rank, (candidate, record, gain) in enumerate(
            _greedy_api_selection(grouped[intent_id], per_intent_cap)
        ):
            spec = specs_by_candidate.get(candidate.candidate_id)
            chosen_intent = augment_intent(intent, spec) if spec else intent
            examples.append(
                SyntheticExample.from_execution(
                    context=context,
                    intent=chosen_intent,
                    solution=candidate.source,
                    record=record,
                    selection_reason=(
                        f"api_diversity rank={rank} new_calls={gain} "
                        f"sample_index={candidate.sample_index}"
                    ),
                )
            )
    return examples


def build_mixture(
    synthetic_path: str | Path,
    auxiliary_path: Optional[str | Path] = None,
    ratio: float = 1.0,
) -> dict:
    """Interleave manifest over the synthetic file and an optional auxiliary."""
    if not 0 < ratio <= 1:
        raise ValueError("ratio must be in (0, 1]")
    if ratio < 1 and auxiliary_path is None:
        raise MissingAuxiliary("ratio < 1 requires an auxiliary source")
    _, synthetic_raw = read_records(synthetic_path)
    sources = [
        {
            "path": str(synthetic_path),
            "role": "synthetic",
            "weight": ratio,
            "records": len(synthetic_raw),
        }
    ]
    if auxiliary_path is not None:
        _, auxiliary_raw = read_records(auxiliary_path)
        sources.append(
            {
                "path": str(auxiliary_path),
                "role": "auxiliary",
                "weight": 1 - ratio,
                "records": len(auxiliary_raw),
            }
        )
    return {"schema_version": 1, "sources": sources}


def corpus_stats(
    examples: Sequence[SyntheticExample], records: Sequence[ExecutionRecord]
) -> dict:
    """Counts mirrored in the run summary: sizes, rates, API spread."""
    histogram: dict[str, int] = {}
    for record in records:
        histogram[record.status.value] = histogram.get(record.status.value, 0) + 1
    ok = histogram.get(ExecStatus.OK.value, 0)
    spec_counts: dict[str, int] = {}
    apis: set[str] = set()
    for example in examples:
        apis.update(example.provenance.api_calls)
        key = example.intent.spec.spec_type.value if example.intent.spec else "none"
        spec_counts[key] = spec_counts.get(key, 0) + 1
    return {
        "examples": len(examples),
        "executions": len(records),
        "execution_rate": ok / len(records) if records else 0.0,
        "status_histogram": histogram,
        "distinct_api_calls": len(apis),
        "spec_type_counts": spec_counts,
    }
