"""Derives I/O specifications from execution records and augments intents.

Three spec types at increasing levels of abstraction: bare variable types,
concrete value examples, and an LLM-written summary. The summary prompt can
run in a noisy mode that hides concrete output values behind type names.
"""

from __future__ import annotations

import dataclasses
from typing import Optional, Sequence

from specforge.llm import Backend, FewShotExemplar, PromptRequest, assemble_prompt, complete
from specforge.model import (
    ExecStatus,
    ExecutionRecord,
    Intent,
    IOSpecification,
    SpecType,
    VariableSnapshot,
)


class NotExecutable(Exception):
    """Specs are derived only from executable code."""


class EmptyOutputs(Exception):
    """The record carries no output variables to describe."""


class SpecRejected(Exception):
    """The generated summary never mentioned the output variables."""


class AlreadyAugmented(Exception):
    """The intent already carries a specification."""


def _checked_outputs(record: ExecutionRecord) -> tuple:
    if record.status is not ExecStatus.OK:
        raise NotExecutable(f"record has status {record.status.value}")
    if not record.output_vars:
        raise EmptyOutputs("record has no output variables")
    return record.output_vars


def derive_type_desc(record: ExecutionRecord) -> IOSpecification:
    """One "Generate a variable with name X and type T" sentence per output."""
    outputs = _checked_outputs(record)
    sentences = [
        f"Generate a variable with name {v.name} and type {v.type_name}"
        for v in outputs
    ]
    return IOSpecification(SpecType.TYPE_DESC, "; ".join(sentences))


def _variable_block(label: str, variable: VariableSnapshot) -> str:
    if "\n" in variable.rendered:
        return f"{label} variable {variable.name}:\n{variable.rendered}"
    return f"{label} variable {variable.name}: {variable.rendered}"


def derive_io_examples(
    record: ExecutionRecord, include_inputs: bool = False
) -> IOSpecification:
    """Concrete value examples from the traced variables.

    Output variables always appear; inputs only behind the flag, since the
    output side alone usually pins the task down.
    """
    outputs = _checked_outputs(record)
    blocks = []
    if include_inputs:
        blocks.extend(_variable_block("Input", v) for v in record.input_vars)
    blocks.extend(_variable_block("Output", v) for v in outputs)
    return IOSpecification(SpecType.IO_EXAMPLES, "\n".join(blocks))


def _input_schema_lines(input_vars: Sequence[VariableSnapshot]) -> list[str]:
    lines = ["# Schema of Dataframes:"]
    tabular = [v for v in input_vars if v.columns]
    if not tabular:
        lines.append("# (no tabular inputs)")
        return lines
    for variable in tabular:
        lines.append(f"# Columns in {variable.name} with example values:")
        entries = []
        for index, (name, _) in enumerate(variable.columns):
            value = ""
            if variable.cells and variable.cells[index]:
                value = variable.cells[index][0]
            entries.append(f"{name} ({value})")
        lines.append("# " + ", ".join(entries))
    return lines


def summary_prompt_payload(
    record: ExecutionRecord,
    intent: Intent,
    solution: str,
    noisy: bool = False,
) -> str:
    """Assemble the summary-writer prompt.

    Sections: input schema docstring, guest solution, execution output,
    user intent, then the cue line. In noisy mode the execution output
    section carries type names only, never concrete values.
    """
    outputs = _checked_outputs(record)
    schema_lines = "\n".join(_input_schema_lines(record.input_vars))
    output_lines = []
    for variable in outputs:
        body = variable.type_name if noisy else variable.rendered
        output_lines.append(f"{variable.name}:\n{body}")
    output_section = "\n".join(output_lines)
    return (
        '"""\n'
        "The input schema is:\n"
        f"{schema_lines}\n"
        '"""\n'
        "\n"
        "# The Python solution is:\n"
        f"{solution}\n"
        "\n"
        "# The execution output is:\n"
        f"{output_section}\n"
        "\n"
        "# The user intent is:\n"
        f"{intent.text}\n"
        "\n"
        "The I/O specification is:"
    )


def derive_io_summary(
    record: ExecutionRecord,
    intent: Intent,
    solution: str,
    backend: Backend,
    noisy: bool = False,
    exemplars: Sequence[FewShotExemplar] = (),
    seed: int = 0,
    temperature: float = 0.8,
) -> IOSpecification:
    """Ask the generalist backend to summarize the traced I/O variables.

    A summary is accepted when it mentions every output variable by name;
    otherwise one retry with the same prompt, then SpecRejected. Imperfect
    but well-formed summaries are kept on purpose.
    """
    outputs = _checked_outputs(record)
    payload = summary_prompt_payload(record, intent, solution, noisy)
    prompt = assemble_prompt("io_summary", exemplars, payload)
    request = PromptRequest(
        role="generalist",
        prompt_text=prompt,
        n_samples=1,
        temperature=temperature,
        stop_sequences=("[END]",),
        seed=seed,
    )
    completion = ""
    for _ in range(2):
        completion = complete(request, backend)[0].strip()
        if completion and all(v.name in completion for v in outputs):
            return IOSpecification(SpecType.IO_SUMMARY, completion, noisy=noisy)
    raise SpecRejected(
        f"summary never mentioned all of {[v.name for v in outputs]}: "
        f"{completion[:200]!r}"
    )


def augment_intent(intent: Intent, spec: IOSpecification) -> Intent:
    """Attach a specification to an intent; augmenting twice is an error."""
    if intent.spec is not None:
        raise AlreadyAugmented(f"intent {intent.intent_id} already has a spec")
    return dataclasses.replace(intent, spec=spec)
