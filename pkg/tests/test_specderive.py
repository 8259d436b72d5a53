from pathlib import Path

import pytest

from specforge.llm import MockBackend
from specforge.model import (
    ExecStatus,
    ExecutionRecord,
    Intent,
    IOSpecification,
    SpecType,
    VariableKind,
    render_pipe_table,
)
from specforge.specderive import (
    AlreadyAugmented,
    EmptyOutputs,
    NotExecutable,
    SpecRejected,
    augment_intent,
    derive_io_examples,
    derive_io_summary,
    derive_type_desc,
    summary_prompt_payload,
)

from conftest import make_record, make_scalar, make_snapshot

GOLDENS = Path(__file__).parent / "goldens"

PHONES_SOLUTION = (
    "yearly_smartphones = phones.groupby(['year', 'smartphone'],\n"
    "    as_index=False).size().pivot_table(\n"
    "        index='year',columns='smartphone', values='size').fillna(0)\n"
    "yearly_smartphones.groupby((yearly_smartphones.index//10)*10).Yes.sum()"
)

PHONES_INTENT_TEXT = "How many different smartphones were released each decade?"


def golden(name):
    return (GOLDENS / name).read_text(encoding="utf-8")


def phones_record():
    phones = make_snapshot(
        name="phones",
        columns=(
            ("manufacturer", "string"),
            ("model", "string"),
            ("form", "string"),
            ("smartphone", "string"),
            ("year", "int"),
        ),
        cells=(
            ("Nokia", "Apple"),
            ("1100", "iPhone 13"),
            ("Bar", "Touchscreen"),
            ("No", "Yes"),
            (2003, 2021),
        ),
    )
    output = make_snapshot(
        name="__output__",
        type_name="pandas.core.series.Series",
        kind=VariableKind.COLUMN,
        columns=(("Yes", "float"),),
        cells=((0.0, 12.0, 58.0),),
    )
    return ExecutionRecord(
        candidate_id="cand-phones",
        status=ExecStatus.OK,
        input_vars=(phones,),
        output_vars=(output,),
        api_calls=("phones.groupby", "pivot_table", "fillna", "sum"),
        duration_ms=20,
    )


def phones_intent(context):
    return Intent.create(context.context_id, 1, PHONES_INTENT_TEXT)


def empty_output_record():
    """Bypasses construction-time validation to exercise the derive guard."""
    record = ExecutionRecord.__new__(ExecutionRecord)
    for name, value in dict(
        candidate_id="cand-empty",
        status=ExecStatus.OK,
        error_message=None,
        input_vars=(),
        output_vars=(),
        api_calls=(),
        stdout_excerpt="",
        duration_ms=0,
    ).items():
        object.__setattr__(record, name, value)
    return record


class TestDeriveTypeDesc:
    def test_golden(self):
        record = make_record(
            outputs=(make_snapshot(name="df", type_name="pandas.DataFrame"),)
        )
        spec = derive_type_desc(record)
        assert spec.spec_type is SpecType.TYPE_DESC
        assert spec.rendered + "\n" == golden("type_desc.txt")

    def test_two_outputs_joined_by_semicolon(self):
        record = make_record(
            outputs=(
                make_snapshot(name="df", type_name="pandas.DataFrame"),
                make_scalar(name="total", value=9),
            )
        )
        spec = derive_type_desc(record)
        assert spec.rendered == (
            "Generate a variable with name df and type pandas.DataFrame; "
            "Generate a variable with name total and type builtins.int"
        )

    def test_not_executable(self):
        with pytest.raises(NotExecutable):
            derive_type_desc(make_record(status=ExecStatus.SYNTAX_ERROR))

    def test_empty_outputs_guard(self):
        with pytest.raises(EmptyOutputs):
            derive_type_desc(empty_output_record())

    def test_every_failure_status_rejected(self):
        for status in ExecStatus:
            if status is ExecStatus.OK:
                continue
            with pytest.raises(NotExecutable):
                derive_type_desc(make_record(status=status))


CITY_COLUMNS = (
    ("Bangalore", "float"),
    ("Chennai", "float"),
    ("Delhi", "float"),
    ("Hyderabad", "float"),
    ("Kolkata", "float"),
)

CITY_CELLS = (
    (None, 1.18, 8.46),
    (1.04, None, 11.10),
    (8.08, 11.96, None),
    (3.62, 6.80, 9.19),
    (7.56, 6.31, 9.52),
)


class TestDeriveIoExamples:
    def test_city_table_golden(self):
        record = make_record(
            outputs=(make_snapshot(name="df", columns=CITY_COLUMNS, cells=CITY_CELLS),)
        )
        spec = derive_io_examples(record)
        assert spec.spec_type is SpecType.IO_EXAMPLES
        assert spec.rendered + "\n" == golden("io_examples.txt")

    def test_scalar_output_inline(self):
        record = make_record(outputs=(make_scalar(name="x", value=0.6, dtype="float"),))
        assert derive_io_examples(record).rendered == "Output variable x: 0.6"

    def test_wide_table_capped_at_twenty_columns(self):
        columns = tuple((f"c{i}", "int") for i in range(50))
        cells = tuple((i,) for i in range(50))
        record = make_record(
            outputs=(make_snapshot(name="wide", columns=columns, cells=cells),)
        )
        rendered = derive_io_examples(record).rendered
        header = rendered.splitlines()[1]
        assert header.count("(int)") == 20
        assert header.endswith("|...|")

    def test_inputs_included_behind_flag(self):
        record = phones_record()
        without = derive_io_examples(record)
        with_inputs = derive_io_examples(record, include_inputs=True)
        assert "Input variable phones:" not in without.rendered
        assert with_inputs.rendered.startswith("Input variable phones:")
        assert "Output variable __output__:" in with_inputs.rendered

    def test_not_executable(self):
        with pytest.raises(NotExecutable):
            derive_io_examples(make_record(status=ExecStatus.TIMEOUT))


class TestSummaryPrompt:
    def test_payload_golden(self, context):
        payload = summary_prompt_payload(
            phones_record(), phones_intent(context), PHONES_SOLUTION, noisy=False
        )
        assert payload + "\n" == golden("io_summary_prompt.txt")

    def test_noisy_payload_golden(self, context):
        payload = summary_prompt_payload(
            phones_record(), phones_intent(context), PHONES_SOLUTION, noisy=True
        )
        assert payload + "\n" == golden("io_summary_prompt_noisy.txt")

    def test_noisy_payload_carries_no_output_cell_values(self, context):
        record = phones_record()
        payload = summary_prompt_payload(
            record, phones_intent(context), PHONES_SOLUTION, noisy=True
        )
        for variable in record.output_vars:
            for column in variable.cells:
                for value in column:
                    assert str(value) not in payload


class RejectingBackend:
    """Never names any output variable."""

    name = "rejecting"
    calls = 0

    def raw_complete(self, request):
        type(self).calls += 1
        return ["a summary that names nothing"] * request.n_samples


class SecondTryBackend:
    """Fails the mention check once, passes on the retry."""

    name = "second-try"

    def __init__(self):
        self.calls = 0

    def raw_complete(self, request):
        self.calls += 1
        if self.calls == 1:
            return ["not mentioning anything"]
        return ["__output__: a pandas.core.series.Series. Looks right."]


class TestDeriveIoSummary:
    def test_mock_summary_form(self, context):
        record = phones_record()
        spec = derive_io_summary(
            record, phones_intent(context), PHONES_SOLUTION, MockBackend()
        )
        assert spec.spec_type is SpecType.IO_SUMMARY
        assert spec.noisy is False
        assert spec.rendered.startswith("__output__: a pandas.core.")
        assert "salient columns (at most given 3) in the input dataframe are" in spec.rendered
        # first three input columns lexically
        assert "form, manufacturer, model" in spec.rendered

    def test_mock_reads_type_from_noisy_prompt(self, context):
        spec = derive_io_summary(
            phones_record(), phones_intent(context), PHONES_SOLUTION,
            MockBackend(), noisy=True,
        )
        assert spec.rendered.startswith("__output__: a pandas.core.series.Series.")

    def test_mock_is_deterministic(self, context):
        record = phones_record()
        args = (record, phones_intent(context), PHONES_SOLUTION, MockBackend())
        assert derive_io_summary(*args).rendered == derive_io_summary(*args).rendered

    def test_noisy_flag_propagates(self, context):
        spec = derive_io_summary(
            phones_record(), phones_intent(context), PHONES_SOLUTION,
            MockBackend(), noisy=True,
        )
        assert spec.noisy is True

    def test_rejected_after_one_retry(self, context):
        RejectingBackend.calls = 0
        with pytest.raises(SpecRejected):
            derive_io_summary(
                phones_record(), phones_intent(context), PHONES_SOLUTION,
                RejectingBackend(),
            )
        assert RejectingBackend.calls == 2

    def test_retry_can_succeed(self, context):
        backend = SecondTryBackend()
        spec = derive_io_summary(
            phones_record(), phones_intent(context), PHONES_SOLUTION, backend
        )
        assert backend.calls == 2
        assert "Looks right" in spec.rendered

    def test_not_executable(self, context):
        with pytest.raises(NotExecutable):
            derive_io_summary(
                make_record(status=ExecStatus.RUNTIME_ERROR),
                phones_intent(context), "df", MockBackend(),
            )


class TestAugmentIntent:
    def test_type_desc_appended_after_newline(self, context, intent):
        spec = IOSpecification(SpecType.TYPE_DESC, "Generate a variable with name x and type int")
        augmented = augment_intent(intent, spec)
        assert augmented.rendered_text() == f"{intent.text}\n{spec.rendered}"
        assert augmented.rendered_text().endswith(spec.rendered)

    def test_double_augmentation_rejected(self, context, intent):
        spec = IOSpecification(SpecType.TYPE_DESC, "x")
        augmented = augment_intent(intent, spec)
        with pytest.raises(AlreadyAugmented):
            augment_intent(augmented, spec)

    def test_arcade_style_summary_golden(self, context):
        intent = phones_intent(context)
        summary = (
            "__output__: a pandas.core.series.Series. Given the user intent and "
            "the code, the salient columns (at most given 3) in the input "
            "dataframe are smartphone, year. The output values are of type "
            "int64, with an index year."
        )
        spec = IOSpecification(SpecType.IO_SUMMARY, summary)
        augmented = augment_intent(intent, spec)
        assert augmented.rendered_text() + "\n" == golden("augmented_intent.txt")

    def test_distinct_specs_distinct_renderings(self, intent):
        a = augment_intent(intent, IOSpecification(SpecType.TYPE_DESC, "spec one"))
        b = augment_intent(intent, IOSpecification(SpecType.TYPE_DESC, "spec two"))
        assert a.rendered_text() != b.rendered_text()

    def test_identity_preserved(self, intent):
        spec = IOSpecification(SpecType.TYPE_DESC, "anything")
        assert augment_intent(intent, spec).intent_id == intent.intent_id
