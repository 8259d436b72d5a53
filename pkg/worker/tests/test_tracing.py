import ast

from sandbox_worker.tracing import (
    dotted_path,
    extract_api_calls,
    loaded_names,
    split_trailing_expression,
)


def calls_of(source):
    return extract_api_calls(ast.parse(source))


class TestApiCalls:
    def test_simple_method(self):
        assert calls_of("df.head()") == ["df.head"]

    def test_chain_through_call(self):
        assert calls_of("alc.groupby('c').agg({'b': 'mean'})") == [
            "alc.groupby",
            "alc.groupby.agg",
        ]

    def test_chain_through_subscript(self):
        assert calls_of("df['x'].describe()") == ["df.describe"]

    def test_bare_function(self):
        assert calls_of("len(df)") == ["len"]

    def test_rootless_chain(self):
        assert calls_of("(a + b).sum()") == ["sum"]

    def test_nested_calls_all_collected(self):
        assert calls_of("pd.concat([df.head(), df.tail()])") == [
            "df.head", "df.tail", "pd.concat",
        ]

    def test_dotted_path_of_name(self):
        assert dotted_path(ast.parse("x", mode="eval").body) == "x"


class TestLoadedNames:
    def test_reads_and_rebinds_both_count(self):
        names = loaded_names(ast.parse("df = df.dropna()"))
        assert "df" in names

    def test_pure_assignment_target_not_loaded(self):
        names = loaded_names(ast.parse("x = 1"))
        assert "x" not in names

    def test_attribute_base_counts(self):
        assert "df" in loaded_names(ast.parse("df.shape"))


class TestTrailingExpression:
    def test_final_expression_split(self):
        body, trailing = split_trailing_expression(ast.parse("x = 1\nx + 1"))
        assert trailing is not None
        assert len(body.body) == 1

    def test_no_final_expression(self):
        body, trailing = split_trailing_expression(ast.parse("x = 1"))
        assert trailing is None
        assert len(body.body) == 1

    def test_empty_module(self):
        body, trailing = split_trailing_expression(ast.parse(""))
        assert trailing is None
