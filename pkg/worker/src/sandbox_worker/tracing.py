"""Syntactic analysis of candidate code and namespace diffing.

API-call extraction and input-name identification are purely syntactic:
they operate on the parse tree and never execute anything, so they are
available even when execution later fails.
"""

from __future__ import annotations

import ast
import types
from typing import Any, Iterable

from sandbox_worker.snapshot import value_digest

OUTPUT_EXPRESSION_NAME = "__output__"

# Namespace entries that are never data outputs.
_RESERVED = {"__builtins__", "__name__", "__doc__", OUTPUT_EXPRESSION_NAME}


def dotted_path(node: ast.AST) -> str:
    """Dotted attribute chain of a call target, flattened through calls and
    subscripts: ``alc.groupby('x').agg(y)`` yields ``alc.groupby.agg``."""
    if isinstance(node, ast.Attribute):
        base = dotted_path(node.value)
        return f"{base}.{node.attr}" if base else node.attr
    if isinstance(node, ast.Name):
        return node.id
    if isinstance(node, ast.Call):
        return dotted_path(node.func)
    if isinstance(node, ast.Subscript):
        return dotted_path(node.value)
    return ""


def extract_api_calls(tree: ast.AST) -> list[str]:
    calls = set()
    for node in ast.walk(tree):
        if isinstance(node, ast.Call):
            path = dotted_path(node.func)
            if path:
                calls.add(path)
    return sorted(calls)


def loaded_names(tree: ast.AST) -> set[str]:
    """Names read anywhere in the candidate, including ones it also rebinds
    (``df = df.dropna()`` still consumes df)."""
    names = set()
    for node in ast.walk(tree):
        if isinstance(node, ast.Name) and isinstance(node.ctx, ast.Load):
            names.add(node.id)
    return names


def split_trailing_expression(tree: ast.Module) -> tuple[ast.Module, ast.Expression | None]:
    """Separate a final expression statement for notebook-style output capture."""
    if tree.body and isinstance(tree.body[-1], ast.Expr):
        last = tree.body[-1]
        body = ast.Module(body=tree.body[:-1], type_ignores=[])
        expression = ast.Expression(body=last.value)
        ast.fix_missing_locations(body)
        ast.fix_missing_locations(expression)
        return body, expression
    return tree, None


def is_traceable_value(value: Any) -> bool:
    """Data values only: modules, callables, classes, and plotting artifacts
    never count as outputs."""
    if isinstance(value, (types.ModuleType, types.FunctionType,
                          types.BuiltinFunctionType, type)):
        return False
    module = type(value).__module__ or ""
    if module.startswith("matplotlib"):
        return False
    return True


def data_names(namespace: dict) -> list[str]:
    return sorted(
        name
        for name, value in namespace.items()
        if name not in _RESERVED
        and not name.startswith("_")
        and is_traceable_value(value)
    )


def digest_namespace(namespace: dict) -> dict[str, str]:
    """name -> content digest for every traceable variable."""
    return {name: value_digest(namespace[name]) for name in data_names(namespace)}


def namespace_delta(pre_digests: dict[str, str], post_namespace: dict) -> tuple[list[str], list[str]]:
    """(new_names, mutated_names) from pre digests and the post namespace."""
    post_names = data_names(post_namespace)
    new_names = [n for n in post_names if n not in pre_digests]
    mutated = [
        n
        for n in post_names
        if n in pre_digests and value_digest(post_namespace[n]) != pre_digests[n]
    ]
    return new_names, mutated
