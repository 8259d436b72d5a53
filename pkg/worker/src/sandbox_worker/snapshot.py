"""Serializes live guest values into protocol variable snapshots.

A snapshot carries a short pipe-table rendering for prompts, up to
``row_cap`` full rows of cells (column-major) for equivalence checks, and a
content digest over the canonical full representation. Serialization never
raises: values it cannot handle degrade to kind "other" with a repr excerpt.
"""

from __future__ import annotations

import hashlib
import json
import math
from typing import Any, Optional

DEFAULT_ROW_CAP = 1000
RENDER_ROW_LIMIT = 3
RENDER_COLUMN_LIMIT = 20
REPR_EXCERPT_CHARS = 200

_DTYPE_SHORT = {
    "int8": "int", "int16": "int", "int32": "int", "int64": "int",
    "uint8": "int", "uint16": "int", "uint32": "int", "uint64": "int",
    "float16": "float", "float32": "float", "float64": "float",
    "object": "string", "str": "string", "string": "string",
    "bool": "bool", "boolean": "bool",
    "category": "string",
}


def type_name_of(value: Any) -> str:
    cls = type(value)
    module = cls.__module__
    if module in ("builtins", None):
        return f"builtins.{cls.__qualname__}"
    return f"{module}.{cls.__qualname__}"


def short_dtype(dtype: Any) -> str:
    text = str(dtype)
    if text.startswith("datetime64") or text.startswith("timedelta64"):
        return "datetime"
    return _DTYPE_SHORT.get(text, text)


def _plain(value: Any):
    """Convert one cell to a JSON-safe plain Python value; NaN/NaT -> None."""
    if value is None:
        return None
    if isinstance(value, float):
        return None if math.isnan(value) else value
    if isinstance(value, (int, str, bool)):
        return value
    item = getattr(value, "item", None)
    if callable(item):
        try:
            return _plain(item())
        except (ValueError, TypeError):
            pass
    try:
        import pandas as pd

        if value is pd.NaT or (isinstance(value, float) and pd.isna(value)):
            return None
    except Exception:
        pass
    return str(value)


def render_pipe_table(columns, rows, max_rows=RENDER_ROW_LIMIT,
                      max_columns=RENDER_COLUMN_LIMIT) -> str:
    """Wire rendering convention shared with the orchestrator side."""
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
        cells = ["nan" if v is None else str(v) for v in row[: len(shown)]]
        cells += [""] * (len(shown) - len(cells))
        if elided:
            cells.append("...")
        lines.append("| " + " | ".join(cells) + " |")
    return "\n".join(lines)


def _digest(type_name: str, columns, row_iter) -> str:
    """Stable row-major content hash with dtype tags; NaN as a fixed token."""
    hasher = hashlib.sha256()
    hasher.update(json.dumps({"type": type_name, "columns": columns},
                             sort_keys=True).encode("utf-8"))
    for row in row_iter:
        normalized = ["__nan__" if v is None else v for v in row]
        hasher.update(json.dumps(normalized, ensure_ascii=False).encode("utf-8"))
    return hasher.hexdigest()


def _snapshot_dict(name, type_name, kind, rendered, digest,
                   columns=None, shape=None, cells=None) -> dict:
    return {
        "name": name,
        "type_name": type_name,
        "kind": kind,
        "rendered": rendered or type_name,
        "digest": digest,
        "columns": columns,
        "shape": shape,
        "cells": cells,
    }


def _classify(value: Any) -> str:
    module = type(value).__module__ or ""
    if module.startswith("pandas"):
        import pandas as pd

        if isinstance(value, pd.DataFrame):
            return "tabular"
        if isinstance(value, pd.Series):
            return "column"
        return "other"
    if module.startswith("numpy"):
        import numpy as np

        if isinstance(value, np.ndarray):
            return "array"
        if isinstance(value, np.generic):
            return "scalar"
        return "other"
    if module.startswith(("torch", "tensorflow", "jax")):
        return "tensor"
    if isinstance(value, (bool, int, float, complex, str)):
        return "scalar"
    if isinstance(value, (list, tuple, dict, set, frozenset)):
        return "container"
    return "other"


def _frame_to_table(frame):
    """DataFrame -> (columns, row iterator); non-default index becomes
    leading columns so grouped results keep their keys."""
    import pandas as pd

    index = frame.index
    default_index = (
        isinstance(index, pd.RangeIndex)
        and index.start == 0
        and index.step == 1
    )
    if not default_index:
        frame = frame.reset_index()
    columns = [
        (str(col), short_dtype(dtype))
        for col, dtype in zip(frame.columns, frame.dtypes)
    ]
    rows = ([_plain(v) for v in row] for row in frame.itertuples(index=False, name=None))
    return columns, rows


def _tabular_snapshot(name, value, type_name, kind, row_cap):
    columns, row_iter = _frame_to_table(value)
    if not columns:  # zero-column frame: nothing to tabulate
        return _snapshot_dict(
            name=name,
            type_name=type_name,
            kind=kind,
            rendered=f"{type_name} (empty)",
            digest=_digest(type_name, [], iter([])),
        )
    all_rows = list(row_iter)
    capped = all_rows[:row_cap]
    cells = [[row[i] for row in capped] for i in range(len(columns))]
    return _snapshot_dict(
        name=name,
        type_name=type_name,
        kind=kind,
        rendered=render_pipe_table(columns, all_rows),
        digest=_digest(type_name, columns, iter(all_rows)),
        columns=[list(c) for c in columns],
        shape=[len(all_rows), len(columns)],
        cells=cells,
    )


def _series_snapshot(name, value, type_name, row_cap):
    import pandas as pd

    frame = value.to_frame(name=value.name if value.name is not None else "value")
    snapshot = _tabular_snapshot(name, frame, type_name, "column", row_cap)
    return snapshot


def _array_like_snapshot(name, array, type_name, kind, row_cap):
    import numpy as np

    arr = np.asarray(array)
    if arr.ndim == 0:
        return _scalar_snapshot(name, _plain(arr[()]), type_name)
    if arr.ndim == 1:
        matrix = arr.reshape(-1, 1)
    elif arr.ndim == 2:
        matrix = arr
    else:
        matrix = arr.reshape(-1, 1)  # deeper tensors flatten row-major
    dtype = short_dtype(arr.dtype)
    columns = [(f"c{i}", dtype) for i in range(matrix.shape[1])]
    all_rows = [[_plain(v) for v in row] for row in matrix.tolist()]
    capped = all_rows[:row_cap]
    cells = [[row[i] for row in capped] for i in range(len(columns))]
    return _snapshot_dict(
        name=name,
        type_name=type_name,
        kind=kind,
        rendered=render_pipe_table(columns, all_rows),
        digest=_digest(type_name, columns, iter(all_rows)),
        columns=[list(c) for c in columns],
        shape=list(arr.shape),
        cells=cells,
    )


def _scalar_snapshot(name, value, type_name):
    plain = _plain(value)
    if isinstance(plain, bool):
        dtype = "bool"
    elif isinstance(plain, int):
        dtype = "int"
    elif isinstance(plain, float):
        dtype = "float"
    else:
        dtype = "string"
    rendered = "nan" if plain is None else str(plain)
    return _snapshot_dict(
        name=name,
        type_name=type_name,
        kind="scalar",
        rendered=rendered,
        digest=_digest(type_name, [[name, dtype]], iter([[plain]])),
        columns=[[name, dtype]],
        shape=None,
        cells=[[plain]],
    )


def _container_snapshot(name, value, type_name):
    text = repr(value)
    excerpt = text[:REPR_EXCERPT_CHARS]
    return _snapshot_dict(
        name=name,
        type_name=type_name,
        kind="container",
        rendered=excerpt,
        digest=hashlib.sha256(text.encode("utf-8", "replace")).hexdigest(),
    )


def _other_snapshot(name, value, type_name):
    try:
        text = repr(value)
    except Exception:
        text = f"<unrepresentable {type_name}>"
    excerpt = text[:REPR_EXCERPT_CHARS]
    return _snapshot_dict(
        name=name,
        type_name=type_name,
        kind="other",
        rendered=excerpt,
        digest=hashlib.sha256(text.encode("utf-8", "replace")).hexdigest(),
    )


def _tensor_snapshot(name, value, type_name, row_cap):
    detach = getattr(value, "detach", None)
    host = detach() if callable(detach) else value
    to_numpy = getattr(host, "numpy", None)
    if callable(to_numpy):
        try:
            return _array_like_snapshot(name, to_numpy(), type_name, "tensor", row_cap)
        except Exception:
            pass
    return _other_snapshot(name, value, type_name)


def snapshot_variable(name: str, value: Any, row_cap: int = DEFAULT_ROW_CAP) -> dict:
    """Serialize one live value; degrades instead of raising."""
    type_name = type_name_of(value)
    try:
        kind = _classify(value)
        if kind == "tabular":
            return _tabular_snapshot(name, value, type_name, "tabular", row_cap)
        if kind == "column":
            return _series_snapshot(name, value, type_name, row_cap)
        if kind == "array":
            return _array_like_snapshot(name, value, type_name, "array", row_cap)
        if kind == "tensor":
            return _tensor_snapshot(name, value, type_name, row_cap)
        if kind == "scalar":
            return _scalar_snapshot(name, value, type_name)
        if kind == "container":
            return _container_snapshot(name, value, type_name)
        return _other_snapshot(name, value, type_name)
    except Exception:
        return _other_snapshot(name, value, type_name)


def value_digest(value: Any) -> str:
    """Digest used for mutation detection; full value, no row cap applied."""
    return snapshot_variable("_", value, row_cap=0)["digest"]
