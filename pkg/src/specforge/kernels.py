"""Kernel dispatch: compiled LCS when built, pure Python otherwise."""

from __future__ import annotations

try:
    from specforge._lcs import lcs_length

    KERNEL_BACKEND = "cython"
except ImportError:
    from specforge._lcs_py import lcs_length

    KERNEL_BACKEND = "python"

__all__ = ["lcs_length", "KERNEL_BACKEND"]
