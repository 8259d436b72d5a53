"""Pure-Python LCS kernel, used when the compiled extension is unavailable."""

from __future__ import annotations

from typing import Sequence


def lcs_length(a: Sequence[int], b: Sequence[int]) -> int:
    """Length of the longest common subsequence of two int sequences."""
    m, n = len(a), len(b)
    if m == 0 or n == 0:
        return 0
    if n > m:  # keep the DP row short
        a, b, m, n = b, a, n, m
    prev = [0] * (n + 1)
    for x in a:
        curr = [0] * (n + 1)
        for j, y in enumerate(b):
            if x == y:
                curr[j + 1] = prev[j] + 1
            else:
                p, c = prev[j + 1], curr[j]
                curr[j + 1] = p if p >= c else c
        prev = curr
    return prev[n]
