# cython: language_level=3, boundscheck=False, wraparound=False
"""Compiled longest-common-subsequence kernel.

Operates on token-id sequences (lists of ints). The diversity filter calls
this once per candidate pair, which makes it the hot inner loop when
filtering large intent corpora.
"""

from libc.stdlib cimport free, malloc


def lcs_length(a, b):
    """Length of the longest common subsequence of two int sequences."""
    cdef Py_ssize_t m = len(a)
    cdef Py_ssize_t n = len(b)
    if m == 0 or n == 0:
        return 0

    cdef long *xs = <long *> malloc(m * sizeof(long))
    cdef long *ys = <long *> malloc(n * sizeof(long))
    # Two rolling DP rows over positions of b.
    cdef long *prev = <long *> malloc((n + 1) * sizeof(long))
    cdef long *curr = <long *> malloc((n + 1) * sizeof(long))
    if xs == NULL or ys == NULL or prev == NULL or curr == NULL:
        free(xs); free(ys); free(prev); free(curr)
        raise MemoryError()

    cdef Py_ssize_t i, j
    cdef long best
    try:
        for i in range(m):
            xs[i] = a[i]
        for j in range(n):
            ys[j] = b[j]
        for j in range(n + 1):
            prev[j] = 0
        for i in range(m):
            curr[0] = 0
            for j in range(n):
                if xs[i] == ys[j]:
                    curr[j + 1] = prev[j] + 1
                else:
                    curr[j + 1] = prev[j + 1] if prev[j + 1] >= curr[j] else curr[j]
            prev, curr = curr, prev
        best = prev[n]
    finally:
        free(xs)
        free(ys)
        free(prev)
        free(curr)
    return best
