# cython: language_level=3, boundscheck=False, wraparound=False, initializedcheck=False
"""Compiled longest-common-subsequence kernel.

Rolling two-row dynamic program over integer token ids. The pure-Python
twin lives in ``_lcs_py``; ``qgforge.kernels`` picks one at import time.
"""

from libc.stdlib cimport free, malloc


def lcs_length(int[::1] a, int[::1] b):
    """Length of the longest common subsequence of two id sequences."""
    cdef Py_ssize_t n = a.shape[0]
    cdef Py_ssize_t m = b.shape[0]
    if n == 0 or m == 0:
        return 0

    cdef int *prev = <int *> malloc((m + 1) * sizeof(int))
    cdef int *curr = <int *> malloc((m + 1) * sizeof(int))
    if prev == NULL or curr == NULL:
        if prev != NULL:
            free(prev)
        if curr != NULL:
            free(curr)
        raise MemoryError()

    cdef Py_ssize_t i, j
    cdef int *tmp
    cdef int best
    try:
        for j in range(m + 1):
            prev[j] = 0
        for i in range(1, n + 1):
            curr[0] = 0
            for j in range(1, m + 1):
                if a[i - 1] == b[j - 1]:
                    curr[j] = prev[j - 1] + 1
                else:
                    curr[j] = prev[j] if prev[j] >= curr[j - 1] else curr[j - 1]
            tmp = prev
            prev = curr
            curr = tmp
        best = prev[m]
    finally:
        free(prev)
        free(curr)
    return best
