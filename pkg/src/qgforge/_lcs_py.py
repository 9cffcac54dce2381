"""Pure-Python twin of the compiled LCS kernel.

Same contract as ``_lcs.lcs_length``; used when the extension is not
built or when ``QGFORGE_PURE_PYTHON=1`` forces it.
"""

from __future__ import annotations

from typing import Sequence


def lcs_length(a: Sequence[int], b: Sequence[int]) -> int:
    """Length of the longest common subsequence of two id sequences."""
    n, m = len(a), len(b)
    if n == 0 or m == 0:
        return 0
    prev = [0] * (m + 1)
    for i in range(1, n + 1):
        curr = [0] * (m + 1)
        ai = a[i - 1]
        for j in range(1, m + 1):
            if ai == b[j - 1]:
                curr[j] = prev[j - 1] + 1
            else:
                pj, cj = prev[j], curr[j - 1]
                curr[j] = pj if pj >= cj else cj
        prev = curr
    return prev[m]
