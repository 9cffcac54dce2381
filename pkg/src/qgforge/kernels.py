"""Kernel backend selection.

The hot inner loop of every ROUGE-L computation is a quadratic LCS
dynamic program. A compiled extension (``qgforge._lcs``) provides it at
C speed; this module falls back to the pure-Python twin when the
extension is missing and exposes which backend won.

Set ``QGFORGE_PURE_PYTHON=1`` to force the fallback (used by the
benchmark and by tests that exercise both paths).
"""

from __future__ import annotations

import os
from array import array
from typing import Sequence

from qgforge import _lcs_py

_FORCE_PURE = os.environ.get("QGFORGE_PURE_PYTHON", "") == "1"

if not _FORCE_PURE:
    try:
        from qgforge import _lcs as _impl

        BACKEND = "cython"
    except ImportError:  # extension not built
        _impl = _lcs_py
        BACKEND = "python"
else:
    _impl = _lcs_py
    BACKEND = "python"


if BACKEND == "cython":

    def lcs_length(a: Sequence[int], b: Sequence[int]) -> int:
        """Length of the longest common subsequence of two id sequences."""
        return _impl.lcs_length(array("i", a), array("i", b))

else:
    lcs_length = _lcs_py.lcs_length
