"""Kernel backend selection: compiled extension with pure-Python fallback.

Set ARCHEVO_PURE_PYTHON=1 to force the fallback (used by the benchmark and
the parity tests).
"""
from __future__ import annotations

import os

BACKEND = "python"

if not os.environ.get("ARCHEVO_PURE_PYTHON"):
    try:
        from ._speedups import hypervolume, nd_ranks  # noqa: F401

        BACKEND = "compiled"
    except ImportError:
        from ._fallback import hypervolume, nd_ranks  # noqa: F401
else:
    from ._fallback import hypervolume, nd_ranks  # noqa: F401

__all__ = ["BACKEND", "hypervolume", "nd_ranks"]
