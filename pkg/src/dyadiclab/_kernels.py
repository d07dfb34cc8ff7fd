"""Kernel dispatch: the compiled ``_core`` extension when importable, else
the numpy fallback.  Set ``DYADICLAB_PURE=1`` to force the fallback."""
from __future__ import annotations

import os

from . import _fallback

BACKEND = "python"
_impl = _fallback
if os.environ.get("DYADICLAB_PURE", "") not in ("1", "true", "yes"):
    try:
        from . import _core as _impl  # type: ignore[no-redef]
        BACKEND = "cython"
    except ImportError:
        _impl = _fallback

pair_opnorms = _impl.pair_opnorms
fujii_wilson = _impl.fujii_wilson
expanding_sum_rhs = _impl.expanding_sum_rhs
