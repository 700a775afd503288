"""Kernel backend selection.

The compiled extension is used when present; DEGDIFF_PURE_PYTHON=1
forces the NumPy/SciPy fallback. Both backends implement identical
contracts (see pykernels), so everything above this module is
backend-agnostic.
"""
from __future__ import annotations

import os

from . import pykernels

BACKEND = "python"
_impl = pykernels

if os.environ.get("DEGDIFF_PURE_PYTHON", "").strip().lower() in ("", "0", "false"):
    try:
        from . import _ckernels

        _impl = _ckernels
        BACKEND = "compiled"
    except ImportError:
        pass

thomas = _impl.thomas
gs_sweep = _impl.gs_sweep
rb_sweep = _impl.rb_sweep

__all__ = ["BACKEND", "thomas", "gs_sweep", "rb_sweep", "pykernels"]
