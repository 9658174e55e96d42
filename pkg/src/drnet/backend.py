"""Training-kernel selection.

The compiled kernel (``drnet._ckernel``) is used when it was built;
otherwise the numpy kernel in ``drnet._pykernel`` is used. Set
``DRNET_BACKEND=python`` (or ``c``) to force one.
"""

from __future__ import annotations

import importlib
import os

from . import _pykernel

try:
    from . import _ckernel
except ImportError:  # extension not built
    _ckernel = None

ENV_VAR = "DRNET_BACKEND"
_BY_NAME = {"python": _pykernel, "c": _ckernel}


def available() -> list[str]:
    return [name for name, mod in _BY_NAME.items() if mod is not None]


def get(name: str | None = None):
    name = (name or os.environ.get(ENV_VAR) or "auto").lower()
    if name == "auto":
        return _ckernel if _ckernel is not None else _pykernel
    if name not in _BY_NAME:
        raise ValueError(f"unknown backend {name!r}; choose auto, c or python")
    if _BY_NAME[name] is None:
        raise ImportError("compiled kernel requested but drnet._ckernel is not built")
    return _BY_NAME[name]


def reload_compiled():
    """Re-import the extension (after an in-place build)."""
    global _ckernel
    try:
        _ckernel = importlib.import_module("drnet._ckernel")
    except ImportError:
        _ckernel = None
    _BY_NAME["c"] = _ckernel
    return _ckernel
