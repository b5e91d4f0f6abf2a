"""Kernel backend selection.

The compiled extension is preferred; ``LOCOGYM_BACKEND=python`` forces the
pure-Python kernels (also used automatically when the extension is not built).
"""

from __future__ import annotations

import importlib
import os
from types import ModuleType

from . import _pykernels

_ENV_VAR = "LOCOGYM_BACKEND"


def load_backend(name: str | None = None) -> ModuleType:
    """Return the kernel module for ``name`` ("cython", "python" or None for auto)."""
    if name is None:
        name = os.environ.get(_ENV_VAR, "auto")
    if name == "python":
        return _pykernels
    try:
        return importlib.import_module("locogym.dynamics._ckernels")
    except ImportError:
        if name == "cython":
            raise
        return _pykernels


def available_backends() -> list[str]:
    names = ["python"]
    try:
        importlib.import_module("locogym.dynamics._ckernels")
        names.insert(0, "cython")
    except ImportError:
        pass
    return names


kernels = load_backend()
BACKEND: str = kernels.BACKEND
