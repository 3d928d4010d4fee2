"""Kernel backend selection.

The compiled extension is used when it imports; otherwise, or when the
environment variable ``CLIQUE_FACTORY_PURE_PYTHON`` is set to a non-empty
value other than ``0``, the pure-Python twin is used. Both expose the same
functions with the same results.
"""
from __future__ import annotations

import importlib
import os

from . import _pykernels

_FUNCTIONS = ("hopcroft_karp", "bmatch", "random_matching", "min_cross_degree",
              "batch_regular", "batch_random_matching")


def _load_compiled():
    try:
        return importlib.import_module(f"{__package__}._ckernels")
    except ImportError:
        return None


_compiled = _load_compiled()


def compiled_available() -> bool:
    return _compiled is not None


def get_backend(name: str | None = None):
    """Return a kernel module: ``"compiled"``, ``"python"`` or ``None`` for the default."""
    if name is None:
        forced = os.environ.get("CLIQUE_FACTORY_PURE_PYTHON", "")
        name = "python" if forced not in ("", "0") or _compiled is None else "compiled"
    if name == "python":
        return _pykernels
    if name == "compiled":
        if _compiled is None:
            raise ImportError("compiled kernels are not built; reinstall with a C compiler")
        return _compiled
    raise ValueError(f"unknown kernel backend {name!r}")


backend = get_backend()
BACKEND_NAME = "python" if backend is _pykernels else "compiled"

hopcroft_karp = backend.hopcroft_karp
bmatch = backend.bmatch
random_matching = backend.random_matching
min_cross_degree = backend.min_cross_degree
batch_regular = backend.batch_regular
batch_random_matching = backend.batch_random_matching
