"""Backend selection for the exploration kernel.

The compiled extension is used when it imports; otherwise, or when the
environment variable ``ARBOREAL_PURE_PYTHON`` is set to a non-empty value,
the numpy implementation is used. Both produce identical output.
"""

from __future__ import annotations

import os

from . import _explore_py

try:
    from . import _explore as _explore_ext
except ImportError:  # extension not built
    _explore_ext = None

BACKENDS = {"python": _explore_py.explore}
if _explore_ext is not None:
    BACKENDS["compiled"] = _explore_ext.explore

if _explore_ext is not None and not os.environ.get("ARBOREAL_PURE_PYTHON"):
    DEFAULT_BACKEND = "compiled"
else:
    DEFAULT_BACKEND = "python"


def get_explore(backend: str | None = None):
    name = backend or DEFAULT_BACKEND
    try:
        return BACKENDS[name]
    except KeyError:
        raise ValueError(f"unknown or unavailable backend {name!r}; have {sorted(BACKENDS)}") from None
