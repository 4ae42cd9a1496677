"""Kernel backend selection.

The compiled ``_core`` extension is used when it imports; otherwise the
pure-Python ``_pure`` module.  Set ``MODCL_PURE=1`` to force the fallback.
"""

import os

from . import _pure

try:
    if os.environ.get("MODCL_PURE"):
        raise ImportError("pure backend forced by MODCL_PURE")
    from . import _core as _impl

    BACKEND = "compiled"
except ImportError:
    _impl = _pure
    BACKEND = "pure"

bnb_search = _impl.bnb_search
greedy_nms = _impl.greedy_nms


def get_backend(name=None):
    """Return the kernel module for ``name`` ("compiled", "pure" or None for the active one)."""
    if name is None:
        return _impl
    if name == "pure":
        return _pure
    if name == "compiled":
        from . import _core

        return _core
    raise ValueError(f"unknown backend {name!r}")
