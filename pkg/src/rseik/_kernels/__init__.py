"""Kernel engine selection: compiled extension if available, else pure Python.

Set RSEIK_PURE=1 to force the pure-Python fallback (used by the benchmark
to compare engines).
"""

import os

from . import pure

if os.environ.get("RSEIK_PURE", "") not in ("", "0"):
    impl = pure
    COMPILED = False
else:
    try:
        from . import core as impl  # type: ignore[attr-defined]

        COMPILED = True
    except ImportError:
        impl = pure
        COMPILED = False


def get_engine(name: str = "auto"):
    """Return the kernel module for an engine name: auto | compiled | pure."""
    if name == "auto":
        return impl
    if name == "pure":
        return pure
    if name == "compiled":
        if not COMPILED:
            raise ImportError("compiled kernel module is not available")
        from . import core

        return core
    raise ValueError(f"unknown engine {name!r}")
