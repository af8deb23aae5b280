"""Switch between the numba-compiled kernels and the pure-numpy fallback.

Set ``FRACTURA_DISABLE_NUMBA=1`` in the environment before import to force the
numpy path (useful for debugging and for platforms without an LLVM toolchain).
"""
from __future__ import annotations

import os

_FALSY = {"", "0", "false", "no", "off"}


def _numba_available() -> bool:
    try:
        import numba  # noqa: F401
    except ImportError:  # pragma: no cover - numba is a hard dependency
        return False
    return True


USE_NUMBA: bool = (
    os.environ.get("FRACTURA_DISABLE_NUMBA", "0").strip().lower() in _FALSY
    and _numba_available()
)


def backend() -> str:
    """Name of the active kernel backend, ``"numba"`` or ``"numpy"``."""
    return "numba" if USE_NUMBA else "numpy"
