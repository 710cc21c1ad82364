"""Kernel backend selection.

Hot inner loops (betweenness accumulation, neighbor aggregation) have two
implementations: a numba ``@njit`` build and a pure-numpy fallback.  The
``PATCHFUSE_BACKEND`` environment variable picks one:

    PATCHFUSE_BACKEND=numba    force numba (error if not importable)
    PATCHFUSE_BACKEND=numpy    force the pure-numpy path

Unset, numba is used when importable, numpy otherwise.  Both paths produce
bit-identical results (accumulation order is fixed); only speed differs.
numba is imported lazily on first kernel use so that cheap subcommands do
not pay its import/compile cost.
"""

from __future__ import annotations

import os
import warnings

ENV_VAR = "PATCHFUSE_BACKEND"

_resolved: str | None = None


def _numba_available() -> bool:
    try:
        import numba  # noqa: F401
    except ImportError:
        return False
    return True


def active_backend() -> str:
    """Resolve the backend once per process: ``"numba"`` or ``"numpy"``."""
    global _resolved
    if _resolved is None:
        requested = os.environ.get(ENV_VAR, "").strip().lower()
        if requested == "numpy":
            _resolved = "numpy"
        elif requested == "numba":
            if not _numba_available():
                raise ImportError(
                    f"{ENV_VAR}=numba but numba is not importable"
                )
            _resolved = "numba"
        elif requested:
            raise ValueError(
                f"{ENV_VAR} must be 'numba' or 'numpy', got {requested!r}"
            )
        elif _numba_available():
            _resolved = "numba"
        else:
            warnings.warn("numba not found; falling back to pure numpy kernels")
            _resolved = "numpy"
    return _resolved
