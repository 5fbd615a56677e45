"""Backend selection.

SHELLSPH_BACKEND=numpy forces the vectorised fallback; SHELLSPH_BACKEND=numba
forces the compiled path (raising if numba is unavailable).  Unset, the
compiled path is used when numba imports cleanly.
"""

import os

from . import numpy_backend


def get_backend(name=None):
    if name is None:
        name = os.environ.get("SHELLSPH_BACKEND", "auto").lower()
    if name in ("", "auto"):
        try:
            from . import numba_backend
            return numba_backend
        except ImportError:
            return numpy_backend
    if name == "numpy":
        return numpy_backend
    if name == "numba":
        from . import numba_backend
        return numba_backend
    raise ValueError(f"unknown backend {name!r} (use 'numpy' or 'numba')")
