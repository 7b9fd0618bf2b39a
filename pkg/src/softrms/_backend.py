"""Kernel backend selection.

The compiled extension is used when importable; ``SOFTRMS_BACKEND=python``
forces the numpy fallback and ``SOFTRMS_BACKEND=cython`` makes a missing
extension an error.
"""

import os

_choice = os.environ.get("SOFTRMS_BACKEND", "auto").lower()

if _choice == "python":
    from . import _kernels_py as kernels
elif _choice == "cython":
    from . import _kernels as kernels
elif _choice == "auto":
    try:
        from . import _kernels as kernels
    except ImportError:
        from . import _kernels_py as kernels
else:
    raise ImportError(f"SOFTRMS_BACKEND must be auto, cython or python, not {_choice!r}")

BACKEND = kernels.BACKEND
N_STATS = kernels.N_STATS

__all__ = ["kernels", "BACKEND", "N_STATS"]
