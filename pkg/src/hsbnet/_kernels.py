"""Kernel backend selection.

The compiled extension is used when it imports; setting HSB_PURE=1 forces
the numpy fallback.
"""

import os

if os.environ.get("HSB_PURE", "") not in ("", "0"):
    from ._pure import BACKEND, gather, jacobi_svd, scatter
else:
    try:
        from ._ckernels import BACKEND, gather, jacobi_svd, scatter
    except ImportError:
        from ._pure import BACKEND, gather, jacobi_svd, scatter

__all__ = ["BACKEND", "gather", "scatter", "jacobi_svd"]
