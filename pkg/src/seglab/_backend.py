"""Kernel backend selection.

The compiled extension is used when it imports; setting ``SEGLAB_PURE_PYTHON=1``
forces the pure-Python fallback.
"""

import os

from seglab import _fallback

fallback = _fallback

if os.environ.get("SEGLAB_PURE_PYTHON", "") not in ("", "0"):
    backend = _fallback
else:
    try:
        from seglab import _kernels as backend
    except ImportError:  # extension not built
        backend = _fallback

compiled = backend is not _fallback
