"""Kernel backend selection.

Prefers the compiled Cython extension when importable, otherwise falls back
to the numpy implementations. `GROUPDANCE_BACKEND=numpy|compiled` forces a
choice (forcing `compiled` raises if the extension is missing, instead of
silently degrading).
"""

import os

from . import numpy_backend

_forced = os.environ.get("GROUPDANCE_BACKEND", "").strip().lower()

if _forced == "numpy":
    backend = numpy_backend
elif _forced == "compiled":
    from . import _ckern as backend  # noqa: F401  (ImportError is the point)
else:
    try:
        from . import _ckern as backend
    except ImportError:
        backend = numpy_backend

attn_forward = backend.attn_forward
attn_backward = backend.attn_backward
fk_positions = backend.fk_positions
sixd_to_matrix_batch = backend.sixd_to_matrix_batch


def backend_name() -> str:
    return backend.NAME
