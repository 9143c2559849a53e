"""Backend selection for the attention core.

The compiled extension is used when it imports; otherwise the numpy version.
Set ``CULGEN_KERNELS=python`` to force the fallback or ``CULGEN_KERNELS=cython``
to fail loudly if the extension is missing.

Even with the extension loaded, problems larger than ``SMALL_WORK`` multiply-adds
(``SMALL_WORK_BACKWARD`` for gradients) go to numpy: BLAS wins there, while the
compiled loops win on the small adapter shapes where per-call overhead dominates.
"""

import os
import warnings

import numpy as np

from . import _kernels_py

_choice = os.environ.get("CULGEN_KERNELS", "").strip().lower()

if _choice == "python":
    _impl = _kernels_py
    BACKEND = "python"
else:
    try:
        from . import _kernels as _impl
        BACKEND = "cython"
    except ImportError as exc:
        if _choice == "cython":
            raise
        warnings.warn(f"culgen: compiled kernels unavailable ({exc}); using numpy fallback")
        _impl = _kernels_py
        BACKEND = "python"


SMALL_WORK = 8192  # forward; the backward loops lose to BLAS sooner
SMALL_WORK_BACKWARD = 2048


def _pick(lq, lk, d, limit=SMALL_WORK):
    return _impl if lq * lk * d <= limit else _kernels_py


def _c64(a):
    return np.ascontiguousarray(a, dtype=np.float64)


def attention_forward(q, k, v, scale):
    """Softmax attention ``softmax(q k^T scale) v``; returns ``(out, weights)``."""
    q, k, v = _c64(q), _c64(k), _c64(v)
    return _pick(q.shape[0], k.shape[0], q.shape[1]).attention_forward(q, k, v, float(scale))


def attention_backward(dout, w, q, k, v, scale):
    """Return ``(dq, dk, dv)`` for the attention core."""
    q, k = _c64(q), _c64(k)
    return _pick(q.shape[0], k.shape[0], q.shape[1], SMALL_WORK_BACKWARD).attention_backward(
        _c64(dout), _c64(w), q, k, _c64(v), float(scale))
