"""Backend selection for the hot kernels.

The compiled extension is preferred; set ``WINGBEAT_PURE_PYTHON=1`` to force the
numpy fallback.
"""
import os

from . import _pykernels

if os.environ.get("WINGBEAT_PURE_PYTHON"):
    _impl = _pykernels
else:
    try:
        from . import _ckernels as _impl
    except ImportError:
        _impl = _pykernels

BACKEND = _impl.BACKEND
im2col = _impl.im2col
maxpool_forward = _impl.maxpool_forward
maxpool_backward = _impl.maxpool_backward
polyphase_resample = _impl.polyphase_resample


def available_backends():
    """Map backend name to module for every backend importable in this environment."""
    found = {"numpy": _pykernels}
    try:
        from . import _ckernels
    except ImportError:
        pass
    else:
        found["cython"] = _ckernels
    return found
