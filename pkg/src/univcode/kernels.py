"""Backend selection for the hot loops.

The compiled core is used when it was built and ``UNIVCODE_PURE_PYTHON`` is
unset (or "0"); otherwise the numpy versions in ``_pykernels`` are used.
"""
import os

from . import _pykernels

BACKEND = "python"
_impl = _pykernels

if os.environ.get("UNIVCODE_PURE_PYTHON", "0") in ("", "0"):
    try:
        from . import _ckernels as _impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:  # extension not built
        _impl = _pykernels

logsumexp_affine = _impl.logsumexp_affine
first_match_decode = _impl.first_match_decode

__all__ = ["BACKEND", "logsumexp_affine", "first_match_decode"]
