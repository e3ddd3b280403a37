"""Backend selection for the hot kernels.

The compiled extension (oplab._core, Cython) is preferred; the numpy
reference (oplab._pyref) is the fallback.  OPLAB_BACKEND=python or
OPLAB_BACKEND=compiled forces the choice; forcing 'compiled' when the
extension is missing is an error.
"""

import os

from . import _pyref

_requested = os.environ.get("OPLAB_BACKEND", "").strip().lower()

if _requested == "python":
    impl = _pyref
else:
    try:
        from . import _core as impl
    except ImportError:
        if _requested == "compiled":
            raise ImportError(
                "OPLAB_BACKEND=compiled but the oplab._core extension is not built")
        impl = _pyref


def backend_name():
    return impl.BACKEND


def pair_accumulate(out, a, b, oi, ai, bi, w):
    return impl.pair_accumulate(out, a, b, oi, ai, bi, w)


def abs2_accumulate(out, a, oi, ai, w):
    return impl.abs2_accumulate(out, a, oi, ai, w)
