"""Kernel backend selection.

The compiled extension ``_fastkern`` (Cython) is preferred when it imported
cleanly; set ``EEGFACTOR_BACKEND=numpy`` or ``=compiled`` to force a choice.
Both backends expose the same four entry points and are checked against each
other in the test suite.
"""

import os

from . import _kernels_np

_requested = os.environ.get("EEGFACTOR_BACKEND", "auto").lower()

_compiled = None
if _requested in ("auto", "compiled"):
    try:
        from . import _fastkern as _compiled  # noqa: F401
    except ImportError:
        _compiled = None
        if _requested == "compiled":
            raise ImportError(
                "EEGFACTOR_BACKEND=compiled but the _fastkern extension is not built; "
                "run `pip install -e . --no-build-isolation` with a C compiler available"
            )

if _compiled is not None:
    BACKEND_NAME = "compiled"
    _impl = _compiled
else:
    BACKEND_NAME = "numpy"
    _impl = _kernels_np

conv2d_forward = _impl.conv2d_forward
conv2d_backward = _impl.conv2d_backward
avgpool_forward = _impl.avgpool_forward
avgpool_backward = _impl.avgpool_backward


def get_backend(name):
    """Return the kernel module for an explicit backend name (for benchmarks/tests)."""
    if name == "numpy":
        return _kernels_np
    if name == "compiled":
        if _compiled is None:
            raise ImportError("compiled backend not available")
        return _compiled
    raise ValueError(f"unknown backend {name!r}")
