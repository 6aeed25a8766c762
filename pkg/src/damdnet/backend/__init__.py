"""Kernel backend selection.

The hot kernels (convolution forward/backward, z-buffer triangle fill) exist
twice: a compiled Cython extension (`_native`) and a pure-NumPy fallback
(`numpy_kernels`).  The compiled one is used when it imports cleanly; set
``DAMDNET_PURE_PYTHON=1`` to force the fallback (the benchmark does this to
compare the two).
"""

import os

from . import numpy_kernels

if os.environ.get("DAMDNET_PURE_PYTHON") == "1":
    kernels = numpy_kernels
else:
    try:
        from . import _native as kernels  # type: ignore[no-redef]
    except ImportError:
        kernels = numpy_kernels

BACKEND = kernels.NAME


def available_backends():
    """Return the importable kernel modules keyed by name."""
    mods = {numpy_kernels.NAME: numpy_kernels}
    try:
        from . import _native

        mods[_native.NAME] = _native
    except ImportError:
        pass
    return mods
