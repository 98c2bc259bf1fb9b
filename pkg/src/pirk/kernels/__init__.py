"""Backend dispatch for the hot convolution kernels.

Set PIRK_BACKEND=numpy to force the pure-numpy path, PIRK_BACKEND=numba to
require the compiled path. Unset, numba is used when importable and numpy
otherwise. `benchmarks/bench_kernels.py` compares the two.
"""

import os

from . import numpy_ops

_requested = os.environ.get("PIRK_BACKEND", "").strip().lower()

if _requested == "numpy":
    _impl = numpy_ops
    BACKEND = "numpy"
elif _requested in ("", "numba"):
    try:
        from . import numba_ops as _impl

        BACKEND = "numba"
    except ImportError:
        if _requested == "numba":
            raise
        _impl = numpy_ops
        BACKEND = "numpy"
else:
    raise ValueError(
        f"unknown PIRK_BACKEND={_requested!r} (expected 'numba' or 'numpy')"
    )

conv2d_forward = _impl.conv2d_forward
conv2d_grad_input = _impl.conv2d_grad_input
conv2d_grad_weights = _impl.conv2d_grad_weights

__all__ = [
    "BACKEND",
    "conv2d_forward",
    "conv2d_grad_input",
    "conv2d_grad_weights",
]
