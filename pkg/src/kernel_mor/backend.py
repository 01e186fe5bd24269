"""Select the compiled or pure-Python hot kernels at import time.

Set ``KERNEL_MOR_BACKEND=python`` to force the NumPy fallback.
"""
import os

from . import _pykernels

if os.environ.get("KERNEL_MOR_BACKEND", "").lower() == "python":
    _impl = _pykernels
    BACKEND = "python"
else:
    try:
        from . import _ckernels as _impl

        BACKEND = "cython"
    except ImportError:
        _impl = _pykernels
        BACKEND = "python"

LINEAR = _pykernels.LINEAR
POLYNOMIAL = _pykernels.POLYNOMIAL
GAUSSIAN = _pykernels.GAUSSIAN

rk4_polynomial = _impl.rk4_polynomial
pi_and_jacobian = _impl.pi_and_jacobian
