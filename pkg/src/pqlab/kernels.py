"""Kernel backend selection.

Imports the compiled Cython core when it is built, otherwise the NumPy
reference backend.  Force a backend with PQLAB_KERNELS=python|cython.
"""

import os

from . import _kernels_py

_choice = os.environ.get("PQLAB_KERNELS", "").strip().lower()

if _choice == "python":
    _impl = _kernels_py
    BACKEND = "python"
elif _choice == "cython":
    from . import _kernels_cy as _impl  # noqa: F401  (raises if not built)

    BACKEND = "cython"
else:
    try:
        from . import _kernels_cy as _impl

        BACKEND = "cython"
    except ImportError:
        _impl = _kernels_py
        BACKEND = "python"

grad_pow_sum_1d = _impl.grad_pow_sum_1d
grad_pow_grad_1d = _impl.grad_pow_grad_1d
grad_pow_sum_2d = _impl.grad_pow_sum_2d
grad_pow_grad_2d = _impl.grad_pow_grad_2d
abs_pow_sum = _impl.abs_pow_sum
abs_pow_grad = _impl.abs_pow_grad


def backend_name():
    return BACKEND
