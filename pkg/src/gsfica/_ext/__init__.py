"""Hot kernel for the FastICA fixed-point map.

``accumulate(W, X, codes)`` returns the two sample averages the update needs,
``mean_t g_i'(w_i.x(t))`` and ``mean_t g_i(w_i.x(t)) x(t)``, for the built-in
nonlinearities (codes 0 kurtosis, 1 gauss, 2 tanh).  The compiled Cython
version is used when it was built; otherwise the numpy fallback below is
selected at import.  Set ``GSFICA_PURE_PYTHON=1`` to force the fallback.
"""
import os

from ._pykernel import accumulate as accumulate_py

BACKEND = "python"
accumulate = accumulate_py

if not os.environ.get("GSFICA_PURE_PYTHON"):
    try:
        from ._ckernel import accumulate as accumulate_c
    except ImportError:  # extension not built
        accumulate_c = None
    else:
        accumulate = accumulate_c
        BACKEND = "cython"
else:
    accumulate_c = None

__all__ = ["accumulate", "accumulate_py", "accumulate_c", "BACKEND"]
