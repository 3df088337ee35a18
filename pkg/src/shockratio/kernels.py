"""Kernel backend selection.

The compiled extension is used when it imports; otherwise the numpy
fallback.  ``SHOCKRATIO_KERNELS=python`` forces the fallback.
"""
import os

from . import _kernels_py

BACKEND = "python"
_impl = _kernels_py
if os.environ.get("SHOCKRATIO_KERNELS", "").lower() != "python":
    try:
        from . import _kernels as _impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:
        _impl = _kernels_py

causal_convolve = _impl.causal_convolve
lattice_renewal = _impl.lattice_renewal

__all__ = ["BACKEND", "causal_convolve", "lattice_renewal"]
