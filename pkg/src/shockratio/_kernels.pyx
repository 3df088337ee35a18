# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled versions of the hot loops; same signatures as ``_kernels_py``."""
import numpy as np
cimport numpy as cnp
from libc.math cimport log

cnp.import_array()


def causal_convolve(const double[::1] kernel, const double[::1] signal):
    """out[i] = sum_{j<=i} kernel[j] * signal[i-j] for i < len(signal)."""
    cdef Py_ssize_t m = signal.shape[0]
    cdef Py_ssize_t k = kernel.shape[0]
    cdef Py_ssize_t i, j, top, base
    cdef double a0, a1, a2, a3
    out = np.zeros(m, dtype=np.float64)
    # reversed signal makes both operands of the inner product contiguous
    rev_arr = np.ascontiguousarray(signal[::-1])
    cdef double[::1] rev = rev_arr
    cdef double[::1] o = out
    for i in range(m):
        top = i + 1 if i < k else k
        base = m - 1 - i
        a0 = a1 = a2 = a3 = 0.0
        j = 0
        # four independent accumulators break the add dependency chain
        while j + 4 <= top:
            a0 += kernel[j] * rev[base + j]
            a1 += kernel[j + 1] * rev[base + j + 1]
            a2 += kernel[j + 2] * rev[base + j + 2]
            a3 += kernel[j + 3] * rev[base + j + 3]
            j += 4
        while j < top:
            a0 += kernel[j] * rev[base + j]
            j += 1
        o[i] = (a0 + a1) + (a2 + a3)
    return out


def lattice_renewal(const long long[::1] shifts, const double[::1] probs, Py_ssize_t size, Py_ssize_t n_max):
    """Survival recursion on an integer lattice with per-step normalisation.

    ``c_0 = 1`` on ``0..size-1``; ``c_{n+1}[i] = sum_a probs[a] c_n[i - shifts[a]]``
    (terms with a negative index vanish).  Returns ``log c_n[size-1]`` for
    ``n = 0..n_max``.
    """
    cdef Py_ssize_t a, i, n, s
    cdef Py_ssize_t na = shifts.shape[0]
    cdef double p, scale, logacc = 0.0
    cur_arr = np.ones(size, dtype=np.float64)
    new_arr = np.empty(size, dtype=np.float64)
    logs = np.zeros(n_max + 1, dtype=np.float64)
    cdef double[::1] cur = cur_arr
    cdef double[::1] new = new_arr
    cdef double[::1] lg = logs
    cdef double[::1] tmp
    for n in range(n_max):
        for i in range(size):
            new[i] = 0.0
        for a in range(na):
            s = shifts[a]
            p = probs[a]
            if s >= size:
                continue
            for i in range(s, size):
                new[i] += p * cur[i - s]
        scale = new[size - 1]
        if scale <= 0.0:
            for i in range(n + 1, n_max + 1):
                lg[i] = -np.inf
            return logs
        for i in range(size):
            new[i] /= scale
        logacc += log(scale)
        lg[n + 1] = logacc
        tmp = cur
        cur = new
        new = tmp
    return logs
