# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled pair-sum kernels for the truncated convolution right-hand sides.

Semantics match oplab._pyref; see there for the contract.
"""

import numpy as np
cimport numpy as cnp

cnp.import_array()

BACKEND = "compiled"


def pair_accumulate(cnp.complex128_t[::1] out,
                    cnp.complex128_t[::1] a,
                    cnp.complex128_t[::1] b,
                    cnp.int32_t[::1] oi,
                    cnp.int32_t[::1] ai,
                    cnp.int32_t[::1] bi,
                    cnp.float64_t[::1] w):
    cdef Py_ssize_t t, n = oi.shape[0]
    for t in range(n):
        out[oi[t]] = out[oi[t]] + w[t] * a[ai[t]] * b[bi[t]]
    return np.asarray(out)


def abs2_accumulate(cnp.float64_t[::1] out,
                    cnp.complex128_t[::1] a,
                    cnp.int32_t[::1] oi,
                    cnp.int32_t[::1] ai,
                    cnp.float64_t[::1] w):
    cdef Py_ssize_t t, n = oi.shape[0]
    cdef cnp.complex128_t g
    for t in range(n):
        g = a[ai[t]]
        out[oi[t]] += w[t] * (g.real * g.real + g.imag * g.imag)
    return np.asarray(out)
