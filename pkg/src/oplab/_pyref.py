"""Pure-numpy reference implementation of the hot pair-sum kernels.

Semantics match oplab._core exactly; accumulation order per output entry is
the table order (np.bincount adds sequentially over the input array).
"""

import numpy as np

BACKEND = "python"


def pair_accumulate(out, a, b, oi, ai, bi, w):
    """out[oi[t]] += w[t] * a[ai[t]] * b[bi[t]] for every table entry t."""
    prod = w * (a[ai] * b[bi])
    n = out.shape[0]
    out += np.bincount(oi, weights=prod.real, minlength=n) \
        + 1j * np.bincount(oi, weights=prod.imag, minlength=n)
    return out


def abs2_accumulate(out, a, oi, ai, w):
    """out[oi[t]] += w[t] * |a[ai[t]]|^2 for every table entry t."""
    g = a[ai]
    contrib = w * (g.real * g.real + g.imag * g.imag)
    out += np.bincount(oi, weights=contrib, minlength=out.shape[0])
    return out
