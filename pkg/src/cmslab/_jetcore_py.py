"""Numpy fallback for the truncated-product kernel.

Same contract as the compiled ``_jetcore.mul_truncated``; the pair tables are
sorted by output index so the products can be folded with ``reduceat``.
"""

import numpy as np


def mul_truncated(a, b, ia, ib, ko, n_out):
    prod = a[ia] * b[ib]
    starts = np.flatnonzero(np.r_[True, ko[1:] != ko[:-1]])
    out = np.add.reduceat(prod, starts, axis=0)
    if out.shape[0] != n_out:
        raise ValueError("pair table does not cover every output coefficient")
    return out
