"""Pure-numpy fallback for the compiled kernels in ``_kernels.pyx``."""
import numpy as np


def pair_sums(ii, jj, values, table, weights, block=256):
    """Same contract as the compiled ``pair_sums``: per-column ordered-pair sums."""
    ii = np.asarray(ii, dtype=np.int64)
    jj = np.asarray(jj, dtype=np.int64)
    values = np.asarray(values, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)
    n, m = values.shape
    out = np.zeros(m)
    for s in range(0, n, block):
        e = min(s + block, n)
        t = table[np.abs(ii[s:e, None] - ii[None, :]), np.abs(jj[s:e, None] - jj[None, :])]
        t = t * weights[s:e, None] * weights[None, :]
        for c in range(m):
            d = values[s:e, c, None] - values[None, :, c]
            out[c] += np.sum(d * d * t)
    return out
