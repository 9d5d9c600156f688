"""Pure numpy fallback for the compiled kernels."""
import numpy as np


def alti_relevance(attn, head_values, residual, outputs, chunk=64):
    """Clipped L1 relevance of every source token to every output position.

    ``r[i, j] = max(0, |y_i|_1 - |y_i - T_i(x_j)|_1)`` for ``j <= i`` and 0 above
    the diagonal, where ``T_i(x_j) = sum_h attn[h,i,j] head_values[h,j] + [i==j] residual[i]``.
    Rows are processed in blocks of ``chunk`` to bound the (chunk, n, d) temporary.
    """
    n = attn.shape[1]
    r = np.zeros((n, n))
    ynorm = np.abs(outputs).sum(axis=1)
    for s in range(0, n, chunk):
        e = min(n, s + chunk)
        t = np.einsum("hij,hjd->ijd", attn[:, s:e, :], head_values)
        rows = np.arange(s, e)
        t[rows - s, rows] += residual[s:e]
        dist = np.abs(outputs[s:e, None, :] - t).sum(axis=-1)
        r[s:e] = np.tril(np.maximum(0.0, ynorm[s:e, None] - dist), k=s)
    return r
