"""Kernel dispatch: the compiled extension when importable, numpy otherwise.

Set ``CTXATTR_PURE_PYTHON=1`` to force the fallback.
"""
import os

import numpy as np

from . import _kernels_py

_compiled = None
if not os.environ.get("CTXATTR_PURE_PYTHON"):
    try:
        from . import _kernels as _compiled
    except ImportError:  # extension not built
        _compiled = None

BACKEND = "compiled" if _compiled is not None else "python"


def alti_relevance(attn, head_values, residual, outputs, backend=None):
    attn = np.ascontiguousarray(attn, dtype=np.float64)
    head_values = np.ascontiguousarray(head_values, dtype=np.float64)
    residual = np.ascontiguousarray(residual, dtype=np.float64)
    outputs = np.ascontiguousarray(outputs, dtype=np.float64)
    H, n, n2 = attn.shape
    if n != n2 or head_values.shape[:2] != (H, n) or residual.shape != outputs.shape \
            or outputs.shape[0] != n or head_values.shape[2] != outputs.shape[1]:
        raise ValueError("inconsistent shapes for alti_relevance")
    backend = backend or BACKEND
    if backend == "compiled":
        if _compiled is None:
            raise RuntimeError("compiled kernels are not available")
        return _compiled.alti_relevance(attn, head_values, residual, outputs)
    if backend == "python":
        return _kernels_py.alti_relevance(attn, head_values, residual, outputs)
    raise ValueError(f"unknown backend {backend!r}")
