"""Hot-loop kernels with a compiled backend and a numpy fallback.

The compiled module is used when it imports cleanly; set
``MVFLOW_PURE_PYTHON=1`` to force the fallback.
"""
import os

import numpy as np

from . import _kernels_py

BACKEND = "python"
_impl = _kernels_py
if os.environ.get("MVFLOW_PURE_PYTHON") != "1":
    try:
        from . import _kernels as _impl  # type: ignore[no-redef]

        BACKEND = "compiled"
    except ImportError:
        _impl = _kernels_py


def build_cdf(p):
    """Cumulative table for inverse-CDF sampling from weights ``p``.

    Entries from the last positive weight on are pinned to 1.0, so a
    uniform in [0, 1) never lands on a zero-weight tail state.
    Works row-wise on 2-d input.
    """
    p = np.asarray(p, dtype=np.float64)
    total = p.sum(axis=-1, keepdims=True)
    if np.any(total <= 0):
        raise ValueError("cannot sample from a zero measure")
    cdf = np.cumsum(p, axis=-1) / total
    pos = p > 0
    last = p.shape[-1] - 1 - np.argmax(pos[..., ::-1], axis=-1)
    cols = np.arange(p.shape[-1])
    cdf[cols >= np.expand_dims(last, -1)] = 1.0
    return np.ascontiguousarray(cdf)


def sample_shared(cdf, raw):
    return _impl.sample_shared(np.ascontiguousarray(cdf, dtype=np.float64),
                               np.ascontiguousarray(raw, dtype=np.uint64))


def sample_rows(cdf, rows, raw):
    return _impl.sample_rows(np.ascontiguousarray(cdf, dtype=np.float64),
                             np.ascontiguousarray(rows, dtype=np.int64),
                             np.ascontiguousarray(raw, dtype=np.uint64))


def dobrushin(P):
    return float(_impl.dobrushin(np.ascontiguousarray(P, dtype=np.float64)))


__all__ = ["BACKEND", "build_cdf", "sample_shared", "sample_rows", "dobrushin"]
