"""Numpy fallback for the compiled kernels (same semantics, same results)."""
import numpy as np

_TWO53 = 1.0 / 9007199254740992.0


def _unit(raw):
    return (raw >> np.uint64(11)).astype(np.float64) * _TWO53


def sample_shared(cdf, raw):
    return np.searchsorted(cdf, _unit(raw), side="right").astype(np.int64)


def sample_rows(cdf, rows, raw):
    u = _unit(raw)
    out = np.empty(u.shape[0], dtype=np.int64)
    order = np.argsort(rows, kind="stable")
    sorted_rows = rows[order]
    starts = np.flatnonzero(np.r_[True, sorted_rows[1:] != sorted_rows[:-1]])
    stops = np.r_[starts[1:], sorted_rows.shape[0]]
    for a, b in zip(starts, stops):
        idx = order[a:b]
        out[idx] = np.searchsorted(cdf[sorted_rows[a]], u[idx], side="right")
    return out


def dobrushin(P):
    P = np.asarray(P, dtype=np.float64)
    best = 0.0
    # chunk the pairwise distances to bound memory at O(k * c * 64)
    for start in range(0, P.shape[0], 64):
        block = P[start:start + 64]
        d = 0.5 * np.abs(block[:, None, :] - P[None, :, :]).sum(axis=2)
        best = max(best, float(d.max(initial=0.0)))
    return best
