# Compiled versions of the sampling and contraction hot loops.
# Semantics must match _kernels_py exactly; see tests/test_core_kernels.py.
import numpy as np
cimport numpy as cnp
from libc.math cimport fabs
from libc.stdint cimport uint64_t, int64_t

cnp.import_array()

cdef double _TWO53 = 1.0 / 9007199254740992.0


cdef inline Py_ssize_t _bisect_right(const double[::1] cdf, double u) nogil:
    cdef Py_ssize_t lo = 0, hi = cdf.shape[0], mid
    while lo < hi:
        mid = (lo + hi) >> 1
        if u < cdf[mid]:
            hi = mid
        else:
            lo = mid + 1
    return lo


def sample_shared(const double[::1] cdf, const uint64_t[::1] raw):
    """Inverse-CDF draws from one distribution, one raw word per draw."""
    cdef Py_ssize_t n = raw.shape[0], i
    cdef cnp.ndarray[int64_t, ndim=1] out = np.empty(n, dtype=np.int64)
    cdef int64_t[::1] ov = out
    cdef double u
    with nogil:
        for i in range(n):
            u = <double>(raw[i] >> 11) * _TWO53
            ov[i] = _bisect_right(cdf, u)
    return out


def sample_rows(const double[:, ::1] cdf, const int64_t[::1] rows, const uint64_t[::1] raw):
    """Inverse-CDF draws where draw i uses row ``rows[i]`` of ``cdf``."""
    cdef Py_ssize_t n = raw.shape[0], i
    cdef cnp.ndarray[int64_t, ndim=1] out = np.empty(n, dtype=np.int64)
    cdef int64_t[::1] ov = out
    cdef double u
    with nogil:
        for i in range(n):
            u = <double>(raw[i] >> 11) * _TWO53
            ov[i] = _bisect_right(cdf[rows[i]], u)
    return out


def dobrushin(const double[:, ::1] P):
    """Largest total variation distance between two rows of ``P``."""
    cdef Py_ssize_t k = P.shape[0], c = P.shape[1], i, j, y
    cdef double best = 0.0, acc
    with nogil:
        for i in range(k):
            for j in range(i + 1, k):
                acc = 0.0
                for y in range(c):
                    acc = acc + fabs(P[i, y] - P[j, y])
                acc = 0.5 * acc
                if acc > best:
                    best = acc
    return best
