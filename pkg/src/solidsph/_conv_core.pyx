# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled backend for the correlation primitives.

Direct triple-loop correlation; kernel values are laid out offset-major with
the kernel index contiguous so the innermost accumulation vectorizes. Border
handling clips the offset range instead of materializing a padded copy.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()


cdef inline void _accumulate(const double[:, :, ::1] vol,
                             const double[:, ::1] kmat,
                             double[::1] acc,
                             Py_ssize_t x1, Py_ssize_t x2, Py_ssize_t x3,
                             Py_ssize_t c, Py_ssize_t h) noexcept nogil:
    cdef Py_ssize_t d1 = vol.shape[0], d2 = vol.shape[1], d3 = vol.shape[2]
    cdef Py_ssize_t n_cols = kmat.shape[1]
    cdef Py_ssize_t u1, u2, u3, k, base1, base2, off
    cdef Py_ssize_t lo1, hi1, lo2, hi2, lo3, hi3
    cdef double v
    for k in range(n_cols):
        acc[k] = 0.0
    lo1 = -h if x1 >= h else -x1
    hi1 = h if x1 + h < d1 else d1 - 1 - x1
    lo2 = -h if x2 >= h else -x2
    hi2 = h if x2 + h < d2 else d2 - 1 - x2
    lo3 = -h if x3 >= h else -x3
    hi3 = h if x3 + h < d3 else d3 - 1 - x3
    for u1 in range(lo1, hi1 + 1):
        base1 = (u1 + h) * c * c
        for u2 in range(lo2, hi2 + 1):
            base2 = base1 + (u2 + h) * c
            for u3 in range(lo3, hi3 + 1):
                v = vol[x1 + u1, x2 + u2, x3 + u3]
                off = base2 + u3 + h
                for k in range(n_cols):
                    acc[k] += v * kmat[off, k]


def correlate3d_kmat(const double[:, :, ::1] vol, const double[:, ::1] kmat,
                     Py_ssize_t c, Py_ssize_t n_k, Py_ssize_t stride, bint pad):
    """Correlate against kernels flattened to a (c^3, 2*n_k) [Re | Im] matrix."""
    cdef Py_ssize_t h = (c - 1) // 2
    cdef Py_ssize_t start = 0 if pad else h
    cdef Py_ssize_t o1 = (vol.shape[0] - 1 - 2 * start) // stride + 1
    cdef Py_ssize_t o2 = (vol.shape[1] - 1 - 2 * start) // stride + 1
    cdef Py_ssize_t o3 = (vol.shape[2] - 1 - 2 * start) // stride + 1
    out = np.empty((n_k, o1, o2, o3), dtype=np.complex128)
    cdef double complex[:, :, :, ::1] outv = out
    acc_arr = np.empty(2 * n_k, dtype=np.float64)
    cdef double[::1] acc = acc_arr
    cdef Py_ssize_t i1, i2, i3, k
    with nogil:
        for i1 in range(o1):
            for i2 in range(o2):
                for i3 in range(o3):
                    _accumulate(vol, kmat, acc,
                                start + i1 * stride, start + i2 * stride,
                                start + i3 * stride, c, h)
                    for k in range(n_k):
                        outv[k, i1, i2, i3] = acc[k] + 1j * acc[n_k + k]
    return out


def project_at_voxels_kmat(const double[:, :, ::1] vol, const double[:, ::1] kmat,
                           Py_ssize_t c, Py_ssize_t n_k,
                           const Py_ssize_t[:, ::1] positions):
    cdef Py_ssize_t h = (c - 1) // 2
    cdef Py_ssize_t n_pos = positions.shape[0]
    out = np.empty((n_k, n_pos), dtype=np.complex128)
    cdef double complex[:, ::1] outv = out
    acc_arr = np.empty(2 * n_k, dtype=np.float64)
    cdef double[::1] acc = acc_arr
    cdef Py_ssize_t p, k
    with nogil:
        for p in range(n_pos):
            _accumulate(vol, kmat, acc, positions[p, 0], positions[p, 1],
                        positions[p, 2], c, h)
            for k in range(n_k):
                outv[k, p] = acc[k] + 1j * acc[n_k + k]
    return out
