"""NumPy backend for the correlation primitives.

Works on sliding windows reshaped slab by slab into a GEMM against the
flattened kernel stack; real and imaginary kernel parts are stacked so each
slab costs a single real matrix product.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def _kernel_matrix(kernels: np.ndarray) -> np.ndarray:
    """(c^3, 2K) real matrix: [Re | Im] columns of the flattened kernels."""
    k = kernels.reshape(kernels.shape[0], -1)
    return np.concatenate([k.real, k.imag], axis=0).T.copy()


def correlate3d(vol: np.ndarray, kernels: np.ndarray, stride: int,
                pad: bool) -> np.ndarray:
    """Correlate a real volume with a stack of complex cubic kernels.

    Output value at index o is sum_u vol[o*stride (+h) + u] * k[u + h] over
    kernel offsets u in [-h, h]^3, with out-of-range volume values treated as
    zero when ``pad`` is set.
    """
    vol = np.ascontiguousarray(vol, dtype=np.float64)
    kernels = np.asarray(kernels, dtype=np.complex128)
    n_k, c = kernels.shape[0], kernels.shape[1]
    h = (c - 1) // 2
    if pad:
        padded = np.zeros(tuple(d + 2 * h for d in vol.shape))
        padded[h:h + vol.shape[0], h:h + vol.shape[1], h:h + vol.shape[2]] = vol
    else:
        padded = vol
    windows = sliding_window_view(padded, (c, c, c))[::stride, ::stride, ::stride]
    o1, o2, o3 = windows.shape[:3]
    kmat = _kernel_matrix(kernels)
    out = np.empty((n_k, o1, o2, o3), dtype=np.complex128)
    for i in range(o1):
        slab = windows[i].reshape(o2 * o3, c ** 3)
        res = slab @ kmat
        out[:, i] = (res[:, :n_k] + 1j * res[:, n_k:]).T.reshape(n_k, o2, o3)
    return out


def project_at_voxels(vol: np.ndarray, kernels: np.ndarray,
                      positions: np.ndarray) -> np.ndarray:
    """Correlation responses at selected voxel positions (zero-padded)."""
    vol = np.ascontiguousarray(vol, dtype=np.float64)
    kernels = np.asarray(kernels, dtype=np.complex128)
    positions = np.asarray(positions, dtype=np.intp)
    n_k, c = kernels.shape[0], kernels.shape[1]
    h = (c - 1) // 2
    padded = np.zeros(tuple(d + 2 * h for d in vol.shape))
    padded[h:h + vol.shape[0], h:h + vol.shape[1], h:h + vol.shape[2]] = vol
    patches = np.empty((positions.shape[0], c ** 3))
    for i, (x1, x2, x3) in enumerate(positions):
        patches[i] = padded[x1:x1 + c, x2:x2 + c, x3:x3 + c].ravel()
    res = patches @ _kernel_matrix(kernels)
    return (res[:, :n_k] + 1j * res[:, n_k:]).T.copy()
