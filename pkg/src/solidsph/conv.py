"""Strided 3D correlation of a real volume with stacks of complex kernels.

Two interchangeable backends implement the same contract: a compiled
extension (`solidsph._conv_core`, built from Cython) and a pure NumPy
implementation that gathers sliding windows into BLAS matrix products. The
choice is made at import time from the ``SOLIDSPH_BACKEND`` environment
variable (``compiled`` | ``numpy`` | ``auto``, default ``auto``).

``auto`` routes each primitive to the implementation that measures faster
(see ``benchmarks/bench_backends.py``): dense strided correlation goes to the
GEMM formulation, scattered per-voxel projection goes to the compiled core.
Without the extension everything runs on NumPy.
"""

from __future__ import annotations

import os

import numpy as np

from . import _conv_numpy

try:
    from . import _conv_core
except ImportError:
    _conv_core = None

POLICY = os.environ.get("SOLIDSPH_BACKEND", "auto")
if POLICY not in ("auto", "compiled", "numpy"):
    raise RuntimeError(f"SOLIDSPH_BACKEND must be auto|compiled|numpy, got {POLICY!r}")
if POLICY == "compiled" and _conv_core is None:
    raise RuntimeError("SOLIDSPH_BACKEND=compiled but solidsph._conv_core is not "
                       "built; run `python setup.py build_ext --inplace`")

_PADDINGS = ("zero", "none")


def backend_for(primitive: str) -> str:
    """Resolved backend name for 'correlate' or 'project'."""
    if POLICY != "auto":
        return POLICY
    if _conv_core is None:
        return "numpy"
    return "numpy" if primitive == "correlate" else "compiled"


def _check_args(vol, kernels, stride, padding):
    vol = np.ascontiguousarray(vol, dtype=np.float64)
    kernels = np.ascontiguousarray(kernels, dtype=np.complex128)
    if vol.ndim != 3:
        raise ValueError(f"volume must be 3D, got shape {vol.shape}")
    if kernels.ndim != 4 or len(set(kernels.shape[1:])) != 1:
        raise ValueError(f"kernels must be (K, c, c, c), got {kernels.shape}")
    c = kernels.shape[1]
    if c % 2 == 0:
        raise ValueError(f"kernel size must be odd, got {c}")
    if stride < 1:
        raise ValueError(f"stride must be >= 1, got {stride}")
    if padding not in _PADDINGS:
        raise ValueError(f"padding must be one of {_PADDINGS}, got {padding!r}")
    if padding == "none" and min(vol.shape) < c:
        raise ValueError(f"volume {vol.shape} smaller than kernel {c} with padding='none'")
    return vol, kernels, c


def output_axes(shape, c: int, stride: int, padding: str):
    """Anchor coordinates (input-grid indices) of the output voxels, per axis."""
    start = 0 if padding == "zero" else (c - 1) // 2
    return tuple(np.arange(start, d - start, stride) for d in shape)


def correlate3d(vol, kernels, stride: int = 1, padding: str = "zero") -> np.ndarray:
    """(K, o1, o2, o3) correlation maps.

    Output value at anchor x is sum_u vol[x + u] * k[u + h] over kernel
    offsets u in [-h, h]^3; anchors run over `output_axes` and out-of-range
    volume values count as zero under padding='zero'.
    """
    vol, kernels, c = _check_args(vol, kernels, stride, padding)
    if backend_for("correlate") == "compiled":
        kmat = _conv_numpy._kernel_matrix(kernels)
        return _conv_core.correlate3d_kmat(vol, kmat, c, kernels.shape[0],
                                           stride, padding == "zero")
    return _conv_numpy.correlate3d(vol, kernels, stride, padding == "zero")


def project_at_voxels(vol, kernels, positions) -> np.ndarray:
    """(K, P) correlation responses at chosen voxels, zero-padded borders."""
    vol, kernels, c = _check_args(vol, kernels, 1, "zero")
    positions = np.ascontiguousarray(positions, dtype=np.intp)
    if positions.ndim != 2 or positions.shape[1] != 3:
        raise ValueError(f"positions must be (P, 3), got {positions.shape}")
    if np.any(positions < 0) or np.any(positions >= np.array(vol.shape)):
        raise ValueError("positions outside the volume")
    if backend_for("project") == "compiled":
        kmat = _conv_numpy._kernel_matrix(kernels)
        return _conv_core.project_at_voxels_kmat(vol, kmat, c, kernels.shape[0],
                                                 positions)
    return _conv_numpy.project_at_voxels(vol, kernels, positions)
