"""Learnable solid spherical harmonic kernels on voxel grids.

A solid kernel of degree n, order m and stream q is h_{q,n}(rho) * Y_n^m,
where the radial profile h_{q,n} is a trainable combination of unit-spaced
triangle bumps psi_j(rho) = tri(rho - j). Kernels are discretized by direct
evaluation at voxel-center offsets from the kernel center; the center voxel,
whose direction is undefined, takes the n = 0 value and is exactly zero for
n > 0.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .sph import Rotation, cartesian_to_spherical, sh_stack

__all__ = [
    "radial_basis",
    "RadialProfileBank",
    "init_weights",
    "eval_radial",
    "default_radial_count",
    "max_degree_bound",
    "grid_coordinates",
    "BasisKernels",
    "basis_kernels",
    "discretize_kernel",
    "rotate_grid",
]


def radial_basis(j: int, rho) -> np.ndarray:
    """Triangle bump tri(rho - j): 1 - |rho - j| where that is positive."""
    rho = np.asarray(rho, dtype=float)
    return np.clip(1.0 - np.abs(rho - j), 0.0, None)


@dataclass
class RadialProfileBank:
    """Trainable radial weights, shape (streams, degrees, radial indices)."""

    weights: np.ndarray  # (Q, N+1, J+1) float64

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        if w.ndim != 3:
            raise ValueError(f"weights must be (Q, N+1, J+1), got shape {w.shape}")
        if not np.all(np.isfinite(w)):
            raise ValueError("weights must be finite")
        self.weights = w

    @property
    def n_streams(self) -> int:
        return self.weights.shape[0]

    @property
    def max_degree(self) -> int:
        return self.weights.shape[1] - 1

    @property
    def n_radial(self) -> int:
        return self.weights.shape[2]


def init_weights(rng: np.random.Generator, n_streams: int, max_degree: int,
                 max_radial: int) -> RadialProfileBank:
    """Standard-normal initialization of all radial weights."""
    return RadialProfileBank(rng.standard_normal((n_streams, max_degree + 1,
                                                  max_radial + 1)))


def eval_radial(bank: RadialProfileBank, q: int, n: int, rho) -> np.ndarray:
    """h_{q,n}(rho) = sum_j w_{q,n,j} * tri(rho - j)."""
    w = bank.weights[q, n]
    rho = np.asarray(rho, dtype=float)
    out = np.zeros_like(rho)
    for j, wj in enumerate(w):
        if wj != 0.0:
            out += wj * radial_basis(j, rho)
    return out


def default_radial_count(c: int) -> int:
    """Radial basis functions J+1 = c - 1 used by the network for kernel
    size c; reproduces the published trainable-parameter counts."""
    return c - 1


def max_degree_bound(c: int) -> int:
    """Sampling bound floor(pi*c/4) on the harmonic degree for kernel size c."""
    if c < 1:
        raise ValueError("kernel size must be >= 1")
    return int(np.pi * c / 4.0)


def _warn_if_beyond_bound(nmax: int, c: int):
    bound = max_degree_bound(c)
    if nmax > bound:
        warnings.warn(f"max degree {nmax} exceeds the sampling bound {bound} "
                      f"for kernel size {c}; aliasing is likely", stacklevel=3)


def grid_coordinates(c: int):
    """Spherical coordinates (rho, theta, phi) of voxel offsets on a c^3 grid
    centered at the middle voxel."""
    if c % 2 == 0:
        raise ValueError(f"kernel size must be odd, got {c}")
    h = (c - 1) // 2
    ax = np.arange(-h, h + 1, dtype=float)
    x1, x2, x3 = np.meshgrid(ax, ax, ax, indexing="ij")
    return cartesian_to_spherical(x1, x2, x3)


@dataclass(frozen=True)
class BasisKernels:
    """Discretized psi_j * Y_n^m stack for m >= 0, shared by all streams.

    Kernel k for (n, m, j) sits at index offset(n) + m*(J+1) + j; negative
    orders follow from the conjugation symmetry of the harmonics.
    """

    max_degree: int
    size: int
    n_radial: int
    kernels: np.ndarray  # (K, c, c, c) complex128

    def index(self, n: int, m: int, j: int) -> int:
        if not (0 <= m <= n <= self.max_degree and 0 <= j < self.n_radial):
            raise ValueError(f"no basis kernel for (n={n}, m={m}, j={j})")
        offset = sum((d + 1) * self.n_radial for d in range(n))
        return offset + m * self.n_radial + j

    def degree_block(self, n: int) -> np.ndarray:
        """(n+1, J+1, c, c, c) view of the m >= 0 kernels of degree n."""
        start = self.index(n, 0, 0)
        stop = start + (n + 1) * self.n_radial
        return self.kernels[start:stop].reshape(n + 1, self.n_radial,
                                                *self.kernels.shape[1:])


@lru_cache(maxsize=8)
def basis_kernels(max_degree: int, c: int, n_radial: int) -> BasisKernels:
    """Evaluate all basis kernels once per configuration."""
    _warn_if_beyond_bound(max_degree, c)
    rho, theta, phi = grid_coordinates(c)
    center = (rho == 0.0)
    harmonics = sh_stack(max_degree, theta, phi)
    psi = np.stack([radial_basis(j, rho) for j in range(n_radial)])
    stacks = []
    for n in range(max_degree + 1):
        for m in range(0, n + 1):
            ym = harmonics[n][n + m]
            if n > 0:
                ym = np.where(center, 0.0, ym)
            stacks.append(psi * ym[None])
    kernels = np.concatenate(stacks, axis=0)
    return BasisKernels(max_degree, c, n_radial, np.ascontiguousarray(kernels))


def discretize_kernel(bank: RadialProfileBank, q: int, n: int, m: int,
                      c: int) -> np.ndarray:
    """(c, c, c) complex grid of h_{q,n}(rho) * Y_n^m at voxel offsets."""
    if c % 2 == 0:
        raise ValueError(f"kernel size must be odd, got {c}")
    if not (0 <= q < bank.n_streams):
        raise ValueError(f"stream {q} out of range")
    if not (0 <= abs(m) <= n <= bank.max_degree):
        raise ValueError(f"(n={n}, m={m}) out of range for max degree {bank.max_degree}")
    basis = basis_kernels(bank.max_degree, c, bank.n_radial)
    block = basis.degree_block(n)  # (n+1, J+1, c, c, c)
    kern = np.tensordot(bank.weights[q, n], block[abs(m)], axes=(0, 0))
    if m < 0:
        kern = (-1) ** m * np.conj(kern)
    return kern


def rotate_grid(arr: np.ndarray, rotation: Rotation) -> np.ndarray:
    """Sample a grid array at rotated positions: out[x] = arr[R(x-ctr)+ctr].

    Exact for right-angle rotations that map the voxel grid onto itself;
    raises if the rotated positions fall off the grid points.
    """
    arr = np.asarray(arr)
    shape = np.array(arr.shape)
    ctr = (shape - 1) / 2.0
    idx = np.indices(arr.shape).reshape(3, -1).T
    src = (idx - ctr) @ rotation.matrix.T + ctr
    src_int = np.rint(src).astype(int)
    if np.max(np.abs(src - src_int)) > 1e-9:
        raise ValueError("rotation does not map this grid onto itself")
    if np.any(src_int < 0) or np.any(src_int >= shape):
        raise ValueError("rotated grid points fall outside the array")
    return arr[src_int[:, 0], src_int[:, 1], src_int[:, 2]].reshape(arr.shape)
