"""Locally rotation invariant layer on 3D volumes.

Pipeline: a real volume is correlated with the solid harmonic basis kernels,
giving per-degree complex feature maps that are linear in the radial weights.
Voxel-wise spectrum (SSE) or parity-projected bispectrum (SSB) of those maps
yields invariant channel maps, which global (optionally masked) average
pooling reduces to one scalar per stream and channel.

Because pooling is linear and the invariants are quadratic/cubic forms in the
radial weights, the pooled features are exactly expressible through small
per-volume moment tensors of the basis responses. `sse_moments`/`ssb_moments`
precompute those tensors once per volume; `pooled_sse`/`pooled_ssb` and their
gradients then evaluate in microseconds, independent of volume size. The
map-level path (`fourier_feature_maps` -> `sse_forward`/`ssb_forward` ->
`global_pool`) computes the same numbers the long way and serves as the
independent route in the gradient and equivalence tests.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import conv
from .invariants import BispectrumTriple, bispectrum_terms
from .kernels import RadialProfileBank, basis_kernels

__all__ = [
    "LayerGeometry",
    "compute_basis_maps",
    "fourier_feature_maps",
    "sse_forward",
    "ssb_forward",
    "global_pool",
    "downsample_mask",
    "mean_patch",
    "sse_moments",
    "ssb_moments",
    "pooled_sse",
    "pooled_ssb",
    "grad_pooled_sse",
    "grad_pooled_ssb",
    "pooled_features_by_maps",
    "layer_backward",
]


@dataclass(frozen=True)
class LayerGeometry:
    """Spatial configuration of one layer application."""

    kernel_size: int
    stride: int = 1
    padding: str = "zero"

    def __post_init__(self):
        if self.kernel_size % 2 == 0:
            raise ValueError(f"kernel size must be odd, got {self.kernel_size}")
        if self.padding not in ("zero", "none"):
            raise ValueError(f"padding must be 'zero' or 'none', got {self.padding!r}")
        if self.stride < 1:
            raise ValueError(f"stride must be >= 1, got {self.stride}")


def compute_basis_maps(vol, max_degree: int, n_radial: int,
                       geom: LayerGeometry) -> list[np.ndarray]:
    """Correlations of the volume with every basis kernel psi_j * Y_n^m.

    Returns one array per degree n of shape (2n+1, n_radial, o1, o2, o3).
    Only m >= 0 is convolved; negative orders follow from conjugation
    symmetry, which requires a real input volume.
    """
    vol = np.asarray(vol, dtype=np.float64)
    basis = basis_kernels(max_degree, geom.kernel_size, n_radial)
    raw = conv.correlate3d(vol, basis.kernels, geom.stride, geom.padding)
    out = []
    for n in range(max_degree + 1):
        start = basis.index(n, 0, 0)
        block = raw[start:start + (n + 1) * n_radial]
        block = block.reshape(n + 1, n_radial, *raw.shape[1:])
        full = np.empty((2 * n + 1,) + block.shape[1:], dtype=np.complex128)
        full[n:] = block
        for m in range(1, n + 1):
            full[n - m] = (-1) ** m * np.conj(block[m])
        out.append(full)
    return out


def maps_from_basis(basis_maps: list[np.ndarray], bank: RadialProfileBank) -> list[np.ndarray]:
    """Contract basis maps with radial weights: one (Q, 2n+1, o...) per degree."""
    return [np.tensordot(bank.weights[:, n, :], basis_maps[n], axes=(1, 1))
            for n in range(len(basis_maps))]


def fourier_feature_maps(vol, bank: RadialProfileBank, kernel_size: int,
                         stride: int = 1, padding: str = "zero") -> list[np.ndarray]:
    """Per-degree complex feature maps of shape (Q, 2n+1, o1, o2, o3)."""
    geom = LayerGeometry(kernel_size, stride, padding)
    basis_maps = compute_basis_maps(vol, bank.max_degree, bank.n_radial, geom)
    return maps_from_basis(basis_maps, bank)


def sse_forward(maps: list[np.ndarray]) -> np.ndarray:
    """Voxel-wise spectrum per stream and degree: (Q, N+1, o1, o2, o3)."""
    return np.stack([np.sum(np.abs(f) ** 2, axis=1) / f.shape[1] for f in maps],
                    axis=1)


def ssb_forward(maps: list[np.ndarray],
                triples: list[BispectrumTriple]) -> np.ndarray:
    """Voxel-wise parity-projected bispectrum: (Q, len(triples), o1, o2, o3)."""
    n_streams = maps[0].shape[0]
    spatial = maps[0].shape[2:]
    out = np.empty((n_streams, len(triples)) + spatial)
    for t_idx, t in enumerate(triples):
        i1, i2, i3, w = bispectrum_terms(t.n, t.n_prime, t.ell)
        acc = np.zeros((n_streams,) + spatial, dtype=np.complex128)
        f1, f2, f3 = maps[t.n], maps[t.n_prime], maps[t.ell]
        for k in range(w.size):
            acc += w[k] * f1[:, i1[k]] * f2[:, i2[k]] * np.conj(f3[:, i3[k]])
        out[:, t_idx] = acc.real if t.parity_even else acc.imag
    return out


def global_pool(inv_maps: np.ndarray, mask=None) -> np.ndarray:
    """Mean over output voxels per (stream, channel); (Q, C)."""
    if mask is None:
        return inv_maps.mean(axis=tuple(range(2, inv_maps.ndim)))
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != inv_maps.shape[2:]:
        raise ValueError(f"mask shape {mask.shape} does not match output grid "
                         f"{inv_maps.shape[2:]}")
    count = int(mask.sum())
    if count == 0:
        raise ValueError("mask selects no output voxels")
    return inv_maps[..., mask].sum(axis=-1) / count


def downsample_mask(mask, shape, geom: LayerGeometry) -> np.ndarray:
    """Restrict an input-grid boolean mask to the strided output grid."""
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != tuple(shape):
        raise ValueError(f"mask shape {mask.shape} does not match volume {tuple(shape)}")
    axes = conv.output_axes(shape, geom.kernel_size, geom.stride, geom.padding)
    return mask[np.ix_(*axes)]


def mean_patch(vol, geom: LayerGeometry, mask=None) -> np.ndarray:
    """Mean over output anchors of the c^3 input patch around each anchor.

    This is the sufficient statistic for globally pooled plain convolution:
    pooled(I * k) = sum_u k[u] * mean_patch(I)[u].
    """
    vol = np.asarray(vol, dtype=np.float64)
    c = geom.kernel_size
    h = (c - 1) // 2
    padded = np.zeros(tuple(d + 2 * h for d in vol.shape))
    padded[h:h + vol.shape[0], h:h + vol.shape[1], h:h + vol.shape[2]] = vol
    axes = conv.output_axes(vol.shape, c, geom.stride, geom.padding)
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != tuple(len(a) for a in axes):
            raise ValueError("mask must live on the output grid")
        if not mask.any():
            raise ValueError("mask selects no output voxels")
    out = np.empty((c, c, c))
    for u1 in range(c):
        for u2 in range(c):
            for u3 in range(c):
                block = padded[np.ix_(axes[0] + u1, axes[1] + u2, axes[2] + u3)]
                out[u1, u2, u3] = block[mask].mean() if mask is not None else block.mean()
    return out


# ---------------------------------------------------------------------------
# pooled moments: exact sufficient statistics for globally pooled invariants
# ---------------------------------------------------------------------------

def _flat_basis(basis_maps: list[np.ndarray], mask=None) -> list[np.ndarray]:
    flat = []
    for block in basis_maps:
        dim, n_r = block.shape[:2]
        v = block.reshape(dim, n_r, -1)
        if mask is not None:
            v = v[:, :, np.asarray(mask, dtype=bool).ravel()]
        flat.append(v)
    if flat and flat[0].shape[2] == 0:
        raise ValueError("mask selects no output voxels")
    return flat


def sse_moments(basis_maps: list[np.ndarray], mask=None) -> np.ndarray:
    """(N+1, J+1, J+1) Hermitian forms M with pooled spectrum = w @ Re(M) @ w."""
    flat = _flat_basis(basis_maps, mask)
    n_voxels = flat[0].shape[2]
    out = np.empty((len(flat), flat[0].shape[1], flat[0].shape[1]),
                   dtype=np.complex128)
    for n, block in enumerate(flat):
        out[n] = np.einsum("mjv,mkv->jk", block, np.conj(block)) / (
            (2 * n + 1) * n_voxels)
    return out


def ssb_moments(basis_maps: list[np.ndarray], triples: list[BispectrumTriple],
                mask=None) -> np.ndarray:
    """(T, J+1, J+1, J+1) tensors with pooled bispectrum the cubic form
    b_t = sum_{j1 j2 j3} w_n[j1] w_n'[j2] w_l[j3] T_t[j1, j2, j3]."""
    flat = _flat_basis(basis_maps, mask)
    n_r = flat[0].shape[1]
    n_voxels = flat[0].shape[2]
    out = np.zeros((len(triples), n_r, n_r, n_r), dtype=np.complex128)
    for t_idx, t in enumerate(triples):
        i1, i2, i3, w = bispectrum_terms(t.n, t.n_prime, t.ell)
        b1, b2, b3 = flat[t.n], flat[t.n_prime], flat[t.ell]
        acc = out[t_idx]
        for k in range(w.size):
            pair = b1[i1[k], :, None, :] * b2[i2[k], None, :, :]
            acc += w[k] * (pair.reshape(n_r * n_r, n_voxels)
                           @ np.conj(b3[i3[k]]).T).reshape(n_r, n_r, n_r)
        acc /= n_voxels
    return out


def pooled_sse(moments: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """(Q, N+1) pooled spectrum features from SSE moments."""
    return np.einsum("qnj,njk,qnk->qn", weights, moments.real, weights)


def pooled_ssb(moments: np.ndarray, weights: np.ndarray,
               triples: list[BispectrumTriple]) -> np.ndarray:
    """(Q, T) pooled parity-projected bispectrum features from SSB moments."""
    n_streams = weights.shape[0]
    out = np.empty((n_streams, len(triples)))
    for t_idx, t in enumerate(triples):
        b = np.einsum("qi,qj,qk,ijk->q", weights[:, t.n], weights[:, t.n_prime],
                      weights[:, t.ell], moments[t_idx])
        out[:, t_idx] = b.real if t.parity_even else b.imag
    return out


def grad_pooled_sse(moments: np.ndarray, weights: np.ndarray,
                    upstream: np.ndarray) -> np.ndarray:
    """d(sum upstream * pooled_sse)/d(weights); upstream is (Q, N+1)."""
    return 2.0 * upstream[:, :, None] * np.einsum("njk,qnk->qnj",
                                                  moments.real, weights)


def grad_pooled_ssb(moments: np.ndarray, weights: np.ndarray,
                    triples: list[BispectrumTriple],
                    upstream: np.ndarray) -> np.ndarray:
    """d(sum upstream * pooled_ssb)/d(weights); upstream is (Q, T)."""
    grad = np.zeros_like(weights)
    for t_idx, t in enumerate(triples):
        w1 = weights[:, t.n]
        w2 = weights[:, t.n_prime]
        w3 = weights[:, t.ell]
        T = moments[t_idx]
        d1 = np.einsum("ijk,qj,qk->qi", T, w2, w3)
        d2 = np.einsum("ijk,qi,qk->qj", T, w1, w3)
        d3 = np.einsum("ijk,qi,qj->qk", T, w1, w2)
        take = (lambda z: z.real) if t.parity_even else (lambda z: z.imag)
        u = upstream[:, t_idx][:, None]
        grad[:, t.n] += u * take(d1)
        grad[:, t.n_prime] += u * take(d2)
        grad[:, t.ell] += u * take(d3)
    return grad


def pooled_features_by_maps(vol, bank: RadialProfileBank, kind: str,
                            geom: LayerGeometry,
                            triples: list[BispectrumTriple] | None = None,
                            mask=None) -> np.ndarray:
    """(Q, C) pooled features computed through the full map-level path."""
    maps = fourier_feature_maps(vol, bank, geom.kernel_size, geom.stride,
                                geom.padding)
    if kind == "sse":
        inv = sse_forward(maps)
    elif kind == "ssb":
        if triples is None:
            raise ValueError("ssb pooling needs a triple list")
        inv = ssb_forward(maps, triples)
    else:
        raise ValueError(f"kind must be 'sse' or 'ssb', got {kind!r}")
    return global_pool(inv, mask)


def layer_backward(vol, bank: RadialProfileBank, upstream: np.ndarray, kind: str,
                   geom: LayerGeometry,
                   triples: list[BispectrumTriple] | None = None,
                   mask=None) -> np.ndarray:
    """Exact gradient of the pooled features contracted with `upstream`.

    upstream has shape (Q, C); the result matches bank.weights.
    """
    basis_maps = compute_basis_maps(vol, bank.max_degree, bank.n_radial, geom)
    if kind == "sse":
        return grad_pooled_sse(sse_moments(basis_maps, mask), bank.weights,
                               np.asarray(upstream, dtype=float))
    if kind == "ssb":
        if triples is None:
            raise ValueError("ssb backward needs a triple list")
        return grad_pooled_ssb(ssb_moments(basis_maps, triples, mask),
                               bank.weights, triples,
                               np.asarray(upstream, dtype=float))
    raise ValueError(f"kind must be 'sse' or 'ssb', got {kind!r}")
