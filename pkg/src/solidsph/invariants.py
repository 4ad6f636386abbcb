"""Rotation invariants of spherical Fourier rows: spectrum and bispectrum.

The spectrum of a degree-n row is its averaged squared norm. The bispectrum
couples three rows of degrees (n, n', l) through Clebsch-Gordan coefficients
and, unlike the spectrum, is sensitive to inter-degree rotations and
intra-degree structure. For rows of a real-valued function the bispectrum is
purely real when n + n' + l is even and purely imaginary when odd, so each
coefficient maps to one real scalar.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .sph import CGMatrix, cg_coefficient, clebsch_gordan

__all__ = [
    "spectrum",
    "bispectrum",
    "bispectrum_terms",
    "parity_project",
    "BispectrumTriple",
    "enumerate_triples",
    "triple_count",
    "spectrum_from_bispectrum_check",
]


def spectrum(coeffs: np.ndarray) -> float:
    """Averaged squared norm of a degree-n coefficient row."""
    coeffs = np.asarray(coeffs)
    if coeffs.ndim != 1 or coeffs.size % 2 != 1:
        raise ValueError("coefficient row must have odd length 2n+1")
    return float(np.sum(np.abs(coeffs) ** 2)) / coeffs.size


@dataclass(frozen=True, order=True)
class BispectrumTriple:
    """Sorted degree triple (n <= n_prime <= ell <= n + n_prime)."""

    n: int
    n_prime: int
    ell: int

    def __post_init__(self):
        if not (0 <= self.n <= self.n_prime <= self.ell <= self.n + self.n_prime):
            raise ValueError(f"invalid triple {(self.n, self.n_prime, self.ell)}")

    @property
    def parity_even(self) -> bool:
        return (self.n + self.n_prime + self.ell) % 2 == 0

    def as_tuple(self) -> tuple[int, int, int]:
        return (self.n, self.n_prime, self.ell)


@lru_cache(maxsize=None)
def bispectrum_terms(n: int, n_prime: int, ell: int):
    """Sparse coupling table for one bispectrum coefficient.

    Returns index arrays (i1, i2, i3, w) such that
    ``b = sum_k w[k] * Fn[i1[k]] * Fn'[i2[k]] * conj(Fl[i3[k]])``,
    using only the m = m1 + m2 entries of the Clebsch-Gordan matrix.
    """
    if not abs(n - n_prime) <= ell <= n + n_prime:
        raise ValueError(f"degree {ell} outside |{n}-{n_prime}|..{n}+{n_prime}")
    i1, i2, i3, w = [], [], [], []
    for m1 in range(-n, n + 1):
        for m2 in range(-n_prime, n_prime + 1):
            m = m1 + m2
            if abs(m) > ell:
                continue
            c = cg_coefficient(n, m1, n_prime, m2, ell, m)
            if c == 0.0:
                continue
            i1.append(m1 + n)
            i2.append(m2 + n_prime)
            i3.append(m + ell)
            w.append(c)
    return (np.array(i1, dtype=np.intp), np.array(i2, dtype=np.intp),
            np.array(i3, dtype=np.intp), np.array(w))


def bispectrum(f_n: np.ndarray, f_np: np.ndarray, f_l: np.ndarray,
               cg: CGMatrix | None = None) -> complex:
    """Bispectrum coefficient b^l_{n,n'} of three coefficient rows.

    The degrees are inferred from the row lengths; ``cg``, when given, must be
    the Clebsch-Gordan matrix for (n, n') and is only used to validate the
    pairing (the evaluation itself walks the sparse m = m1 + m2 terms).
    """
    f_n = np.asarray(f_n, dtype=np.complex128)
    f_np = np.asarray(f_np, dtype=np.complex128)
    f_l = np.asarray(f_l, dtype=np.complex128)
    n = (f_n.size - 1) // 2
    n_prime = (f_np.size - 1) // 2
    ell = (f_l.size - 1) // 2
    if cg is not None and (cg.n1, cg.n2) != (n, n_prime):
        raise ValueError(f"CG matrix is for {(cg.n1, cg.n2)}, rows are {(n, n_prime)}")
    i1, i2, i3, w = bispectrum_terms(n, n_prime, ell)
    return complex(np.sum(w * f_n[i1] * f_np[i2] * np.conj(f_l[i3])))


def parity_project(value: complex, triple: BispectrumTriple) -> float:
    """Real part for even n+n'+l, imaginary part for odd.

    For rows of a real-valued function the discarded component vanishes.
    """
    return float(value.real if triple.parity_even else value.imag)


def enumerate_triples(max_degree: int, prune_zero: bool = False) -> list[BispectrumTriple]:
    """All sorted triples with n <= n' <= l <= n+n' and n+n' <= max_degree.

    ``prune_zero`` drops the (n, n, odd l) entries whose bispectrum vanishes
    identically; they are kept by default so channel counts match the
    published enumeration.
    """
    if max_degree < 0:
        raise ValueError("max degree must be >= 0")
    out = []
    for n in range(max_degree + 1):
        for n_prime in range(n, max_degree - n + 1):
            for ell in range(n_prime, n + n_prime + 1):
                if prune_zero and n == n_prime and ell % 2 == 1:
                    continue
                out.append(BispectrumTriple(n, n_prime, ell))
    return out


def triple_count(max_degree: int) -> int:
    """Closed form for len(enumerate_triples(max_degree))."""
    return sum((n + 1) * (max_degree + 1 - 2 * n) for n in range(max_degree // 2 + 1))


def spectrum_from_bispectrum_check(f_0: np.ndarray, f_n: np.ndarray) -> tuple[complex, float]:
    """(b^n_{0,n}, s_n) pair; b equals (2n+1) * F_0^0 * s_n in this
    normalization, which the invariant tests assert."""
    f_0 = np.asarray(f_0, dtype=np.complex128)
    n = (np.asarray(f_n).size - 1) // 2
    b = bispectrum(f_0, f_n, f_n, clebsch_gordan(0, n))
    return b, spectrum(f_n)
