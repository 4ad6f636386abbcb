"""Complex spherical harmonics, 3D rotations, Wigner-D and Clebsch-Gordan matrices.

Conventions used throughout the package (all downstream identities are stated
and tested against these):

* Spherical coordinates: radius ``rho >= 0``, elevation ``theta in [0, pi]``
  measured from the +x3 axis, azimuth ``phi in [0, 2*pi)`` in the (x1, x2)
  plane. The direction at the origin is undefined; conversion returns
  ``theta = phi = 0`` there by convention.
* ``Y_n^m`` is orthonormal on the sphere and carries the Condon-Shortley
  phase, so ``Y_n^{-m} = (-1)^m * conj(Y_n^m)``.
* Degree-n coefficient rows are stored ascending in order,
  ``F = [F_n^{-n}, ..., F_n^{n}]``, and a row representing a real-valued
  function satisfies ``F[-m] = (-1)^m * conj(F[m])``.
* ``wigner_d(n, R)`` is the unitary matrix ``D_n(R)`` such that sampling a
  function at rotated points, ``f' = f(R .)``, maps coefficient rows as
  ``F' = F @ D_n(R)``. Equivalently ``Y_n^m(R x) = sum_m' D[m, m'] Y_n^m'(x)``
  (row index ``m``, column index ``m'``). Under this choice the composition
  rule is the plain homomorphism ``D_n(R1 @ R2) = D_n(R1) @ D_n(R2)``.
* ``clebsch_gordan(n1, n2)`` returns the real orthogonal matrix with rows
  indexed by the coupled basis ``(n, m)``, ``|n1-n2| <= n <= n1+n2``, and
  columns by the product basis ``(m1, m2)``. It block-diagonalizes Kronecker
  products of Wigner-D matrices:
  ``kron(D_n1(R), D_n2(R)) = C.T @ blockdiag(D_i(R)) @ C``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

import numpy as np

__all__ = [
    "cartesian_to_spherical",
    "spherical_to_cartesian",
    "eval_sh",
    "sh_stack",
    "Rotation",
    "random_rotation",
    "octahedral_rotations",
    "wigner_small_d",
    "wigner_d",
    "rotate_fourier_vector",
    "real_symmetry_defect",
    "random_real_coeffs",
    "cg_coefficient",
    "CGMatrix",
    "clebsch_gordan",
]

_ORTHO_TOL = 1e-12


# ---------------------------------------------------------------------------
# spherical coordinates
# ---------------------------------------------------------------------------

def cartesian_to_spherical(x1, x2, x3):
    """Convert Cartesian coordinates to (rho, theta, phi).

    Accepts scalars or broadcastable arrays. At the origin the direction is
    undefined and (theta, phi) = (0, 0) is returned.
    """
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    x3 = np.asarray(x3, dtype=float)
    rho = np.sqrt(x1 * x1 + x2 * x2 + x3 * x3)
    with np.errstate(invalid="ignore", divide="ignore"):
        costheta = np.where(rho > 0.0, x3 / np.where(rho > 0.0, rho, 1.0), 1.0)
    theta = np.arccos(np.clip(costheta, -1.0, 1.0))
    phi = np.mod(np.arctan2(x2, x1), 2.0 * math.pi)
    phi = np.where(rho > 0.0, phi, 0.0)
    return rho, theta, phi


def spherical_to_cartesian(rho, theta, phi):
    rho = np.asarray(rho, dtype=float)
    theta = np.asarray(theta, dtype=float)
    phi = np.asarray(phi, dtype=float)
    st = np.sin(theta)
    return rho * st * np.cos(phi), rho * st * np.sin(phi), rho * np.cos(theta)


# ---------------------------------------------------------------------------
# spherical harmonics
# ---------------------------------------------------------------------------

def _legendre_table(nmax: int, x: np.ndarray) -> list[list[np.ndarray]]:
    """Associated Legendre P_n^m(x) for 0 <= m <= n <= nmax, Condon-Shortley
    phase included; standard three-term recursion."""
    P = [[None] * (n + 1) for n in range(nmax + 1)]
    P[0][0] = np.ones_like(x)
    if nmax == 0:
        return P
    somx2 = np.sqrt(np.clip(1.0 - x * x, 0.0, None))
    for m in range(1, nmax + 1):
        P[m][m] = -(2 * m - 1) * somx2 * P[m - 1][m - 1]
    for m in range(0, nmax):
        P[m + 1][m] = (2 * m + 1) * x * P[m][m]
    for m in range(0, nmax + 1):
        for n in range(m + 2, nmax + 1):
            P[n][m] = ((2 * n - 1) * x * P[n - 1][m] - (n + m - 1) * P[n - 2][m]) / (n - m)
    return P


@lru_cache(maxsize=None)
def _sh_norm(n: int, m: int) -> float:
    # sqrt((2n+1)/(4 pi) * (n-m)!/(n+m)!), exact rational under the root
    q = Fraction(2 * n + 1) * Fraction(math.factorial(n - m), math.factorial(n + m))
    return math.sqrt(float(q) / (4.0 * math.pi))


def eval_sh(n: int, m: int, theta, phi):
    """Orthonormal complex spherical harmonic Y_n^m(theta, phi).

    Vectorized over theta/phi. Raises ValueError for |m| > n.
    """
    if n < 0 or abs(m) > n:
        raise ValueError(f"order out of range: |m|={abs(m)} > n={n}")
    theta = np.asarray(theta, dtype=float)
    phi = np.asarray(phi, dtype=float)
    ma = abs(m)
    P = _legendre_table(n, np.cos(theta))[n][ma]
    val = _sh_norm(n, ma) * P * np.exp(1j * ma * phi)
    if m < 0:
        val = (-1) ** ma * np.conj(val)
    if val.ndim == 0:
        return complex(val)
    return val


def sh_stack(nmax: int, theta, phi) -> list[np.ndarray]:
    """All Y_n^m up to degree nmax.

    Returns a list indexed by degree n; entry n has shape (2n+1,) + theta.shape
    with the order axis running m = -n..n. Shares one Legendre recursion
    across degrees, which is much faster than repeated eval_sh calls.
    """
    theta = np.asarray(theta, dtype=float)
    phi = np.asarray(phi, dtype=float)
    P = _legendre_table(nmax, np.cos(theta))
    expphi = [np.exp(1j * m * phi) for m in range(nmax + 1)]
    out = []
    for n in range(nmax + 1):
        block = np.empty((2 * n + 1,) + theta.shape, dtype=np.complex128)
        for m in range(0, n + 1):
            ym = _sh_norm(n, m) * P[n][m] * expphi[m]
            block[n + m] = ym
            if m > 0:
                block[n - m] = (-1) ** m * np.conj(ym)
        out.append(block)
    return out


# ---------------------------------------------------------------------------
# rotations
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Rotation:
    """A proper 3D rotation, carried as a 3x3 matrix."""

    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=float)
        if m.shape != (3, 3):
            raise ValueError(f"rotation matrix must be 3x3, got {m.shape}")
        if np.max(np.abs(m.T @ m - np.eye(3))) > 1e-9:
            raise ValueError("matrix is not orthogonal")
        if abs(np.linalg.det(m) - 1.0) > 1e-9:
            raise ValueError("matrix is not a proper rotation (det != +1)")
        object.__setattr__(self, "matrix", m)

    @classmethod
    def identity(cls) -> "Rotation":
        return cls(np.eye(3))

    @classmethod
    def from_euler_zyz(cls, alpha: float, beta: float, gamma: float) -> "Rotation":
        """R = Rz(alpha) @ Ry(beta) @ Rz(gamma)."""
        return cls(_rot_z(alpha) @ _rot_y(beta) @ _rot_z(gamma))

    @classmethod
    def from_quaternion(cls, q) -> "Rotation":
        w, x, y, z = np.asarray(q, dtype=float) / np.linalg.norm(q)
        return cls(np.array([
            [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
            [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
            [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
        ]))

    @classmethod
    def about_axis(cls, axis: int, angle: float) -> "Rotation":
        if axis == 0:
            c, s = math.cos(angle), math.sin(angle)
            return cls(np.array([[1.0, 0, 0], [0, c, -s], [0, s, c]]))
        if axis == 1:
            return cls(_rot_y(angle))
        if axis == 2:
            return cls(_rot_z(angle))
        raise ValueError(f"axis must be 0, 1 or 2, got {axis}")

    def euler_zyz(self) -> tuple[float, float, float]:
        """ZYZ Euler angles (alpha, beta, gamma) with beta in [0, pi]."""
        m = self.matrix
        beta = math.acos(min(1.0, max(-1.0, m[2, 2])))
        if math.sin(beta) > 1e-12:
            alpha = math.atan2(m[1, 2], m[0, 2])
            gamma = math.atan2(m[2, 1], -m[2, 0])
        elif m[2, 2] > 0.0:  # beta = 0: only alpha + gamma is defined
            alpha = math.atan2(m[1, 0], m[0, 0])
            gamma = 0.0
        else:  # beta = pi: only alpha - gamma is defined
            alpha = math.atan2(-m[1, 0], -m[0, 0])
            gamma = 0.0
        return alpha, beta, gamma

    def inverse(self) -> "Rotation":
        return Rotation(self.matrix.T)

    def __matmul__(self, other: "Rotation") -> "Rotation":
        return Rotation(self.matrix @ other.matrix)

    def apply(self, vec):
        return np.asarray(vec, dtype=float) @ self.matrix.T


def _rot_z(t: float) -> np.ndarray:
    c, s = math.cos(t), math.sin(t)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def _rot_y(t: float) -> np.ndarray:
    c, s = math.cos(t), math.sin(t)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def random_rotation(rng: np.random.Generator) -> Rotation:
    """Haar-uniform rotation from a uniform unit quaternion."""
    q = rng.standard_normal(4)
    return Rotation.from_quaternion(q)


def octahedral_rotations() -> list[Rotation]:
    """The 24 right-angle rotations mapping the voxel grid onto itself."""
    out = []
    for perm in ((0, 1, 2), (0, 2, 1), (1, 0, 2), (1, 2, 0), (2, 0, 1), (2, 1, 0)):
        for signs in np.ndindex(2, 2, 2):
            m = np.zeros((3, 3))
            for row, col in enumerate(perm):
                m[row, col] = 1.0 - 2.0 * signs[row]
            if np.linalg.det(m) > 0.5:
                out.append(Rotation(m))
    assert len(out) == 24
    return out


# ---------------------------------------------------------------------------
# Wigner-D matrices
# ---------------------------------------------------------------------------

@lru_cache(maxsize=None)
def _jy_eigensystem(n: int):
    """Eigendecomposition of the degree-n angular momentum generator J_y."""
    dim = 2 * n + 1
    jy = np.zeros((dim, dim), dtype=np.complex128)
    for m in range(-n, n):
        splus = math.sqrt(n * (n + 1) - m * (m + 1))  # <m+1| J+ |m>
        jy[m + 1 + n, m + n] += splus / 2j
        jy[m + n, m + 1 + n] -= splus / 2j  # <m| J- |m+1> has the same value
    vals, vecs = np.linalg.eigh(jy)
    return vals, vecs


def wigner_small_d(n: int, beta: float) -> np.ndarray:
    """Real small-d matrix d_n(beta) = exp(-i beta J_y), m ascending."""
    vals, vecs = _jy_eigensystem(n)
    d = (vecs * np.exp(-1j * beta * vals)) @ vecs.conj().T
    return d.real


def wigner_d(n: int, rotation: Rotation) -> np.ndarray:
    """Wigner-D matrix of degree n for the module's row-action convention.

    Satisfies, with F the coefficient row of f and f' = f(R .):
    ``F' = F @ wigner_d(n, R)`` and
    ``Y_n^m(R x) = sum_m' D[m, m'] Y_n^m'(x)``.
    """
    if not isinstance(rotation, Rotation):
        rotation = Rotation(np.asarray(rotation, dtype=float))
    alpha, beta, gamma = rotation.euler_zyz()
    d = wigner_small_d(n, beta)
    m = np.arange(-n, n + 1)
    # conj of the e^{-i m' alpha} d e^{-i m gamma} matrix: flips the row/column
    # action so that coefficient rows transform by right multiplication.
    return np.exp(1j * m * alpha)[:, None] * d * np.exp(1j * m * gamma)[None, :]


def rotate_fourier_vector(coeffs: np.ndarray, rotation: Rotation) -> np.ndarray:
    """Coefficient row of f(R .) given the row of f."""
    coeffs = np.asarray(coeffs, dtype=np.complex128)
    if coeffs.ndim != 1 or coeffs.size % 2 != 1:
        raise ValueError("coefficient row must have odd length 2n+1")
    n = (coeffs.size - 1) // 2
    return coeffs @ wigner_d(n, rotation)


def real_symmetry_defect(coeffs: np.ndarray) -> float:
    """Max |F[-m] - (-1)^m conj(F[m])|; zero iff the row can represent a
    real-valued function."""
    coeffs = np.asarray(coeffs, dtype=np.complex128)
    n = (coeffs.size - 1) // 2
    m = np.arange(-n, n + 1)
    mirrored = ((-1.0) ** m) * np.conj(coeffs[::-1])
    return float(np.max(np.abs(coeffs - mirrored)))


def random_real_coeffs(n: int, rng: np.random.Generator) -> np.ndarray:
    """Random degree-n row with the conjugate symmetry of a real function."""
    row = np.zeros(2 * n + 1, dtype=np.complex128)
    row[n] = rng.standard_normal()
    for m in range(1, n + 1):
        z = rng.standard_normal() + 1j * rng.standard_normal()
        row[n + m] = z
        row[n - m] = (-1) ** m * np.conj(z)
    return row


# ---------------------------------------------------------------------------
# Clebsch-Gordan coefficients
# ---------------------------------------------------------------------------

@lru_cache(maxsize=None)
def _cg_exact(n1: int, m1: int, n2: int, m2: int, n: int) -> tuple[Fraction, Fraction]:
    """<n1 m1 n2 m2 | n (m1+m2)> as (rational sum S, rational Q) with the
    coefficient equal to S * sqrt(Q); Racah's single-sum formula in exact
    integer arithmetic."""
    m = m1 + m2
    if abs(m) > n or n < abs(n1 - n2) or n > n1 + n2:
        return Fraction(0), Fraction(0)
    f = math.factorial
    q = Fraction(2 * n + 1)
    q *= Fraction(f(n1 + n2 - n) * f(n1 - n2 + n) * f(-n1 + n2 + n), f(n1 + n2 + n + 1))
    q *= Fraction(f(n + m) * f(n - m) * f(n1 - m1) * f(n1 + m1) * f(n2 - m2) * f(n2 + m2))
    s = Fraction(0)
    kmin = max(0, -(n - n2 + m1), -(n - n1 - m2))
    kmax = min(n1 + n2 - n, n1 - m1, n2 + m2)
    for k in range(kmin, kmax + 1):
        den = (f(k) * f(n1 + n2 - n - k) * f(n1 - m1 - k) * f(n2 + m2 - k)
               * f(n - n2 + m1 + k) * f(n - n1 - m2 + k))
        s += Fraction((-1) ** k, den)
    return s, q


def cg_coefficient(n1: int, m1: int, n2: int, m2: int, n: int, m: int) -> float:
    """Clebsch-Gordan coefficient <n1 m1 n2 m2 | n m>."""
    if abs(m1) > n1 or abs(m2) > n2:
        raise ValueError("orders out of range")
    if m != m1 + m2:
        return 0.0
    s, q = _cg_exact(n1, m1, n2, m2, n)
    if s == 0:
        return 0.0
    return float(s) * math.sqrt(float(q))


@dataclass(frozen=True)
class CGMatrix:
    """Dense Clebsch-Gordan matrix for the degree pair (n1, n2).

    Rows are the coupled basis (n, m) with n = |n1-n2|..n1+n2 and m = -n..n
    within each degree block; columns are the product basis (m1, m2) with m2
    fastest. Real orthogonal; entries vanish unless m = m1 + m2.
    """

    n1: int
    n2: int
    matrix: np.ndarray

    @property
    def degrees(self) -> range:
        return range(abs(self.n1 - self.n2), self.n1 + self.n2 + 1)

    def row_block(self, n: int) -> slice:
        """Row slice of the degree-n coupled block."""
        if n not in self.degrees:
            raise ValueError(f"degree {n} outside coupled range {self.degrees}")
        lo = abs(self.n1 - self.n2)
        start = sum(2 * i + 1 for i in range(lo, n))
        return slice(start, start + 2 * n + 1)

    def col_index(self, m1: int, m2: int) -> int:
        return (m1 + self.n1) * (2 * self.n2 + 1) + (m2 + self.n2)


@lru_cache(maxsize=None)
def clebsch_gordan(n1: int, n2: int) -> CGMatrix:
    """Dense CG matrix; see CGMatrix for the index layout."""
    if n1 < 0 or n2 < 0:
        raise ValueError("degrees must be non-negative")
    size = (2 * n1 + 1) * (2 * n2 + 1)
    mat = np.zeros((size, size))
    row = 0
    for n in range(abs(n1 - n2), n1 + n2 + 1):
        for m in range(-n, n + 1):
            for m1 in range(max(-n1, m - n2), min(n1, m + n2) + 1):
                m2 = m - m1
                col = (m1 + n1) * (2 * n2 + 1) + (m2 + n2)
                mat[row, col] = cg_coefficient(n1, m1, n2, m2, n, m)
            row += 1
    return CGMatrix(n1, n2, mat)
