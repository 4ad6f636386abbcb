"""Representation-theory tests: spherical harmonics, Wigner-D, Clebsch-Gordan.

Independent oracles used here: dense Gauss-Legendre quadrature on the sphere,
sympy's Clebsch-Gordan implementation, and pointwise sampling of rotated
harmonics. None of them reuse the code paths under test.
"""

import math

import numpy as np
import pytest
from numpy.polynomial.legendre import leggauss
from scipy.stats import chi2

from solidsph import sph


def sphere_quadrature(n_theta=64, n_phi=129):
    """Nodes and weights integrating band-limited functions exactly."""
    xs, ws = leggauss(n_theta)
    theta = np.arccos(xs)
    phi = np.arange(n_phi) * 2 * np.pi / n_phi
    TH, PH = np.meshgrid(theta, phi, indexing="ij")
    W = np.broadcast_to(ws[:, None] * (2 * np.pi / n_phi), TH.shape)
    return TH, PH, W


def project_onto_sh(values, nmax, TH, PH, W):
    """Quadrature projection <f, Y_n^m>; returns one row per degree."""
    Y = sph.sh_stack(nmax, TH, PH)
    return [np.einsum("ij,mij,ij->m", values, np.conj(Y[n]), W) for n in range(nmax + 1)]


# ---------------------------------------------------------------------------
# spherical coordinates
# ---------------------------------------------------------------------------

def test_coordinate_roundtrip():
    rng = np.random.default_rng(3)
    pts = rng.standard_normal((200, 3)) * 3.0
    rho, th, ph = sph.cartesian_to_spherical(pts[:, 0], pts[:, 1], pts[:, 2])
    assert np.all(rho >= 0) and np.all((th >= 0) & (th <= np.pi))
    assert np.all((ph >= 0) & (ph < 2 * np.pi))
    back = np.stack(sph.spherical_to_cartesian(rho, th, ph), axis=-1)
    np.testing.assert_allclose(back, pts, atol=1e-12)


def test_origin_direction_convention():
    rho, th, ph = sph.cartesian_to_spherical(0.0, 0.0, 0.0)
    assert rho == 0.0 and th == 0.0 and ph == 0.0


# ---------------------------------------------------------------------------
# spherical harmonics
# ---------------------------------------------------------------------------

def test_sh_constant_harmonic():
    val = sph.eval_sh(0, 0, 1.234, 5.0)
    assert abs(val - 1.0 / (2.0 * math.sqrt(math.pi))) < 1e-15


def test_sh_conjugation_symmetry():
    rng = np.random.default_rng(4)
    for _ in range(50):
        n = int(rng.integers(0, 8))
        m = int(rng.integers(0, n + 1))
        th, ph = rng.uniform(0, np.pi), rng.uniform(0, 2 * np.pi)
        lhs = sph.eval_sh(n, -m, th, ph)
        rhs = (-1) ** m * np.conj(sph.eval_sh(n, m, th, ph))
        assert abs(lhs - rhs) < 1e-14


def test_sh_orthonormality_by_quadrature():
    TH, PH, W = sphere_quadrature()
    y21 = sph.eval_sh(2, 1, TH, PH)
    norm = np.sum(np.abs(y21) ** 2 * W)
    assert abs(norm - 1.0) < 1e-6
    # cross terms vanish
    y31 = sph.eval_sh(3, 1, TH, PH)
    assert abs(np.sum(y21 * np.conj(y31) * W)) < 1e-10


def test_sh_order_out_of_range():
    with pytest.raises(ValueError):
        sph.eval_sh(2, 3, 0.5, 0.5)


def test_sh_stack_matches_eval():
    rng = np.random.default_rng(5)
    th = rng.uniform(0, np.pi, 7)
    ph = rng.uniform(0, 2 * np.pi, 7)
    stack = sph.sh_stack(4, th, ph)
    for n in range(5):
        for m in range(-n, n + 1):
            np.testing.assert_allclose(stack[n][m + n], sph.eval_sh(n, m, th, ph),
                                       atol=1e-14)


# ---------------------------------------------------------------------------
# rotations
# ---------------------------------------------------------------------------

def test_rotation_validation():
    with pytest.raises(ValueError):
        sph.Rotation(np.diag([1.0, 1.0, -1.0]))  # reflection
    with pytest.raises(ValueError):
        sph.Rotation(np.ones((3, 3)))


def test_random_rotation_is_proper():
    rng = np.random.default_rng(6)
    for _ in range(1000):
        m = sph.random_rotation(rng).matrix
        assert np.max(np.abs(m.T @ m - np.eye(3))) < 1e-12
        assert abs(np.linalg.det(m) - 1.0) < 1e-12


def test_random_rotation_octant_uniformity():
    # statistical oracle: the image of a fixed vector should spread uniformly
    # over the 8 octants; chi-square with 7 dof at the 1% level
    rng = np.random.default_rng(7)
    v = np.array([1.0, 0.0, 0.0])
    n = 100_000
    counts = np.zeros(8)
    for _ in range(n):
        img = sph.random_rotation(rng).apply(v)
        idx = (img[0] > 0) * 4 + (img[1] > 0) * 2 + (img[2] > 0)
        counts[idx] += 1
    stat = np.sum((counts - n / 8) ** 2 / (n / 8))
    assert stat < chi2.isf(0.01, 7)


def test_euler_roundtrip_including_gimbal():
    rng = np.random.default_rng(8)
    cases = [sph.random_rotation(rng) for _ in range(50)]
    cases += [sph.Rotation.identity(),
              sph.Rotation.from_euler_zyz(0.3, 0.0, 0.0),
              sph.Rotation.from_euler_zyz(0.3, np.pi, 0.0),
              sph.Rotation.from_euler_zyz(-2.0, np.pi, 1.0)]
    for rot in cases:
        a, b, g = rot.euler_zyz()
        back = sph.Rotation.from_euler_zyz(a, b, g)
        np.testing.assert_allclose(back.matrix, rot.matrix, atol=1e-12)


def test_octahedral_group():
    rots = sph.octahedral_rotations()
    assert len(rots) == 24
    mats = {tuple(np.round(r.matrix).astype(int).ravel()) for r in rots}
    assert len(mats) == 24  # all distinct
    # closed under composition
    for r1 in rots[:6]:
        for r2 in rots[:6]:
            prod = tuple(np.round((r1 @ r2).matrix).astype(int).ravel())
            assert prod in mats


# ---------------------------------------------------------------------------
# Wigner-D
# ---------------------------------------------------------------------------

def test_wigner_identity_and_degree_zero():
    rng = np.random.default_rng(9)
    for n in range(6):
        np.testing.assert_allclose(sph.wigner_d(n, sph.Rotation.identity()),
                                   np.eye(2 * n + 1), atol=1e-14)
    for _ in range(5):
        np.testing.assert_allclose(sph.wigner_d(0, sph.random_rotation(rng)),
                                   [[1.0]], atol=1e-14)


def steerability_residual(n, rot, n_theta=30, n_phi=60):
    """Max pointwise defect of Y_n^m(R x) = sum_m' D[m, m'] Y_n^m'(x).

    Row-action convention: coefficients rows transform as F @ D(R), hence the
    rotated harmonic expands along the rows of D.
    """
    th = np.linspace(0.05, np.pi - 0.05, n_theta)
    ph = np.linspace(0.0, 2 * np.pi, n_phi, endpoint=False)
    TH, PH = np.meshgrid(th, ph, indexing="ij")
    x = np.stack(sph.spherical_to_cartesian(1.0, TH, PH), axis=-1)
    xr = x @ rot.matrix.T
    _, TR, PR = sph.cartesian_to_spherical(xr[..., 0], xr[..., 1], xr[..., 2])
    D = sph.wigner_d(n, rot)
    y = sph.sh_stack(n, TH, PH)[n]
    yr = sph.sh_stack(n, TR, PR)[n]
    mixed = np.tensordot(D, y, axes=(1, 0))
    return float(np.max(np.abs(yr - mixed)))


def test_steerability_all_degrees():
    rng = np.random.default_rng(10)
    for _ in range(20):
        rot = sph.random_rotation(rng)
        for n in range(6):
            assert steerability_residual(n, rot) < 1e-8


def test_wigner_z_rotation_is_diagonal_phase():
    alpha = 0.7342
    rot = sph.Rotation.about_axis(2, alpha)
    D = sph.wigner_d(1, rot)
    off = D - np.diag(np.diag(D))
    assert np.max(np.abs(off)) < 1e-14
    phases = np.angle(np.diag(D))
    np.testing.assert_allclose(phases, [-alpha, 0.0, alpha], atol=1e-12)
    assert steerability_residual(1, rot) < 1e-10


def test_wigner_unitarity_and_composition():
    rng = np.random.default_rng(11)
    for n in range(6):
        for _ in range(20):
            r1, r2 = sph.random_rotation(rng), sph.random_rotation(rng)
            d1, d2 = sph.wigner_d(n, r1), sph.wigner_d(n, r2)
            assert np.max(np.abs(d1 @ d1.conj().T - np.eye(2 * n + 1))) < 1e-10
            d12 = sph.wigner_d(n, r1 @ r2)
            assert np.max(np.abs(d12 - d1 @ d2)) < 1e-10


def test_wigner_rejects_bad_rotation():
    with pytest.raises(ValueError):
        sph.wigner_d(1, np.eye(3) * 2.0)


# ---------------------------------------------------------------------------
# rotation of coefficient rows
# ---------------------------------------------------------------------------

def test_rotate_fourier_vector_identity_and_norm():
    rng = np.random.default_rng(12)
    for n in range(5):
        f = rng.standard_normal(2 * n + 1) + 1j * rng.standard_normal(2 * n + 1)
        np.testing.assert_allclose(sph.rotate_fourier_vector(f, sph.Rotation.identity()),
                                   f, atol=1e-14)
        for _ in range(10):
            fr = sph.rotate_fourier_vector(f, sph.random_rotation(rng))
            assert abs(np.linalg.norm(fr) - np.linalg.norm(f)) < 1e-12


def test_rotate_fourier_vector_against_quadrature_projection():
    # independent oracle: synthesize a band-limited function, sample it at
    # rotated points, and re-project with dense quadrature
    rng = np.random.default_rng(13)
    nmax = 3
    rows = [sph.random_real_coeffs(n, rng) for n in range(nmax + 1)]
    TH, PH, W = sphere_quadrature()

    def synth(th, ph):
        Y = sph.sh_stack(nmax, th, ph)
        return sum(np.tensordot(rows[n], Y[n], axes=(0, 0)) for n in range(nmax + 1))

    rot = sph.random_rotation(rng)
    x = np.stack(sph.spherical_to_cartesian(1.0, TH, PH), axis=-1)
    xr = x @ rot.matrix.T
    _, TR, PR = sph.cartesian_to_spherical(xr[..., 0], xr[..., 1], xr[..., 2])
    projected = project_onto_sh(synth(TR, PR), nmax, TH, PH, W)
    for n in range(nmax + 1):
        expected = sph.rotate_fourier_vector(rows[n], rot)
        np.testing.assert_allclose(projected[n], expected, atol=1e-8)


def test_real_coeff_helpers():
    rng = np.random.default_rng(14)
    for n in range(5):
        row = sph.random_real_coeffs(n, rng)
        assert sph.real_symmetry_defect(row) < 1e-15
        # rotations of real functions stay real
        fr = sph.rotate_fourier_vector(row, sph.random_rotation(rng))
        assert sph.real_symmetry_defect(fr) < 1e-12


# ---------------------------------------------------------------------------
# Clebsch-Gordan
# ---------------------------------------------------------------------------

def test_cg_trivial_pairs():
    c00 = sph.clebsch_gordan(0, 0)
    np.testing.assert_allclose(c00.matrix, [[1.0]])
    for n in (1, 2, 3):
        c0n = sph.clebsch_gordan(0, n)
        np.testing.assert_allclose(c0n.matrix, np.eye(2 * n + 1), atol=1e-14)


def test_cg_against_sympy_oracle():
    from sympy import S
    from sympy.physics.quantum.cg import CG

    rng = np.random.default_rng(15)
    for _ in range(60):
        n1, n2 = int(rng.integers(0, 4)), int(rng.integers(0, 4))
        n = int(rng.integers(abs(n1 - n2), n1 + n2 + 1))
        m1 = int(rng.integers(-n1, n1 + 1))
        m2 = int(rng.integers(-n2, n2 + 1))
        m = m1 + m2
        if abs(m) > n:
            continue
        ref = float(CG(S(n1), S(m1), S(n2), S(m2), S(n), S(m)).doit())
        assert abs(sph.cg_coefficient(n1, m1, n2, m2, n, m) - ref) < 1e-13


def test_cg_known_values():
    assert abs(sph.cg_coefficient(1, 1, 1, -1, 0, 0) - 1 / math.sqrt(3)) < 1e-14
    assert abs(sph.cg_coefficient(1, 0, 1, 0, 2, 0) - math.sqrt(2 / 3)) < 1e-14
    assert abs(sph.cg_coefficient(1, 1, 1, 1, 2, 2) - 1.0) < 1e-14
    assert abs(sph.cg_coefficient(1, 0, 1, 0, 1, 0)) < 1e-14


def test_cg_sparsity_exact_zeros():
    for n1, n2 in [(1, 1), (1, 2), (2, 2), (2, 3)]:
        cg = sph.clebsch_gordan(n1, n2)
        row = 0
        for n in cg.degrees:
            for m in range(-n, n + 1):
                for m1 in range(-n1, n1 + 1):
                    for m2 in range(-n2, n2 + 1):
                        if m1 + m2 != m:
                            assert cg.matrix[row, cg.col_index(m1, m2)] == 0.0
                row += 1


def test_cg_orthogonality():
    for n1, n2 in [(1, 1), (2, 2), (3, 4), (4, 4)]:
        c = sph.clebsch_gordan(n1, n2).matrix
        assert np.max(np.abs(c @ c.T - np.eye(c.shape[0]))) < 1e-10


def block_diag_residual(n1, n2, rot):
    cg = sph.clebsch_gordan(n1, n2)
    kron = np.kron(sph.wigner_d(n1, rot), sph.wigner_d(n2, rot))
    size = cg.matrix.shape[0]
    bd = np.zeros((size, size), dtype=np.complex128)
    for i in cg.degrees:
        blk = cg.row_block(i)
        bd[blk, blk] = sph.wigner_d(i, rot)
    return float(np.max(np.abs(kron - cg.matrix.T @ bd @ cg.matrix)))


def test_cg_block_diagonalization():
    rng = np.random.default_rng(16)
    for _ in range(20):
        rot = sph.random_rotation(rng)
        for n1 in range(5):
            for n2 in range(n1, 5):
                assert block_diag_residual(n1, n2, rot) < 1e-10
