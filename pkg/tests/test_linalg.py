"""Kernel tests: every routine is checked against an independent oracle."""

import numpy as np
import pytest

from precis import linalg
from precis.errors import DimensionError, SymmetryError, UnstableError


def test_kron_identity_blocks():
    assert np.array_equal(linalg.kron(np.eye(2), np.eye(2)), np.eye(4))


def test_kron_hand_expansion():
    out = linalg.kron(np.array([[1.0, 2.0]]), np.array([[3.0], [4.0]]))
    assert np.array_equal(out, np.array([[3.0, 6.0], [4.0, 8.0]]))


def test_kron_vec_identity_against_direct_product():
    rng = np.random.default_rng(0)
    for _ in range(20):
        a, b, c = (rng.standard_normal((2, 2)) for _ in range(3))
        lhs = linalg.vec(a @ b @ c)
        rhs = linalg.kron(c.T, a) @ linalg.vec(b)
        assert np.allclose(lhs, rhs, atol=1e-12)


def test_commutation_trivial():
    assert np.array_equal(linalg.commutation_matrix(1, 1), np.array([[1.0]]))


def test_commutation_is_permutation():
    t = linalg.commutation_matrix(3, 4)
    assert np.all((t == 0) | (t == 1))
    assert np.array_equal(t.sum(axis=0), np.ones(12))
    assert np.array_equal(t.sum(axis=1), np.ones(12))


def test_commutation_transposes_vec():
    rng = np.random.default_rng(1)
    for m, n in [(3, 2), (2, 5), (4, 4)]:
        t = linalg.commutation_matrix(m, n)
        y = rng.standard_normal((m, n))
        assert np.allclose(t @ linalg.vec(y), linalg.vec(y.T))


@pytest.mark.parametrize(
    "a,b,expected",
    [(3.0, 1.0, 2.0), (-3.0, 1.0, -2.0), (0.5, 1.0, 0.0)],
)
def test_soft_threshold_scalars(a, b, expected):
    out = linalg.soft_threshold(np.array([a]), np.array([b]))
    assert out[0] == pytest.approx(expected)


def test_soft_threshold_properties():
    rng = np.random.default_rng(2)
    a = rng.standard_normal(50)
    b = np.abs(rng.standard_normal(50))
    assert np.array_equal(linalg.soft_threshold(a, np.zeros(50)), a)
    assert np.all(np.abs(linalg.soft_threshold(a, b)) <= np.abs(a) + 1e-15)


def test_soft_threshold_rejects_negative_margin():
    with pytest.raises(DimensionError):
        linalg.soft_threshold(np.ones(2), np.array([1.0, -0.1]))


def test_psd_project_diagonal_clamp():
    out = linalg.psd_project(np.diag([2.0, -1.0]), 1e-6)
    assert np.allclose(out, np.diag([2.0, 1e-6]), atol=1e-12)


def test_psd_project_fixed_point_and_idempotence():
    rng = np.random.default_rng(3)
    q, _ = np.linalg.qr(rng.standard_normal((4, 4)))
    pd = q @ np.diag([0.5, 1.0, 2.0, 3.0]) @ q.T
    assert np.allclose(linalg.psd_project(pd, 1e-6), 0.5 * (pd + pd.T), atol=1e-12)
    p = rng.standard_normal((5, 5))
    p = p + p.T
    once = linalg.psd_project(p, 1e-6)
    twice = linalg.psd_project(once, 1e-6)
    assert np.allclose(once, twice, atol=1e-10)


def test_psd_project_is_frobenius_nearest_among_clamped_spectra():
    # Oracle: search over many feasible candidates built from random
    # orthobases with clamped spectra; none may be closer than the output.
    rng = np.random.default_rng(4)
    eps = 1e-6
    p = rng.standard_normal((5, 5))
    p = p + p.T
    proj = linalg.psd_project(p, eps)
    best = np.linalg.norm(p - proj)
    for _ in range(300):
        q, _ = np.linalg.qr(rng.standard_normal((5, 5)))
        lam = np.maximum(eps, rng.standard_normal(5) * 3.0)
        cand = (q * lam) @ q.T
        assert np.linalg.norm(p - cand) >= best - 1e-9
    w = np.linalg.eigvalsh(proj)
    assert w[0] >= eps - 1e-12


def test_psd_project_rejects_asymmetric():
    with pytest.raises(SymmetryError):
        linalg.psd_project(np.array([[0.0, 1.0], [0.0, 0.0]]), 1e-6)


def test_lstsq_pinv_identity_and_mean():
    b = np.array([1.0, -2.0, 3.0])
    assert np.allclose(linalg.lstsq_pinv(np.eye(3), b), b)
    x = linalg.lstsq_pinv(np.array([[1.0], [1.0]]), np.array([1.0, 3.0]))
    assert x[0] == pytest.approx(2.0)


def test_lstsq_pinv_rank_deficient_matches_normal_equations():
    rng = np.random.default_rng(5)
    a = rng.standard_normal((4, 2))
    a = np.hstack([a, a[:, :1] + a[:, 1:]])  # third column dependent
    b = rng.standard_normal(4)
    x = linalg.lstsq_pinv(a, b)
    # Normal-equation oracle via eigendecomposition of A^T A.
    ata = a.T @ a
    atb = a.T @ b
    w, v = np.linalg.eigh(ata)
    inv = np.where(w > 1e-10 * w[-1], 1.0 / np.where(w > 0, w, 1.0), 0.0)
    x_ref = v @ (inv * (v.T @ atb))
    assert np.linalg.norm(a @ x - b) == pytest.approx(np.linalg.norm(a @ x_ref - b), abs=1e-10)
    assert np.allclose(x, x_ref, atol=1e-8)


def test_reduced_vec_map_round_trip():
    rng = np.random.default_rng(6)
    for n in (1, 2, 5):
        rvmap = linalg.ReducedVecMap(n)
        x = rng.standard_normal((n, n))
        x = x + x.T
        assert np.array_equal(rvmap.unvec_r(rvmap.vec_r(x)), x)
        assert rvmap.size == n * (n + 1) // 2


def test_reduced_columns_equivalent_on_symmetric_inputs():
    rng = np.random.default_rng(7)
    for n in (1, 2, 4):
        rvmap = linalg.ReducedVecMap(n)
        a = rng.standard_normal((6, n * n))
        x = rng.standard_normal((n, n))
        x = x + x.T
        lhs = a @ linalg.vec(x)
        rhs = rvmap.reduced_columns(a) @ rvmap.vec_r(x)
        assert np.allclose(lhs, rhs, atol=1e-12)


def test_reduced_columns_counts():
    rvmap = linalg.ReducedVecMap(2)
    out = rvmap.reduced_columns(np.eye(4))
    assert out.shape == (4, 3)
    x = np.array([[1.0, 2.0], [2.0, 5.0]])
    assert np.allclose(out @ rvmap.vec_r(x), linalg.vec(x))


def test_duplication_matrix():
    rvmap = linalg.ReducedVecMap(3)
    d = rvmap.duplication()
    rng = np.random.default_rng(8)
    x = rng.standard_normal((3, 3))
    x = x + x.T
    assert np.allclose(d @ rvmap.vec_r(x), linalg.vec(x))


def test_sym_eig_known_spectra():
    w, _ = linalg.sym_eig(np.eye(3))
    assert np.allclose(w, np.ones(3))
    w, _ = linalg.sym_eig(np.diag([3.0, 1.0, 2.0]))
    assert np.allclose(w, [1.0, 2.0, 3.0])


def test_sym_eig_reconstruction():
    rng = np.random.default_rng(9)
    p = rng.standard_normal((6, 6))
    p = p + p.T
    w, r = linalg.sym_eig(p)
    assert np.allclose((r * w) @ r.T, p, atol=1e-8 * np.linalg.norm(p))
    assert np.allclose(r.T @ r, np.eye(6), atol=1e-10)


def test_lyap_scalar_and_zero():
    assert linalg.lyap_solve(np.array([[-1.0]]), np.array([[1.0]]))[0, 0] == pytest.approx(0.5)
    out = linalg.lyap_solve(np.array([[-2.0]]), np.array([[0.0]]))
    assert out[0, 0] == pytest.approx(0.0)


def test_lyap_random_hurwitz_residual():
    rng = np.random.default_rng(10)
    for _ in range(10):
        a = rng.standard_normal((4, 4))
        a = a - (np.max(np.linalg.eigvals(a).real) + 0.5) * np.eye(4)
        w = rng.standard_normal((4, 4))
        w = w @ w.T
        p = linalg.lyap_solve(a, w)
        resid = np.linalg.norm(a @ p + p @ a.T + w)
        assert resid <= 1e-8 * max(1.0, np.linalg.norm(w))
        assert np.allclose(p, p.T)


def test_lyap_rejects_unstable():
    with pytest.raises(UnstableError):
        linalg.lyap_solve(np.array([[1.0]]), np.array([[1.0]]))


def test_frobenius_block_identity():
    # ||P||_F^2 equals the sum over any block partition and ||vec(P)||^2.
    rng = np.random.default_rng(11)
    p = rng.standard_normal((7, 9))
    total = np.linalg.norm(p) ** 2
    splits_r, splits_c = [0, 2, 5, 7], [0, 3, 4, 9]
    acc = 0.0
    for i in range(3):
        for j in range(3):
            blk = p[splits_r[i] : splits_r[i + 1], splits_c[j] : splits_c[j + 1]]
            acc += np.linalg.norm(blk) ** 2
    assert abs(acc - total) <= 1e-12 * max(1.0, total)
    assert abs(np.linalg.norm(linalg.vec(p)) ** 2 - total) <= 1e-12 * max(1.0, total)
