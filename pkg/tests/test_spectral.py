import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from noisysvd import spectral as sp
from noisysvd.errors import DimensionError, RankMismatch, SingularSigma


def low_rank(n, spectrum, seed):
    rng = np.random.default_rng(seed)
    Q1, _ = np.linalg.qr(rng.standard_normal((n, n)))
    Q2, _ = np.linalg.qr(rng.standard_normal((n, n)))
    k = len(spectrum)
    return Q1[:, :k] @ np.diag(spectrum) @ Q2[:, :k].T


def noise(n, seed):
    return np.random.default_rng(seed).standard_normal((n, n)) / math.sqrt(n)


def test_split_reconstructs_and_is_orthonormal():
    Y = low_rank(8, [3.0, 2.0, 0.5], 0)
    s = sp.split_svd(Y, 3)
    s.check()
    assert np.allclose(s.reconstruct(), Y, atol=1e-12)
    assert np.allclose(s.sigma, [3.0, 2.0, 0.5])
    assert s.U.shape == (8, 8) and s.V.shape == (8, 8)
    assert s.sigma_inv_norm == pytest.approx(2.0)
    assert s.u1_max == pytest.approx(np.abs(s.U1).max())


def test_split_sign_convention():
    s = sp.split_svd(low_rank(6, [2.0, 1.0], 4), 2)
    for col in s.U1.T:
        first = col[np.abs(col) > 1e-12][0]
        assert first > 0


def test_split_is_deterministic():
    Y = low_rank(6, [2.0, 1.0], 9)
    a, b = sp.split_svd(Y, 2), sp.split_svd(Y.copy(), 2)
    assert np.array_equal(a.U1, b.U1) and np.array_equal(a.V2, b.V2)


def test_split_rejects_bad_input():
    with pytest.raises(DimensionError):
        sp.split_svd(np.ones((3, 4)), 1)
    with pytest.raises(DimensionError):
        sp.split_svd(np.eye(4), 4)
    with pytest.raises(RankMismatch):
        sp.split_svd(np.eye(4), 2)
    noisy = low_rank(5, [2.0, 1.0], 1) + 1e-3 * noise(5, 2)
    assert sp.split_svd(noisy, 2, check_rank=False).k == 2


def test_split_arrays_are_read_only():
    s = sp.split_svd(low_rank(5, [1.0], 0), 1)
    with pytest.raises(ValueError):
        s.U1[0, 0] = 1.0


def test_singular_sigma():
    c = sp.CBlocks.from_matrix(noise(4, 0), 2)
    with pytest.raises(SingularSigma):
        sp.build_correctors(c, [1.0, 0.0], 0.1)


def test_blocks_roundtrip():
    C = noise(7, 3)
    assert np.array_equal(sp.CBlocks.from_matrix(C, 3).assemble(), C)


def test_rotate_noise_matches_definition():
    Y, W = low_rank(6, [2.0, 1.0], 5), noise(6, 6)
    s = sp.split_svd(Y, 2)
    assert np.allclose(sp.rotate_noise(s, W).assemble(), s.U.T @ W @ s.V)


@pytest.mark.parametrize("seed", range(5))
def test_corrector_off_diagonal_is_third_order(seed):
    Y, W = low_rank(6, [2.0, 1.0], seed), noise(6, 100 + seed)
    s = sp.split_svd(Y, 2)
    c = sp.rotate_noise(s, W)
    ratios = []
    for eps in (1e-1, 1e-2, 1e-3):
        r = sp.stage_residuals(s, c, eps)
        ratios.append(r.offdiag_max / eps**3)
        assert r.offdiag_max <= 10 * eps**3
        assert r.unitarity_defect <= 10 * eps**2
    assert max(ratios) / min(ratios) < 1.5


def test_target_matches_diagonalized_to_third_order():
    s = sp.split_svd(low_rank(6, [2.0, 1.0], 1), 2)
    c = sp.rotate_noise(s, noise(6, 2))
    errs = [sp.stage_residuals(s, c, e).err_max for e in (1e-2, 1e-3)]
    assert errs[1] / errs[0] == pytest.approx(1e-3, rel=0.3)


def test_first_order_bases_match_products():
    s = sp.split_svd(low_rank(6, [2.0, 1.0], 3), 2)
    c = sp.rotate_noise(s, noise(6, 4))
    pair = sp.build_correctors(c, s.Sigma1, 0.05)
    up1, vo1 = sp.first_order_bases(s, c, pair, 0.05)
    assert np.allclose(up1, (s.U @ pair.P)[:, :2])
    assert np.allclose(vo1, (s.V @ pair.O)[:, :2])


def test_zero_eps_correctors_are_identity():
    s = sp.split_svd(low_rank(5, [2.0, 1.0], 0), 2)
    pair = sp.build_correctors(sp.rotate_noise(s, noise(5, 1)), s.Sigma1, 0.0)
    assert np.array_equal(pair.P, np.eye(5)) and np.array_equal(pair.O, np.eye(5))


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(2, 8), m=st.integers(1, 4))
def test_orthonormalize(seed, n, m):
    m = min(m, n)
    A = np.random.default_rng(seed).standard_normal((n, m))
    Q, R = sp.orthonormalize(A)
    assert np.allclose(Q.T @ Q, np.eye(m), atol=1e-10)
    assert np.allclose(Q @ R, A, atol=1e-10)
    assert np.all(np.diag(R) >= 0)
    assert sp.qr_distance(Q) < 1e-10 and sp.unitarity_defect(Q) < 1e-10


def test_predictor_shape_and_variance():
    s = sp.split_svd(low_rank(10, [2.0, 1.0], 0), 2)
    var = sp.predictor_variance(s)
    draws = np.stack([sp.gaussian_predictor(s, noise(10, i)) for i in range(4000)])
    assert draws.shape == (4000, 10, 2)
    assert np.allclose(draws.var(axis=0) / var, 1.0, atol=0.12)
    assert np.allclose(var, (np.diag(s.U2 @ s.U2.T)[:, None] / s.sigma**2) / 10)


def test_predictor_is_orthogonal_to_signal():
    s = sp.split_svd(low_rank(7, [3.0, 1.0], 2), 2)
    N = sp.gaussian_predictor(s, noise(7, 3))
    assert np.allclose(s.U1.T @ N, 0, atol=1e-12)


def test_predictor_rejects_wrong_shape():
    s = sp.split_svd(low_rank(5, [1.0], 0), 1)
    with pytest.raises(DimensionError):
        sp.gaussian_predictor(s, np.zeros((4, 4)))


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), k=st.integers(1, 4))
def test_procrustes_is_optimal_and_orthogonal(seed, k):
    rng = np.random.default_rng(seed)
    n = 8
    U1 = np.linalg.qr(rng.standard_normal((n, k)))[0]
    Ut = np.linalg.qr(U1 + 0.3 * rng.standard_normal((n, k)))[0]
    rot = sp.procrustes_rotation(U1, Ut)
    assert np.allclose(rot.M.T @ rot.M, np.eye(k), atol=1e-10)
    for _ in range(5):
        R = np.linalg.qr(rng.standard_normal((k, k)))[0]
        assert rot.objective <= sp.alignment_objective(R, U1, Ut) + 1e-12


def test_procrustes_recovers_rotation():
    rng = np.random.default_rng(0)
    U1 = np.linalg.qr(rng.standard_normal((6, 3)))[0]
    V1 = np.linalg.qr(rng.standard_normal((6, 3)))[0]
    R = np.linalg.qr(rng.standard_normal((3, 3)))[0]
    rot = sp.procrustes_rotation(U1, U1 @ R, V1, V1 @ R)
    assert np.allclose(rot.M, R, atol=1e-12) and rot.objective < 1e-12


def test_procrustes_degenerate_flag():
    U1 = np.eye(4)[:, :2]
    Ut = np.eye(4)[:, 2:]
    assert sp.procrustes_rotation(U1, Ut).degenerate


def test_procrustes_requires_both_right_frames():
    U1 = np.eye(4)[:, :2]
    with pytest.raises(DimensionError):
        sp.procrustes_rotation(U1, U1, V1=U1)


@pytest.mark.parametrize("seed", range(5))
def test_proof_terms_triangle_inequality(seed):
    Y, W = low_rank(10, [2.0, 1.0], seed), noise(10, seed + 50)
    s = sp.split_svd(Y, 2)
    eps = 1e-2
    noisy = sp.split_svd(Y + eps * W, 2, check_rank=False)
    M = sp.procrustes_rotation(s.U1, noisy.U1).M
    t = sp.proof_terms(s, noisy, W, eps, M)
    assert t.lhs <= t.term_i + t.term_ii + t.term_iii + 1e-15


def test_aligned_residual_second_order():
    Y = low_rank(20, [2.0, 1.0], 0)
    s = sp.split_svd(Y, 2)
    W = noise(20, 1)
    out = []
    for eps in (1e-2, 1e-3):
        noisy = sp.split_svd(Y + eps * W, 2, check_rank=False)
        M = sp.procrustes_rotation(s.U1, noisy.U1).M
        out.append(sp.aligned_residual(s.U1, noisy.U1, M, eps, sp.gaussian_predictor(s, W))[0])
    assert out[1] / out[0] == pytest.approx(1e-2, rel=0.2)
