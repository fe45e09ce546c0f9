"""Partitioned SVD model and the first-order perturbation objects built on it.

The noiseless matrix ``Y`` is square with exact rank ``k`` so that its SVD
splits as ``(U1, U2) diag(Sigma1, 0) (V1, V2)^T``.  A noisy observation is
``Y + eps * W``.  Everything here is a pure function of explicit inputs; no
random numbers are drawn in this module.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, RankMismatch, SingularSigma

ORTHO_TOL = 1e-10
ALGEBRA_TOL = 1e-12
SIGN_TOL = 1e-12
SINGULAR_TOL = 1e-14
DEGENERATE_TOL = 1e-12


def _frozen(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


def _sigma_vector(sigma1):
    """Accept either a k x k diagonal matrix or a length-k vector."""
    s = np.asarray(sigma1, dtype=float)
    if s.ndim == 2:
        s = np.diag(s)
    if s.ndim != 1 or s.size == 0:
        raise DimensionError(f"sigma1 must be a diagonal matrix or vector, got shape {np.shape(sigma1)}")
    return s


def _sigma_inverse(sigma1):
    s = _sigma_vector(sigma1)
    if np.any(np.abs(s) < SINGULAR_TOL):
        raise SingularSigma(f"singular value below {SINGULAR_TOL:g}: {s.min():g}")
    return s, 1.0 / s


def max_norm(A) -> float:
    """Largest absolute entry of ``A`` (0 for an empty array)."""
    A = np.asarray(A)
    return float(np.max(np.abs(A))) if A.size else 0.0


def _sign_fix(cols, tol=SIGN_TOL):
    """Signs that make the first entry above ``tol`` of each column positive."""
    signs = np.ones(cols.shape[1])
    for j in range(cols.shape[1]):
        nz = np.flatnonzero(np.abs(cols[:, j]) > tol)
        if nz.size and cols[nz[0], j] < 0:
            signs[j] = -1.0
    return signs


@dataclass(frozen=True)
class SpectralSplit:
    """Ground-truth SVD partition of a rank-``k`` square matrix."""

    n: int
    k: int
    U1: np.ndarray
    U2: np.ndarray
    Sigma1: np.ndarray
    V1: np.ndarray
    V2: np.ndarray

    def __post_init__(self):
        for name in ("U1", "U2", "Sigma1", "V1", "V2"):
            object.__setattr__(self, name, _frozen(getattr(self, name)))
        n, k = self.n, self.k
        if self.U1.shape != (n, k) or self.V1.shape != (n, k):
            raise DimensionError(f"U1/V1 must be {n}x{k}")
        if self.U2.shape != (n, n - k) or self.V2.shape != (n, n - k):
            raise DimensionError(f"U2/V2 must be {n}x{n - k}")
        if self.Sigma1.shape != (k, k):
            raise DimensionError(f"Sigma1 must be {k}x{k}")

    @property
    def sigma(self) -> np.ndarray:
        return np.diag(self.Sigma1).copy()

    @property
    def U(self) -> np.ndarray:
        return np.hstack([self.U1, self.U2])

    @property
    def V(self) -> np.ndarray:
        return np.hstack([self.V1, self.V2])

    @property
    def sigma_min(self) -> float:
        return float(self.sigma.min())

    @property
    def sigma_inv_norm(self) -> float:
        """Spectral norm of ``Sigma1^{-1}``."""
        return 1.0 / self.sigma_min

    @property
    def u1_max(self) -> float:
        return max_norm(self.U1)

    def reconstruct(self) -> np.ndarray:
        return (self.U1 * self.sigma) @ self.V1.T

    def check(self, tol=ORTHO_TOL):
        """Raise ``AssertionError`` if any structural invariant fails."""
        k = self.k
        eye = np.eye(k)
        assert max_norm(self.U1.T @ self.U1 - eye) <= tol
        assert max_norm(self.V1.T @ self.V1 - eye) <= tol
        assert max_norm(self.U1.T @ self.U2) <= tol
        assert max_norm(self.V1.T @ self.V2) <= tol
        s = self.sigma
        assert np.all(s > 0) and np.all(np.diff(s) <= 0)


def split_svd(Y, k: int, *, check_rank: bool = True, rank_tol: float = 1e-8) -> SpectralSplit:
    """Partition the SVD of a square matrix after its ``k`` leading triplets.

    With ``check_rank`` the matrix must have numerical rank exactly ``k``
    (``sigma_{k+1} / sigma_k < rank_tol``).  Turn it off to split a noisy,
    full-rank observation in the known-rank regime.

    Sign convention: the first nonzero entry of every column of ``U1`` is
    positive, and the matching ``V1`` column is flipped with it.  For an
    exact-rank input the null-space bases ``U2`` and ``V2`` are unpaired, so
    each gets the same rule independently.
    """
    Y = np.asarray(Y, dtype=float)
    if Y.ndim != 2 or Y.shape[0] != Y.shape[1]:
        raise DimensionError(f"expected a square matrix, got shape {Y.shape}")
    n = Y.shape[0]
    if n < 2:
        raise DimensionError("matrix dimension must be at least 2")
    if not 1 <= k < n:
        raise DimensionError(f"rank k={k} must satisfy 1 <= k < n={n}")

    U, s, Vt = np.linalg.svd(Y)
    V = Vt.T
    if check_rank:
        if not s[k - 1] > 0 or s[k] / s[k - 1] >= rank_tol:
            raise RankMismatch(
                f"numerical rank is not {k}: sigma_k={s[k - 1]:.3e}, sigma_k+1={s[k]:.3e}"
            )

    lead = _sign_fix(U[:, :k])
    U[:, :k] *= lead
    V[:, :k] *= lead
    if check_rank:
        U[:, k:] *= _sign_fix(U[:, k:])
        V[:, k:] *= _sign_fix(V[:, k:])
    else:
        tail = _sign_fix(U[:, k:])
        U[:, k:] *= tail
        V[:, k:] *= tail

    return SpectralSplit(
        n=n, k=k,
        U1=U[:, :k], U2=U[:, k:],
        Sigma1=np.diag(s[:k]),
        V1=V[:, :k], V2=V[:, k:],
    )


def _check_noise(split: SpectralSplit, W):
    W = np.asarray(W, dtype=float)
    if W.shape != (split.n, split.n):
        raise DimensionError(f"noise must be {split.n}x{split.n}, got {W.shape}")
    return W


@dataclass(frozen=True)
class CBlocks:
    """Noise expressed in the noiseless singular bases, ``U^T W V``."""

    C11: np.ndarray
    C12: np.ndarray
    C21: np.ndarray
    C22: np.ndarray

    @property
    def k(self) -> int:
        return self.C11.shape[0]

    @property
    def n(self) -> int:
        return self.C11.shape[0] + self.C22.shape[0]

    def assemble(self) -> np.ndarray:
        return np.block([[self.C11, self.C12], [self.C21, self.C22]])

    @classmethod
    def from_matrix(cls, C, k: int) -> "CBlocks":
        C = np.asarray(C, dtype=float)
        return cls(C[:k, :k], C[:k, k:], C[k:, :k], C[k:, k:])


def rotate_noise(split: SpectralSplit, W) -> CBlocks:
    W = _check_noise(split, W)
    return CBlocks.from_matrix(split.U.T @ W @ split.V, split.k)


@dataclass(frozen=True)
class CorrectorPair:
    """Near-unitary left/right correctors ``P`` and ``O`` with their
    second-order blocks ``B`` and ``D``."""

    P: np.ndarray
    O: np.ndarray
    B: np.ndarray
    D: np.ndarray


def second_order_blocks(c: CBlocks, sigma1):
    """Return ``(B, D)``, the second-order corrector blocks."""
    _, inv = _sigma_inverse(sigma1)
    B = -(c.C22 @ c.C12.T) * inv**2 + ((c.C21 * inv) @ c.C11) * inv
    D = -(inv**2)[:, None] * (c.C21.T @ c.C22) + ((inv[:, None] * c.C11) * inv) @ c.C12
    return B, D


def build_correctors(c: CBlocks, sigma1, eps: float) -> CorrectorPair:
    """Build ``P`` and ``O`` so that ``P^T (Sigma + eps C) O`` is block diagonal
    up to terms of order ``eps**3``."""
    s, inv = _sigma_inverse(sigma1)
    k, n = c.k, c.n
    if s.size != k:
        raise DimensionError(f"sigma1 has {s.size} entries, blocks have k={k}")
    B, D = second_order_blocks(c, s)

    P = np.eye(n)
    P[:k, k:] = -eps * (inv[:, None] * c.C21.T) + eps**2 * B.T
    P[k:, :k] = eps * (c.C21 * inv) - eps**2 * B

    O = np.eye(n)
    O[:k, k:] = -eps * (inv[:, None] * c.C12) + eps**2 * D
    O[k:, :k] = eps * (c.C12.T * inv) - eps**2 * D.T
    return CorrectorPair(P=P, O=O, B=B, D=D)


def first_order_bases(split: SpectralSplit, c: CBlocks, pair: CorrectorPair, eps: float):
    """Leading ``k`` columns of ``U P`` and ``V O`` in closed form."""
    inv = 1.0 / split.sigma
    up1 = split.U1 + eps * split.U2 @ (c.C21 * inv) - eps**2 * split.U2 @ pair.B
    vo1 = split.V1 + eps * split.V2 @ (c.C12.T * inv) - eps**2 * split.V2 @ pair.D.T
    return up1, vo1


def block_diagonal_target(c: CBlocks, sigma1, eps: float) -> np.ndarray:
    """Second-order block-diagonal part of ``P^T (Sigma + eps C) O``.

    Upper block ``Sigma1 + eps C11 + eps^2 (Sigma1^-1 C21^T C21 + C12 C12^T Sigma1^-1)``,
    lower block ``eps C22 - eps^2 C21 Sigma1^-1 C12``.
    """
    s, inv = _sigma_inverse(sigma1)
    k, n = c.k, c.n
    out = np.zeros((n, n))
    out[:k, :k] = (
        np.diag(s) + eps * c.C11
        + eps**2 * (inv[:, None] * (c.C21.T @ c.C21) + (c.C12 @ c.C12.T) * inv)
    )
    out[k:, k:] = eps * c.C22 - eps**2 * (c.C21 * inv) @ c.C12
    return out


def diagonalize(c: CBlocks, sigma1, eps: float, pair: CorrectorPair | None = None) -> np.ndarray:
    """``P^T (Sigma + eps C) O`` evaluated exactly."""
    s, _ = _sigma_inverse(sigma1)
    if pair is None:
        pair = build_correctors(c, s, eps)
    k, n = c.k, c.n
    rotated = eps * c.assemble()
    rotated[:k, :k] += np.diag(s)
    return pair.P.T @ rotated @ pair.O


def off_diagonal_max(A, k: int) -> float:
    A = np.asarray(A)
    return max(max_norm(A[:k, k:]), max_norm(A[k:, :k]))


@dataclass(frozen=True)
class StageResiduals:
    """Residuals of the successive diagonalization stages.

    ``offdiag_max`` measures how far ``P^T U^T Y~ V O`` is from block
    diagonal; ``err_max`` compares it to the second-order block-diagonal
    target; ``unitarity_defect`` is ``||(UP)_1^T (UP)_1 - I||_F`` and
    ``qr_distance`` is ``||Q_{(UP)_1} - (UP)_1||_2``.
    """

    offdiag_max: float
    err_max: float
    err_norm: float
    unitarity_defect: float
    qr_distance: float


def orthonormalize(A):
    """Thin QR with a positive diagonal in ``R``."""
    Q, R = np.linalg.qr(np.asarray(A, dtype=float))
    signs = np.sign(np.diag(R))
    signs[signs == 0] = 1.0
    return Q * signs, signs[:, None] * R


def unitarity_defect(A) -> float:
    A = np.asarray(A)
    return float(np.linalg.norm(A.T @ A - np.eye(A.shape[1]), "fro"))


def qr_distance(A) -> float:
    Q, _ = orthonormalize(A)
    return float(np.linalg.norm(Q - A, 2))


def stage_residuals(split: SpectralSplit, c: CBlocks, eps: float) -> StageResiduals:
    pair = build_correctors(c, split.Sigma1, eps)
    diag = diagonalize(c, split.Sigma1, eps, pair)
    err = diag - block_diagonal_target(c, split.Sigma1, eps)
    up1, _ = first_order_bases(split, c, pair, eps)
    return StageResiduals(
        offdiag_max=off_diagonal_max(diag, split.k),
        err_max=max_norm(err),
        err_norm=float(np.linalg.norm(err, 2)),
        unitarity_defect=unitarity_defect(up1),
        qr_distance=qr_distance(up1),
    )


def gaussian_predictor(split: SpectralSplit, W) -> np.ndarray:
    """First-order Gaussian model of the left singular vector deviation,
    ``U2 U2^T W V1 Sigma1^{-1}``."""
    W = _check_noise(split, W)
    _, inv = _sigma_inverse(split.Sigma1)
    return split.U2 @ ((split.U2.T @ W @ split.V1) * inv)


def predictor_variance(split: SpectralSplit) -> np.ndarray:
    """Entrywise variance of the predictor when ``W`` has N(0, 1/n) entries."""
    proj_diag = np.sum(split.U2**2, axis=1)
    return np.outer(proj_diag, 1.0 / split.sigma**2) / split.n


@dataclass(frozen=True)
class AlignmentRotation:
    M: np.ndarray
    objective: float
    singular_values: np.ndarray
    degenerate: bool = False


def alignment_objective(M, U1, U1_noisy, V1=None, V1_noisy=None) -> float:
    du = np.linalg.norm(U1 @ M - U1_noisy, "fro")
    if V1 is None:
        return float(du)
    dv = np.linalg.norm(V1 @ M - V1_noisy, "fro")
    return float(np.hypot(du, dv))


def procrustes_rotation(U1, U1_noisy, V1=None, V1_noisy=None) -> AlignmentRotation:
    """Unitary ``M`` minimizing ``||U1 M - U1~||_F^2 + ||V1 M - V1~||_F^2``.

    The minimizer is ``Z1 Z2^T`` for an SVD ``Z1 S Z2^T`` of
    ``U1^T U1~ + V1^T V1~``.  When that cross product has a (numerically)
    zero singular value the minimizer is not unique; one is still returned
    and ``degenerate`` is set.

    Omitting both right frames aligns the left frames alone, which is the
    rotation that makes ``U1~ - U1 M`` second order in the noise.
    """
    if (V1 is None) != (V1_noisy is None):
        raise DimensionError("pass both right frames or neither")
    mats = [np.asarray(a, dtype=float) for a in (U1, U1_noisy, V1, V1_noisy) if a is not None]
    shape = mats[0].shape
    if any(m.shape != shape for m in mats):
        raise DimensionError(f"all frames must share shape {shape}")
    k = shape[1]
    if all(np.array_equal(a, b) for a, b in zip(mats[::2], mats[1::2])):
        # identical frames: the exact minimizer, free of rounding
        sv = np.full(k, 2.0 if V1 is not None else 1.0)
        return AlignmentRotation(M=np.eye(k), objective=0.0, singular_values=sv)
    cross = mats[0].T @ mats[1]
    if V1 is not None:
        cross = cross + mats[2].T @ mats[3]
    Z1, S, Z2t = np.linalg.svd(cross)
    M = Z1 @ Z2t
    return AlignmentRotation(
        M=M,
        objective=alignment_objective(M, *mats),
        singular_values=S,
        degenerate=bool(S.min() < DEGENERATE_TOL),
    )


def aligned_residual(U1, U1_noisy, M, eps: float, N):
    """Return ``(||(U1~ - U1 M) - eps N||_max, ||eps N||_max)``."""
    U1, U1_noisy, N = (np.asarray(a, dtype=float) for a in (U1, U1_noisy, N))
    if U1.shape != U1_noisy.shape or U1.shape != N.shape:
        raise DimensionError("U1, U1~ and N must share a shape")
    gauss = eps * N
    return max_norm(U1_noisy - U1 @ M - gauss), max_norm(gauss)


@dataclass(frozen=True)
class ProofTerms:
    """Three-way split of the aligned deviation for a given rotation ``M``.

    ``lhs`` is ``||U1~ - U1 M - eps U2 C21 Sigma1^-1 M||_max``; by the
    triangle inequality it never exceeds ``term_i + term_ii + term_iii``.
    """

    lhs: float
    term_i: float
    term_ii: float
    term_iii: float


def proof_terms(split: SpectralSplit, noisy: SpectralSplit, W, eps: float, M) -> ProofTerms:
    c = rotate_noise(split, W)
    pair = build_correctors(c, split.Sigma1, eps)
    up1, _ = first_order_bases(split, c, pair, eps)
    Q, _ = orthonormalize(up1)
    inv = 1.0 / split.sigma
    lhs = noisy.U1 - split.U1 @ M - eps * split.U2 @ (c.C21 * inv) @ M
    return ProofTerms(
        lhs=max_norm(lhs),
        term_i=max_norm(noisy.U1 - Q @ M),
        term_ii=eps**2 * max_norm(split.U2 @ pair.B @ M),
        term_iii=max_norm((Q - up1) @ M),
    )
