"""MPSK order detection by PCA embedding and mean-shift clustering.

``L`` samples per symbol over ``N_sym`` symbols are stacked into an
``L x N_sym`` matrix whose noiseless part has rank two (one for BPSK).
After normalization the top two left singular vectors project every column
onto a scaled constellation diagram; the predicted noise radius sets the
mean-shift bandwidth, and the number of modes is the detected order.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from . import bounds
from .errors import DegenerateInput, InvariantViolation

ORDERS = (2, 4, 8, 16, 32)
RANK1_GUARD = 0.1
SIGNAL_POWER = 0.5  # unit-amplitude cosine
RADIUS_QUANTILE = 2.45


def snr_to_n0(snr_db: float) -> float:
    """Noise level ``N0`` for a per-sample SNR in dB (signal power 1/2)."""
    return SIGNAL_POWER * 10.0 ** (-snr_db / 10.0)


def n0_to_snr(n0: float) -> float:
    return 10.0 * math.log10(SIGNAL_POWER / n0)


@dataclass(frozen=True)
class MpskScenario:
    """Signal synthesis parameters.

    ``noise_factor`` maps ``N0`` to the per-sample noise variance
    (``variance = noise_factor * N0``).  The default 0.5 reads ``N0/2`` as
    the two-sided noise density seen by each sample.
    """

    M_order: int = 4
    f_c: float = 1e9
    T: float = 1e-7
    theta_c: float = 0.0
    L: int = 21
    N_sym: int = 200
    N0: float = 0.0
    seed: int = 0
    noise_factor: float = 0.5

    def __post_init__(self):
        if self.M_order not in ORDERS:
            raise InvariantViolation(f"M_order must be one of {ORDERS}, got {self.M_order}")
        if self.L < 3:
            raise InvariantViolation("L must be at least 3")
        if self.N_sym < self.M_order:
            raise InvariantViolation("N_sym must be at least M_order")
        if self.N0 < 0 or self.noise_factor <= 0:
            raise InvariantViolation("N0 must be non-negative and noise_factor positive")
        cycles = self.f_c * self.T
        if abs(cycles - round(cycles)) > 1e-6 * max(1.0, abs(cycles)):
            raise InvariantViolation(f"f_c*T must be an integer, got {cycles!r}")
        K = self.cycles
        if K % self.L == 0:
            raise InvariantViolation(f"L={self.L} divides f_c*T={K}")
        if (2 * K) % self.L == 0:
            # the sampled carrier then aliases onto a single real direction
            raise InvariantViolation(f"L={self.L} divides 2*f_c*T={2 * K}")

    @property
    def cycles(self) -> int:
        return int(round(self.f_c * self.T))

    @property
    def noise_variance(self) -> float:
        return self.noise_factor * self.N0

    @property
    def snr_db(self) -> float:
        return n0_to_snr(self.N0) if self.N0 > 0 else math.inf

    def replace(self, **changes) -> "MpskScenario":
        return MpskScenario(**{**asdict(self), **changes})


def draw_phases(scenario: MpskScenario, rng: np.random.Generator | None = None) -> np.ndarray:
    """Phase indices ``i`` (phase ``2 pi i / M``), uniform over the alphabet."""
    if rng is None:
        rng = np.random.default_rng(scenario.seed)
    return rng.integers(scenario.M_order, size=scenario.N_sym)


def carrier_phase(scenario: MpskScenario) -> np.ndarray:
    l = np.arange(1, scenario.L + 1)
    return 2 * np.pi * scenario.cycles * l / scenario.L + scenario.theta_c


def synth_matrix(scenario: MpskScenario):
    """Return ``(Y, phase_index)`` for one seeded realization.

    Phases are drawn first and the noise second from the same generator, so
    the noiseless part does not depend on ``N0``.
    """
    rng = np.random.default_rng(scenario.seed)
    idx = draw_phases(scenario, rng)
    theta = 2 * np.pi * idx / scenario.M_order
    Y = np.cos(carrier_phase(scenario)[:, None] + theta[None, :])
    noise = rng.standard_normal(Y.shape)
    if scenario.N0 > 0:
        Y = Y + math.sqrt(scenario.noise_variance) * noise
    return Y, idx


def reference_factors(scenario: MpskScenario, phase_index=None):
    """Closed-form rank-two factors ``(U, V, Sigma)`` of the noiseless matrix."""
    if phase_index is None:
        phase_index = draw_phases(scenario)
    L, N = scenario.L, scenario.N_sym
    theta = 2 * np.pi * np.asarray(phase_index) / scenario.M_order
    shift = np.array([0.0, np.pi / 2])
    U = math.sqrt(2 / L) * np.cos(carrier_phase(scenario)[:, None] - shift[None, :])
    V = math.sqrt(2 / N) * np.cos(theta[:, None] + shift[None, :])
    Sigma = (math.sqrt(L * N) / 2) * np.eye(2)
    return U, V, Sigma


def normalize(Y):
    """Scale so the signal singular values are O(1); returns ``(Y~, 2/sqrt(L))``."""
    Y = np.asarray(Y, dtype=float)
    L, N = Y.shape
    return 2 * Y / math.sqrt(L * N), 2 / math.sqrt(L)


@dataclass
class ConstellationEmbedding:
    points: np.ndarray
    singular_values: tuple
    rank1_flag: bool
    basis: np.ndarray = field(repr=False, default=None)


def embed(Y_tilde, guard: float = RANK1_GUARD) -> ConstellationEmbedding:
    """Project columns on the top two left singular vectors."""
    Y_tilde = np.asarray(Y_tilde, dtype=float)
    U, s, _ = np.linalg.svd(Y_tilde, full_matrices=False)
    if s.size == 0 or s[0] <= 0:
        raise DegenerateInput("matrix has no nonzero singular value")
    basis = U[:, :2]
    s2 = float(s[1]) if s.size > 1 else 0.0
    return ConstellationEmbedding(
        points=(basis.T @ Y_tilde).T,
        singular_values=(float(s[0]), s2),
        rank1_flag=bool(s2 / s[0] < guard),
        basis=basis,
    )


def predicted_radius(N0: float, L: int, N_sym: int) -> float:
    """95% radius of the embedded per-point noise: 2.45 sqrt(2 N0 (1 - 2/N) / (L N))."""
    if N_sym <= 2:
        raise ValueError("N_sym must exceed 2")
    return RADIUS_QUANTILE * math.sqrt(2 * N0 * (1 - 2 / N_sym) / (L * N_sym))


@dataclass
class ClusterResult:
    modes: np.ndarray
    assignments: np.ndarray
    M_hat: int
    radius_used: float
    converged: bool = True
    warnings: list = field(default_factory=list)


def mean_shift(points, radius: float, max_iter: int = 500, tol: float = 1e-3,
               merge: float = 0.5) -> ClusterResult:
    """Gaussian-kernel mean shift with bandwidth ``radius``.

    Every point climbs until its step drops below ``tol * radius``; modes
    closer than ``merge * radius`` are fused (first come, first kept).
    Trajectories still moving after ``max_iter`` steps are reported in
    ``warnings`` and simply assigned to their nearest mode.
    """
    X = np.asarray(points, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.shape[0] == 0:
        raise ValueError("need at least one point")
    if not radius > 0:
        raise ValueError("radius must be positive")

    Z = X.copy()
    active = np.ones(len(Z), dtype=bool)
    inv2h2 = 0.5 / radius**2
    for _ in range(max_iter):
        if not active.any():
            break
        z = Z[active]
        d2 = np.sum((z[:, None, :] - X[None, :, :]) ** 2, axis=-1)
        w = np.exp(-(d2 - d2.min(axis=1, keepdims=True)) * inv2h2)
        new = (w @ X) / w.sum(axis=1, keepdims=True)
        step = np.linalg.norm(new - z, axis=1)
        Z[active] = new
        idx = np.flatnonzero(active)
        active[idx[step < tol * radius]] = False

    modes: list[np.ndarray] = []
    for z in Z[~active]:
        if not any(np.linalg.norm(z - m) < merge * radius for m in modes):
            modes.append(z)
    warnings = []
    if active.any():
        warnings.append(f"NoConvergence: {int(active.sum())} trajectories hit the {max_iter}-step cap")
        if not modes:
            modes = [Z[active][0]]
    modes_arr = np.array(modes)
    dist = np.linalg.norm(Z[:, None, :] - modes_arr[None, :, :], axis=-1)
    return ClusterResult(
        modes=modes_arr,
        assignments=np.argmin(dist, axis=1),
        M_hat=len(modes_arr),
        radius_used=radius,
        converged=not active.any(),
        warnings=warnings,
    )


def snap_order(m_hat: int) -> int:
    """Nearest admissible PSK order (ties go to the smaller order)."""
    return min(ORDERS, key=lambda m: (abs(m - m_hat), m))


@dataclass
class Classification:
    M_hat: int
    clusters: ClusterResult
    embedding: ConstellationEmbedding
    radius: float
    eps_effective: float
    feasible: bool
    min_L: int
    alpha: float

    def summary(self) -> dict:
        return {
            "M_hat": self.M_hat,
            "radius": self.radius,
            "eps_effective": self.eps_effective,
            "singular_values": list(self.embedding.singular_values),
            "rank1_flag": self.embedding.rank1_flag,
            "modes": self.clusters.modes.tolist(),
            "feasible": self.feasible,
            "min_L": self.min_L,
            "alpha": self.alpha,
            "warnings": list(self.clusters.warnings),
        }


def classify(Y_noisy, N0: float, alpha: float = 0.5, guard: float = RANK1_GUARD,
             snap: bool = False, min_radius: float = 1e-9) -> Classification:
    """Detect the PSK order of a raw ``L x N`` sample matrix.

    The bandwidth is the predicted noise radius for ``N0``, floored at
    ``min_radius`` times the embedded signal scale so noiseless input still
    clusters.  When the second singular value is negligible (BPSK) only the
    first embedded coordinate is clustered.
    """
    Y_noisy = np.asarray(Y_noisy, dtype=float)
    L, N = Y_noisy.shape
    Y_tilde, eps_eff = normalize(Y_noisy)
    emb = embed(Y_tilde, guard)
    scale = float(np.max(np.linalg.norm(emb.points, axis=1)))
    radius = max(predicted_radius(N0, L, N), min_radius * scale)
    pts = emb.points[:, :1] if emb.rank1_flag else emb.points
    clusters = mean_shift(pts, radius)
    m_hat = snap_order(clusters.M_hat) if snap else clusters.M_hat
    return Classification(
        M_hat=m_hat,
        clusters=clusters,
        embedding=emb,
        radius=radius,
        eps_effective=eps_eff,
        feasible=bounds.mpsk_feasible(L, alpha),
        min_L=bounds.min_samples_per_symbol(alpha),
        alpha=alpha,
    )


def classify_scenario(scenario: MpskScenario, **kwargs) -> Classification:
    Y, _ = synth_matrix(scenario)
    return classify(Y, scenario.N0, **kwargs)


def _align_2d(source, target):
    """Orthogonal 2x2 map taking ``source`` rows closest to ``target`` rows."""
    Z1, _, Z2t = np.linalg.svd(source.T @ target)
    return Z1 @ Z2t


def embedded_displacements(scenario: MpskScenario, draws: int, seed0: int = 0) -> np.ndarray:
    """Per-point distance between noisy and noiseless embeddings.

    The phases stay fixed (from ``scenario.seed``); draw ``j`` adds fresh
    noise from seed ``seed0 + j``.  Each noisy embedding is orthogonally
    aligned to the noiseless one first, since PCA fixes it only up to a
    rotation of the plane.
    """
    Y0, _ = synth_matrix(scenario.replace(N0=0.0))
    clean = embed(normalize(Y0)[0]).points
    sd = math.sqrt(scenario.noise_variance)
    out = []
    for j in range(draws):
        noise = np.random.default_rng(seed0 + j).standard_normal(Y0.shape)
        pts = embed(normalize(Y0 + sd * noise)[0]).points
        R = _align_2d(pts, clean)
        out.append(np.linalg.norm(pts @ R - clean, axis=1))
    return np.concatenate(out)


@dataclass
class SweepRow:
    M_order: int
    snr_db: float
    runs: int
    successes: int

    @property
    def rate(self) -> float:
        return self.successes / self.runs


def snr_sweep(base: MpskScenario, snr_grid: Sequence[float], runs: int,
              orders: Sequence[int] = (2, 4, 8), alpha: float = 0.5,
              jobs: int = 1) -> list[SweepRow]:
    """Success rate of exact order detection over an (order, SNR) grid.

    Run ``r`` of every cell uses seed ``base.seed + r`` so cells share
    phase draws and noise directions, differing only in noise level.
    """
    if not len(snr_grid):
        raise ValueError("snr grid must be non-empty")
    cells = [(m, snr) for m in orders for snr in snr_grid]

    def run_cell(cell):
        m, snr = cell
        hits = 0
        for r in range(runs):
            sc = base.replace(M_order=m, N0=snr_to_n0(snr), seed=base.seed + r)
            hits += classify_scenario(sc, alpha=alpha).M_hat == m
        return SweepRow(m, float(snr), runs, hits)

    if jobs <= 1:
        return [run_cell(c) for c in cells]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(run_cell, cells))
