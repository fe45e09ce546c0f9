"""Closed-form perturbation bounds and the sample-size planner.

All functions are scalar or small dense-matrix computations in double
precision.  Exponential tails are evaluated from their log-exponent so a
huge exponent yields ``inf``/``0`` instead of an ``OverflowError``.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import DimensionError, GapCollapse
from .spectral import SpectralSplit, _sigma_vector

SQRT2 = math.sqrt(2.0)


def _exp(x: float) -> float:
    return math.inf if x > 709.0 else math.exp(x)


@dataclass(frozen=True)
class BoundInputs:
    """Parameters of one noisy-SVD setting.

    ``sigma1`` holds the nonzero singular values (vector or diagonal
    matrix); ``u1_max`` is the largest absolute entry of ``U1``.
    """

    eps: float
    n: int
    k: int
    sigma1: tuple
    gamma: float = 1.0
    beta: float = 0.25
    u1_max: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "sigma1", tuple(float(s) for s in _sigma_vector(self.sigma1)))
        if not 1 <= self.k < self.n:
            raise DimensionError(f"need 1 <= k < n, got k={self.k}, n={self.n}")
        if len(self.sigma1) != self.k:
            raise DimensionError(f"sigma1 has {len(self.sigma1)} entries, expected k={self.k}")
        if min(self.sigma1) <= 0:
            raise ValueError("sigma1 entries must be positive")
        if self.eps < 0:
            raise ValueError("eps must be non-negative")
        if not 0 < self.beta < 0.5:
            raise ValueError(f"beta must lie in (0, 1/2), got {self.beta}")
        if self.gamma < 0:
            raise ValueError("gamma must be non-negative")
        if not 0 < self.u1_max <= 1:
            raise ValueError("u1_max must lie in (0, 1]")

    @classmethod
    def from_split(cls, split: SpectralSplit, eps: float, gamma: float = 1.0,
                   beta: float = 0.25) -> "BoundInputs":
        return cls(eps=eps, n=split.n, k=split.k, sigma1=tuple(split.sigma),
                   gamma=gamma, beta=beta, u1_max=split.u1_max)

    @property
    def sigma_min(self) -> float:
        return min(self.sigma1)

    @property
    def sigma_inv_norm(self) -> float:
        return 1.0 / self.sigma_min


def alphas(k: int, n: int, gamma: float):
    """The three spectral-norm budgets that recur in the error terms."""
    if not 1 <= k < n:
        raise DimensionError(f"need 1 <= k < n, got k={k}, n={n}")
    a1 = 1.0 + gamma + math.sqrt(k / n)
    return a1, 2.0 * a1, 2.0 + gamma


class ErrorTerms(NamedTuple):
    E1: float
    E2: float
    E3: float
    E4: float
    delta1: float


def error_terms(inputs: BoundInputs) -> ErrorTerms:
    eps, n, k, beta = inputs.eps, inputs.n, inputs.k, inputs.beta
    s = inputs.sigma_inv_norm
    a1, a2, a3 = alphas(k, n, inputs.gamma)

    e1 = (
        eps**3 * s**2 * (a1**2 * a3 + 2 * a1**2 * a2 + 2 * a1 * a2 * a3)
        + eps**4 * s**3 * (a1**2 * a2**2 + 2 * a1**2 * a2 * a3)
        + eps**5 * s**4 * (a1**2 * a2**2 * a3)
    )
    e2 = (
        eps**2 * s**2 * a1**2
        + 2 * eps**3 * s**3 * a1**2 * a2
        + eps**4 * s**4 * a1**2 * a2**2
    )
    e3 = eps**2 * (1 + k) * (1 + 2 / math.sqrt(n)) * (n - k) ** (-0.5 + beta) * s**2
    e4 = eps * a1 * s + eps**2 * s**2 * a1 * a3
    delta1 = inputs.sigma_min - (2 + inputs.gamma) * eps
    return ErrorTerms(e1, e2, e3, e4, delta1)


def delta2(sigma1, eps: float, gamma: float) -> float:
    """Gap used when all nonzero singular values are distinct.

    A non-positive value means the distinct-spectrum refinement does not
    apply (e.g. repeated singular values).
    """
    s = np.sort(_sigma_vector(sigma1))
    gap = float(np.min(np.diff(s))) if s.size > 1 else math.inf
    return min(gap, float(s[0])) - 2 * (2 + gamma) * eps


def probability_floor(n: int, k: int, beta: float, gamma: float) -> float:
    """Lower bound on the probability that the main bound holds (may be
    negative, i.e. vacuous)."""
    t1 = _exp(-((n - k) ** beta) + math.log(k * (n + k)))
    t2 = _exp(-n * gamma**2 / 2)
    return 1.0 - 3.0 * t1 - 4.0 * t2


REPORT_KEYS = (
    "alpha1", "alpha2", "alpha3", "e1", "e2", "e3", "e4",
    "delta1", "delta2", "rhs", "prob_floor", "valid", "violated_conditions",
)


@dataclass
class BoundReport:
    alpha1: float
    alpha2: float
    alpha3: float
    e1: float
    e2: float
    e3: float
    e4: float
    delta1: float
    delta2: float | None
    rhs: float
    prob_floor: float
    valid: bool
    violated_conditions: list = field(default_factory=list)

    @property
    def vacuous(self) -> bool:
        return self.prob_floor <= 0

    def to_dict(self) -> dict:
        """Flat JSON-ready mapping; non-finite floats become ``None``."""
        out = asdict(self)
        for key, val in out.items():
            if isinstance(val, float) and not math.isfinite(val):
                out[key] = None
        return out


def theorem_bound(inputs: BoundInputs) -> BoundReport:
    """Max-norm bound on the deviation of the noisy singular vectors from
    the Gaussian predictor, with its probability floor.

    The precondition checked on ``E2`` is ``E2 <= 1/(2 sqrt(k))`` (the
    condition the orthogonalization step actually needs).
    """
    a1, a2, a3 = alphas(inputs.k, inputs.n, inputs.gamma)
    e1, e2, e3, e4, d1 = error_terms(inputs)
    k = inputs.k
    rk = math.sqrt(k)

    violated = []
    if not d1 > 0:
        violated.append("delta1 > 0")
    if not e2 <= 1 / (2 * rk):
        violated.append("E2 <= 1/(2*sqrt(k))")
    if not rk * e2 < 1:
        violated.append("sqrt(k)*E2 < 1")

    if violated:
        rhs = math.inf
    else:
        r2k = math.sqrt(2 * k)
        rhs = (
            r2k * e1 / (d1 * (1 - e1))
            + r2k * (inputs.u1_max + e4) * (SQRT2 + 1) * rk * e2 / (1 - rk * e2)
            + e3
        )
    return BoundReport(
        alpha1=a1, alpha2=a2, alpha3=a3,
        e1=e1, e2=e2, e3=e3, e4=e4,
        delta1=d1,
        delta2=delta2(inputs.sigma1, inputs.eps, inputs.gamma),
        rhs=rhs,
        prob_floor=probability_floor(inputs.n, k, inputs.beta, inputs.gamma),
        valid=not violated,
        violated_conditions=violated,
    )


def dopico_delta(sigma1, sigma1_noisy, sigma2=()) -> float:
    """Gap between the noisy leading spectrum and the trailing spectrum,
    capped by ``sigma_min(Sigma1) + sigma_min(Sigma1~)``."""
    s1 = _sigma_vector(sigma1)
    t1 = _sigma_vector(sigma1_noisy)
    s2 = np.asarray(sigma2, dtype=float).ravel()
    cap = float(s1.min() + t1.min())
    if s2.size == 0:
        return cap
    return min(float(np.min(np.abs(t1[:, None] - s2[None, :]))), cap)


def dopico_bound(Y, Y_noisy, split: SpectralSplit, noisy: SpectralSplit, delta: float | None = None):
    """Frobenius bound on the jointly aligned singular frames.

    Returns ``(bound, delta)``.  ``delta`` defaults to the exact gap from
    both spectra; pass the ``delta1`` lower bound to use the a-priori route.
    """
    Y = np.asarray(Y, dtype=float)
    Y_noisy = np.asarray(Y_noisy, dtype=float)
    if delta is None:
        trailing = np.linalg.svd(Y, compute_uv=False)[split.k:]
        delta = dopico_delta(split.sigma, noisy.sigma, trailing)
    if not delta > 0:
        raise GapCollapse(f"gap delta={delta:g} is not positive")
    diff = Y - Y_noisy
    R = diff @ noisy.V1
    S = diff.T @ noisy.U1
    return float(np.hypot(np.linalg.norm(R, "fro"), np.linalg.norm(S, "fro")) / delta), float(delta)


def weyl_gaps(A, E):
    """Per-index singular value shifts under ``A -> A + E`` and ``||E||_2``."""
    A = np.asarray(A, dtype=float)
    E = np.asarray(E, dtype=float)
    if A.shape != E.shape:
        raise DimensionError(f"shape mismatch {A.shape} vs {E.shape}")
    sa = np.linalg.svd(A, compute_uv=False)
    sb = np.linalg.svd(A + E, compute_uv=False)
    return np.abs(sa - sb), float(np.linalg.norm(E, 2))


def szarek_threshold(k: int, n: int, gamma: float) -> float:
    return 1.0 + math.sqrt(k / n) + gamma


def szarek_tail(k: int, n: int, gamma: float) -> float:
    """Bound on P(largest singular value of an n x k N(0, 1/n) matrix
    exceeds ``1 + sqrt(k/n) + gamma``)."""
    return _exp(-n * gamma**2 / 2)


def product_tail(n: int, beta: float):
    """Threshold and tail bound for the mean of ``n`` products of
    independent standard normals: P(mean > n^(beta - 1/2)) <= 2 exp(-n^beta)."""
    if n < 2:
        raise DimensionError("n must be at least 2")
    return n ** (-0.5 + beta), 2.0 * _exp(-(n**beta))


class BlockBudget(NamedTuple):
    t11: float
    off_diagonal: float
    full: float
    prob: float

    @property
    def informative(self) -> bool:
        return self.prob > 0


def block_spectral_budget(k: int, n: int, gamma: float) -> BlockBudget:
    """Spectral-norm budgets for the quadrants of an n x n N(0, 1/n) matrix.

    ``off_diagonal`` applies to both ``T12`` and ``T21``; ``full`` applies to
    ``T`` and ``T22``.
    """
    if not 1 <= k < n:
        raise DimensionError(f"need 1 <= k < n, got k={k}, n={n}")
    r = math.sqrt(k / n)
    return BlockBudget(
        t11=gamma + 2 * r,
        off_diagonal=1 + gamma + r,
        full=2 + gamma,
        prob=1 - 4 * _exp(-(n - k) * gamma**2 / 2),
    )


def block_norm_bound(a11: float, a12: float, a21: float, a22: float) -> float:
    """Upper bound on a 2x2 block matrix's spectral norm from its quadrant norms."""
    if min(a11, a12, a21, a22) < 0:
        raise ValueError("quadrant norms must be non-negative")
    return SQRT2 * max(math.hypot(a11, a21), math.hypot(a12, a22))


class Feasibility(NamedTuple):
    feasible: bool
    threshold: float
    ratio: float


def feasibility_threshold(n: int, beta: float, u1_max: float) -> float:
    """Largest noise level for which the Gaussian term still leads:
    ``min(n^-beta, 1/(u1_max sqrt(n)))``."""
    return min(n ** (-beta), 1.0 / (u1_max * math.sqrt(n)))


def feasibility(inputs: BoundInputs, limit: float = 1.0) -> Feasibility:
    """Compare ``eps`` with the Gaussian-dominance threshold.

    ``ratio`` is ``eps / threshold``; the Gaussian term is taken to dominate
    when it stays below ``limit``.
    """
    return feasibility_from(inputs.eps, inputs.n, inputs.beta, inputs.u1_max, limit)


def feasibility_from(eps: float, n: int, beta: float, u1_max: float, limit: float = 1.0) -> Feasibility:
    threshold = feasibility_threshold(n, beta, u1_max)
    ratio = eps / threshold
    return Feasibility(feasible=ratio < limit, threshold=threshold, ratio=ratio)


def min_samples_per_symbol(alpha: float) -> int:
    """Smallest ``L`` with ``2/sqrt(L) <= alpha``, i.e. ``ceil(4/alpha^2)``."""
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    return math.ceil(4.0 / alpha**2 - 1e-9)


def mpsk_feasible(L: int, alpha: float) -> bool:
    return L >= min_samples_per_symbol(alpha)
