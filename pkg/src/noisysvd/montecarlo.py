"""Seeded Monte Carlo checks of the noisy-SVD bound and its supporting inequalities.

Noise generator: ``numpy.random.Generator(PCG64(seed)).standard_normal``
(ziggurat sampler), scaled by ``1/sqrt(n)``.  Both pieces are part of
NumPy's stable-stream policy, so a seed gives the same matrix on every
platform.  Trial ``i`` of a scenario uses seed ``noise_seed + i``.
"""
from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import bounds
from .errors import InsufficientSamples
from .spectral import (
    SpectralSplit,
    aligned_residual,
    gaussian_predictor,
    predictor_variance,
    procrustes_rotation,
    proof_terms,
    split_svd,
)

SCALES = ("unit", "problem")
ALIGNMENTS = ("left", "joint")
TRIAL_COLUMNS = ("trial_index", "resid_max", "rhs", "covered", "gauss_term_max",
                 "rotation_objective", "flags")
MIN_GAUSSIANITY_TRIALS = 100


def rng_for(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


def sample_noise(n: int, seed: int) -> np.ndarray:
    """n x n matrix with i.i.d. N(0, 1/n) entries, deterministic in ``seed``."""
    if n < 2:
        raise ValueError("n must be at least 2")
    return rng_for(seed).standard_normal((n, n)) / math.sqrt(n)


def random_orthogonal(n: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-distributed orthogonal matrix via sign-corrected QR."""
    Q, R = np.linalg.qr(rng.standard_normal((n, n)))
    return Q * np.sign(np.diag(R))


@dataclass(frozen=True)
class NoiseScenario:
    n: int
    k: int
    spectrum: tuple
    eps: float
    gamma: float = 1.0
    beta: float = 0.25
    basis_seed: int = 0
    trials: int = 1
    noise_seed: int = 0
    scale: str = "unit"
    alignment: str = "left"

    def __post_init__(self):
        object.__setattr__(self, "spectrum", tuple(float(s) for s in self.spectrum))
        s = self.spectrum
        if len(s) != self.k:
            raise ValueError(f"spectrum needs k={self.k} values, got {len(s)}")
        if not 1 <= self.k < self.n:
            raise ValueError(f"need 1 <= k < n, got k={self.k}, n={self.n}")
        if min(s) <= 0 or any(a < b for a, b in zip(s, s[1:])):
            raise ValueError("spectrum must be positive and non-increasing")
        if self.trials < 1:
            raise ValueError("trials must be at least 1")
        if self.eps < 0:
            raise ValueError("eps must be non-negative")
        if self.scale not in SCALES:
            raise ValueError(f"scale must be one of {SCALES}")
        if self.alignment not in ALIGNMENTS:
            raise ValueError(f"alignment must be one of {ALIGNMENTS}")

    @property
    def effective_eps(self) -> float:
        """Noise level in the N(0, 1/n) convention used by the bounds.

        ``scale="problem"`` reads ``eps`` as multiplying N(0, 1) noise,
        which is ``eps * sqrt(n)`` times normalized noise.
        """
        return self.eps * math.sqrt(self.n) if self.scale == "problem" else self.eps

    def noiseless(self) -> np.ndarray:
        rng = rng_for(self.basis_seed)
        U = random_orthogonal(self.n, rng)
        V = random_orthogonal(self.n, rng)
        return (U[:, : self.k] * np.array(self.spectrum)) @ V[:, : self.k].T


@dataclass(frozen=True)
class TrialContext:
    """Per-scenario quantities shared by every trial."""

    scenario: NoiseScenario
    Y: np.ndarray
    split: SpectralSplit
    report: bounds.BoundReport

    @classmethod
    def build(cls, scenario: NoiseScenario) -> "TrialContext":
        Y = scenario.noiseless()
        split = split_svd(Y, scenario.k)
        inputs = bounds.BoundInputs.from_split(split, scenario.effective_eps,
                                               scenario.gamma, scenario.beta)
        return cls(scenario, Y, split, bounds.theorem_bound(inputs))


@dataclass(frozen=True)
class TrialRecord:
    trial_index: int
    resid_max: float
    rhs: float
    covered: bool
    gauss_term_max: float
    rotation_objective: float
    sigma_gap_max: float
    noise_norm: float
    term_i: float
    term_ii: float
    term_iii: float
    flags: tuple = ()

    def csv_row(self) -> list:
        return [self.trial_index, repr(self.resid_max), repr(self.rhs),
                "true" if self.covered else "false", repr(self.gauss_term_max),
                repr(self.rotation_objective), ";".join(self.flags)]


@dataclass
class TrialOutcome:
    record: TrialRecord
    deviation: np.ndarray  # (U1~ - U1 M) / eps


def _trial(ctx: TrialContext, i: int) -> TrialOutcome:
    sc, split = ctx.scenario, ctx.split
    eps = sc.effective_eps
    W = sample_noise(sc.n, sc.noise_seed + i)
    Y_noisy = ctx.Y + eps * W
    noisy = split_svd(Y_noisy, sc.k, check_rank=False)
    if sc.alignment == "joint":
        rot = procrustes_rotation(split.U1, noisy.U1, split.V1, noisy.V1)
    else:
        rot = procrustes_rotation(split.U1, noisy.U1)
    N = gaussian_predictor(split, W)
    resid, gauss = aligned_residual(split.U1, noisy.U1, rot.M, eps, N)
    gaps, norm = bounds.weyl_gaps(ctx.Y, eps * W)
    terms = proof_terms(split, noisy, W, eps, rot.M)

    flags = []
    if rot.degenerate:
        flags.append("degenerate_alignment")
    if ctx.report.vacuous:
        flags.append("vacuous_floor")
    if not ctx.report.valid:
        flags.append("invalid_bound")
    record = TrialRecord(
        trial_index=i,
        resid_max=resid,
        rhs=ctx.report.rhs,
        covered=bool(resid <= ctx.report.rhs),
        gauss_term_max=gauss,
        rotation_objective=rot.objective,
        sigma_gap_max=float(gaps.max()),
        noise_norm=norm,
        term_i=terms.term_i,
        term_ii=terms.term_ii,
        term_iii=terms.term_iii,
        flags=tuple(flags),
    )
    with np.errstate(divide="ignore", invalid="ignore"):
        deviation = (noisy.U1 - split.U1 @ rot.M) / eps if eps > 0 else np.zeros_like(N)
    return TrialOutcome(record, deviation)


def run_trial(scenario: NoiseScenario, i: int, context: TrialContext | None = None) -> TrialRecord:
    ctx = context if context is not None else TrialContext.build(scenario)
    return _trial(ctx, i).record


def run_outcomes(scenario: NoiseScenario, jobs: int = 1,
                 context: TrialContext | None = None) -> list[TrialOutcome]:
    """Run every trial of ``scenario``; results are ordered by trial index."""
    ctx = context if context is not None else TrialContext.build(scenario)
    indices = range(scenario.trials)
    if jobs <= 1:
        return [_trial(ctx, i) for i in indices]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        out = list(pool.map(lambda i: _trial(ctx, i), indices))
    return sorted(out, key=lambda o: o.record.trial_index)


def run_trials(scenario: NoiseScenario, jobs: int = 1) -> list[TrialRecord]:
    return [o.record for o in run_outcomes(scenario, jobs)]


def binomial_slack(p: float, m: int, z: float = 2.0) -> float:
    p = min(max(p, 0.0), 1.0)
    return z * math.sqrt(p * (1 - p) / m)


@dataclass(frozen=True)
class CoverageReport:
    coverage: float
    verdict: str
    floor: float
    slack: float
    trials: int

    def to_dict(self) -> dict:
        return {"coverage": self.coverage, "verdict": self.verdict,
                "prob_floor": self.floor, "slack": self.slack, "trials": self.trials}


def coverage_report(records: Sequence[TrialRecord], prob_floor: float) -> CoverageReport:
    """Compare the covered fraction with the probability floor.

    PASS when the floor is met up to a two-sigma binomial slack;
    SKIPPED_VACUOUS when the floor is not positive.
    """
    if not records:
        raise InsufficientSamples("coverage needs at least one record")
    m = len(records)
    coverage = sum(r.covered for r in records) / m
    if prob_floor <= 0:
        return CoverageReport(coverage, "SKIPPED_VACUOUS", prob_floor, 0.0, m)
    slack = binomial_slack(prob_floor, m)
    verdict = "PASS" if coverage >= prob_floor - slack else "FAIL"
    return CoverageReport(coverage, verdict, prob_floor, slack, m)


def trials_csv(records: Sequence[TrialRecord]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(TRIAL_COLUMNS)
    for r in records:
        writer.writerow(r.csv_row())
    return buf.getvalue()


def skewness(x, axis=0):
    x = np.asarray(x, dtype=float)
    d = x - x.mean(axis=axis, keepdims=True)
    m2 = np.mean(d**2, axis=axis)
    return np.mean(d**3, axis=axis) / m2**1.5


def excess_kurtosis(x, axis=0):
    x = np.asarray(x, dtype=float)
    d = x - x.mean(axis=axis, keepdims=True)
    m2 = np.mean(d**2, axis=axis)
    return np.mean(d**4, axis=axis) / m2**2 - 3.0


def skewness_se(m: int) -> float:
    """Standard error of the sample skewness of ``m`` Gaussian draws."""
    return math.sqrt(6.0 * (m - 2) / ((m + 1) * (m + 3)))


def kurtosis_se(m: int) -> float:
    return math.sqrt(24.0 * m * (m - 1) ** 2 / ((m - 3) * (m - 2) * (m + 3) * (m + 5)))


@dataclass
class GaussianityReport:
    """Moment diagnostics of pooled singular-vector deviations.

    Per-entry arrays have the shape of ``U1``.  The pooled statistics use
    every entry after centring by its sample mean and dividing by the
    predictor's analytic standard deviation, so variance mismatch shows up
    as excess kurtosis.  Thresholds are ``z`` standard errors of the
    Gaussian sampling distribution at the relevant sample size.
    """

    trials: int
    mean: np.ndarray
    var_ratio: np.ndarray
    skew: np.ndarray
    kurt: np.ndarray
    pooled_skew: float
    pooled_kurt: float
    entry_skew_threshold: float
    entry_kurt_threshold: float
    pooled_skew_threshold: float
    pooled_kurt_threshold: float

    @property
    def max_abs_skew(self) -> float:
        return float(np.max(np.abs(self.skew)))

    @property
    def max_abs_kurt(self) -> float:
        return float(np.max(np.abs(self.kurt)))

    def within(self, skew_limit: float | None = None, kurt_limit: float | None = None) -> bool:
        """True when the pooled moments sit inside the given (or default) limits."""
        sl = self.pooled_skew_threshold if skew_limit is None else skew_limit
        kl = self.pooled_kurt_threshold if kurt_limit is None else kurt_limit
        return abs(self.pooled_skew) < sl and abs(self.pooled_kurt) < kl

    def summary(self) -> dict:
        return {
            "trials": self.trials,
            "pooled_skew": float(self.pooled_skew),
            "pooled_kurt": float(self.pooled_kurt),
            "max_abs_skew": self.max_abs_skew,
            "max_abs_kurt": self.max_abs_kurt,
            "max_var_ratio_error": float(np.max(np.abs(self.var_ratio - 1))),
        }


def gaussianity_diagnostics(deviations, variance, z: float = 3.0) -> GaussianityReport:
    """Moments of ``(U1~ - U1 M) / eps`` stacked over trials (axis 0)."""
    dev = np.asarray(deviations, dtype=float)
    m = dev.shape[0]
    if m < MIN_GAUSSIANITY_TRIALS:
        raise InsufficientSamples(f"need at least {MIN_GAUSSIANITY_TRIALS} trials, got {m}")
    variance = np.asarray(variance, dtype=float)
    mean = dev.mean(axis=0)
    pooled = ((dev - mean) / np.sqrt(variance)).ravel()
    total = pooled.size
    return GaussianityReport(
        trials=m,
        mean=mean,
        var_ratio=dev.var(axis=0) / variance,
        skew=skewness(dev, axis=0),
        kurt=excess_kurtosis(dev, axis=0),
        pooled_skew=float(np.mean(pooled**3) / np.mean(pooled**2) ** 1.5),
        pooled_kurt=float(np.mean(pooled**4) / np.mean(pooled**2) ** 2 - 3.0),
        entry_skew_threshold=z * skewness_se(m),
        entry_kurt_threshold=z * kurtosis_se(m),
        pooled_skew_threshold=z * skewness_se(total),
        pooled_kurt_threshold=z * kurtosis_se(total),
    )


def scenario_gaussianity(scenario: NoiseScenario, jobs: int = 1, z: float = 3.0) -> GaussianityReport:
    ctx = TrialContext.build(scenario)
    outcomes = run_outcomes(scenario, jobs, ctx)
    dev = np.stack([o.deviation for o in outcomes])
    return gaussianity_diagnostics(dev, predictor_variance(ctx.split), z)


def residual_slope(base: NoiseScenario, eps_grid: Sequence[float], jobs: int = 1):
    """Fit log(median resid_max) against log(eps).

    Returns ``(slope, medians, gauss_medians)``.
    """
    medians, gauss = [], []
    for eps in eps_grid:
        sc = NoiseScenario(**{**base.__dict__, "eps": eps})
        recs = run_trials(sc, jobs)
        medians.append(float(np.median([r.resid_max for r in recs])))
        gauss.append(float(np.median([r.gauss_term_max for r in recs])))
    slope = float(np.polyfit(np.log(eps_grid), np.log(medians), 1)[0])
    return slope, medians, gauss


def mgf_oracle(theta: float, sample_count: int, seed: int = 0):
    """Empirical and closed-form E[exp(theta X)] for X a product of two
    independent standard normals (finite for 0 <= theta < 1)."""
    if not 0 <= theta < 1:
        raise ValueError("theta must lie in [0, 1)")
    rng = rng_for(seed)
    x = rng.standard_normal(sample_count) * rng.standard_normal(sample_count)
    return float(np.mean(np.exp(theta * x))), 1.0 / math.sqrt(1.0 - theta**2)


@dataclass(frozen=True)
class TailCheck:
    """Empirical exceedance of a threshold versus its analytic bound."""

    exceedance: float
    bound: float
    samples: int
    slack: float = field(default=0.0)

    @property
    def holds(self) -> bool:
        return self.exceedance <= self.bound + self.slack


def szarek_check(n: int, k: int, gamma: float, draws: int, seed: int = 0) -> TailCheck:
    """Largest singular value of n x k N(0, 1/n) matrices against its tail bound."""
    rng = rng_for(seed)
    thr = bounds.szarek_threshold(k, n, gamma)
    G = rng.standard_normal((draws, n, k)) / math.sqrt(n)
    top = np.linalg.svd(G, compute_uv=False)[:, 0]
    bound = bounds.szarek_tail(k, n, gamma)
    return TailCheck(float(np.mean(top > thr)), bound, draws, binomial_slack(bound, draws))


def product_tail_check(n: int, beta: float, samples: int, seed: int = 0) -> TailCheck:
    rng = rng_for(seed)
    thr, bound = bounds.product_tail(n, beta)
    x = rng.standard_normal((samples, n)) * rng.standard_normal((samples, n))
    return TailCheck(float(np.mean(x.mean(axis=1) > thr)), bound, samples,
                     binomial_slack(min(bound, 1.0), samples))


def block_budget_check(k: int, n: int, gamma: float, draws: int, seed: int = 0) -> TailCheck:
    """Fraction of N(0, 1/n) draws whose quadrant norms all meet their budgets.

    ``exceedance`` is the violating fraction; ``bound`` is ``1 - prob``.
    """
    rng = rng_for(seed)
    budget = bounds.block_spectral_budget(k, n, gamma)
    bad = 0
    for _ in range(draws):
        T = rng.standard_normal((n, n)) / math.sqrt(n)
        norms = [np.linalg.norm(b, 2) for b in (T[:k, :k], T[:k, k:], T[k:, :k], T[k:, k:], T)]
        ok = (norms[0] <= budget.t11 and norms[1] <= budget.off_diagonal
              and norms[2] <= budget.off_diagonal and norms[3] <= budget.full
              and norms[4] <= budget.full)
        bad += not ok
    fail_bound = 1.0 - budget.prob
    return TailCheck(bad / draws, fail_bound, draws, binomial_slack(min(fail_bound, 1.0), draws))


def max_gap_holds(records: Sequence[TrialRecord]) -> bool:
    """Check the recorded singular-value shifts."""
    return all(r.sigma_gap_max <= r.noise_norm * (1 + 1e-12) + 1e-15 for r in records)

