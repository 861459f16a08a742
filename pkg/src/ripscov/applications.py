"""Stochastic consequences: variance bounds, partial correlations, residual laws.

Variance bounds are Rayleigh-quotient brackets ||b||^2 lambda_min <= b^T S b
<= ||b||^2 lambda_max, specialized to the h-functional coefficient vector
b_i = (-1)^(k-i) C(l-i, k-i).  The partial correlation of the first two
vector entries given the third is -s_12/sqrt(s_11 s_22) from the inverse
matrix, cross-checked against the direct regression-residual computation.

Residual diagnostics operate on per-trial normalized vectors: in the dense
regime the scaled difference a_1 V~_1 - a_2 V~_2 collapses (its variance must
trend down in t); in the sparse regime the second Cholesky-inverse row maps
the centered equal-k pair onto a standard Gaussian that is asymptotically
independent of the first coordinate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .algebra import (critical_coefficients, domination_check, same_k_pair_cholesky,
                      scale_coefficients)
from .covariance import AdmissibleSequence
from .errors import NearSingularError, NumericalError, ParameterError
from .functionals import FunctionalSpec, binomial, normalizing_constant
from .moments import MomentKey, MomentTable, unit_ball_volume

DUAL_ROUTE_TOL = 1e-10


@dataclass(frozen=True)
class VarianceBounds:
    coefficients: np.ndarray
    lower: float
    upper: float
    eig_lower: float
    eig_upper: float
    source: str  # "exact-eigenvalues" | "regime-bound" | "conjecture"
    quadratic_form: float | None = None

    def __post_init__(self):
        if self.lower > self.upper + 1e-12 * max(abs(self.upper), 1.0):
            raise NumericalError("variance lower bound exceeds upper bound")


def variance_bounds(b, sigma=None, eig_lower=None, eig_upper=None,
                    source="exact-eigenvalues") -> VarianceBounds:
    """Bracket Var(sum b_i V~_i) = b^T Sigma b by ||b||^2 times eigenvalue bounds."""
    b = np.asarray(b, dtype=float)
    quad = None
    if sigma is not None:
        sigma = np.asarray(sigma, dtype=float)
        if sigma.shape != (b.size, b.size):
            raise ParameterError("coefficient vector length must match the matrix")
        quad = float(b @ sigma @ b)
        if eig_lower is None or eig_upper is None:
            w, _ = kernels.jacobi_eigen(sigma)
            eig_lower = float(w[0]) if eig_lower is None else eig_lower
            eig_upper = float(w[-1]) if eig_upper is None else eig_upper
    if eig_lower is None or eig_upper is None:
        raise ParameterError("need either a matrix or both eigenvalue bounds")
    norm2 = float(b @ b)
    return VarianceBounds(b, max(norm2 * eig_lower, 0.0), norm2 * eig_upper,
                          float(eig_lower), float(eig_upper), source, quad)


def h_coefficients(k: int, l: int) -> np.ndarray:
    """b_i = (-1)^(k-i) C(l-i, k-i) for i = 1..k."""
    if k < 1:
        raise ParameterError("h index must be >= 1 to carry any randomness")
    return np.array([(-1.0) ** (k - i) * binomial(l - i, k - i) for i in range(1, k + 1)])


@dataclass(frozen=True)
class HVarianceReport:
    k: int
    regime: str
    bounds: VarianceBounds
    applicable: bool
    literal_lower: float | None = None  # the source's stated sparse lower bound, reported only


def h_variance_bounds(k: int, d: int, regime: str, table: MomentTable,
                      l: int | None = None) -> HVarianceReport:
    """Variance bracket for the h-functional H_k per regime.

    Uses the count-functional sequence (0,0),...,(k-1,0).  In the sparse
    regime the bracket comes from the exact diagonal eigenvalues
    mu_{i-1}^(0)/i!; the literal lower bound ||b||^2 mu_0^(0) given by the
    source is reported alongside without asserting it equals the eigenvalue
    bound.  In the critical regime the cap is conditional on the domination
    checks and is tagged inapplicable when any of them fails.
    """
    if k < 1:
        raise ParameterError("h variance needs k >= 1")
    l = d if l is None else l
    if k > l:
        raise ParameterError(f"h index k={k} outside 1..{l}")
    b = h_coefficients(k, l)
    norm2 = float(b @ b)
    mu0 = [table.value(MomentKey.single(d, i - 1, 0.0)) for i in range(1, k + 1)]

    if regime == "super":
        a = np.array([math.factorial(i - 1) / mu0[i - 1] for i in range(1, k + 1)])
        top = float(np.sum(1.0 / a**2))
        bounds = variance_bounds(b, eig_lower=0.0, eig_upper=top,
                                 source="exact-eigenvalues")
        return HVarianceReport(k, regime, bounds, True)

    if regime == "sub":
        diag = np.array([mu0[i - 1] / math.factorial(i) for i in range(1, k + 1)])
        bounds = variance_bounds(b, eig_lower=float(diag.min()),
                                 eig_upper=float(diag.max()),
                                 source="exact-eigenvalues")
        return HVarianceReport(k, regime, bounds, True,
                               literal_lower=norm2 * mu0[0])

    if regime == "critical":
        seq = AdmissibleSequence(tuple(FunctionalSpec(i - 1, 0.0)
                                       for i in range(1, k + 1)), d)
        holds = all(domination_check(m, seq, table).holds for m in range(seq.max_k + 1))
        kappa = unit_ball_volume(d)
        best = 0.0
        for m in range(k + 1):
            _, coeffs = critical_coefficients(seq, m)
            if coeffs.size == 0:
                continue
            best = max(best, kappa ** (2 * k - m) * float(np.sum(1.0 / coeffs**2)))
        bounds = variance_bounds(b, eig_lower=0.0, eig_upper=(k + 1) * best,
                                 source="conjecture")
        return HVarianceReport(k, regime, bounds, holds)

    raise ParameterError(f"unknown regime {regime!r}")


def partial_correlation(sigma3) -> float:
    """Partial correlation of entries 1 and 2 given entry 3: -s_12/sqrt(s_11 s_22).

    Also runs the regression-residual computation (x0 = sigma_31/sigma_33 and
    friends) and demands agreement to 1e-10; a disagreement means the matrix
    is too ill-conditioned to trust either route.
    """
    sigma = np.asarray(sigma3, dtype=float)
    if sigma.shape != (3, 3):
        raise ParameterError("partial correlation is defined for a 3x3 matrix")
    w, _ = kernels.jacobi_eigen(sigma)
    if w.min() <= 1e-12 * max(abs(w).max(), 1e-300):
        raise NearSingularError(f"eigenvalue ratio {w.min() / w.max():.3e} too small")
    inv = kernels.inverse(sigma)
    rho = float(-inv[0, 1] / math.sqrt(inv[0, 0] * inv[1, 1]))

    cov11 = sigma[0, 0] - sigma[0, 2] ** 2 / sigma[2, 2]
    cov22 = sigma[1, 1] - sigma[1, 2] ** 2 / sigma[2, 2]
    cov12 = sigma[0, 1] - sigma[0, 2] * sigma[1, 2] / sigma[2, 2]
    rho_residual = float(cov12 / math.sqrt(cov11 * cov22))
    if abs(rho - rho_residual) > DUAL_ROUTE_TOL:
        raise NumericalError(
            f"inverse-matrix route ({rho}) and residual-regression route "
            f"({rho_residual}) disagree beyond {DUAL_ROUTE_TOL}"
        )
    return rho + 0.0  # normalize -0.0


def spearman(x, y) -> float:
    """Spearman rank correlation (average ranks for ties)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size != y.size or x.size < 2:
        raise ParameterError("need two equal-length series of size >= 2")

    def ranks(v):
        order = np.argsort(v, kind="stable")
        r = np.empty(v.size)
        r[order] = np.arange(1, v.size + 1)
        for val in np.unique(v):
            mask = v == val
            if mask.sum() > 1:
                r[mask] = r[mask].mean()
        return r

    rx, ry = ranks(x), ranks(y)
    rx -= rx.mean()
    ry -= ry.mean()
    denom = math.sqrt(float(rx @ rx) * float(ry @ ry))
    if denom == 0.0:
        return 0.0
    return float(rx @ ry) / denom


@dataclass(frozen=True)
class ResidualSeries:
    ts: np.ndarray
    variances: np.ndarray
    kind: str

    def __post_init__(self):
        ts = np.asarray(self.ts, dtype=float)
        if ts.size >= 2 and np.any(np.diff(ts) <= 0):
            raise ParameterError("t grid must be strictly increasing")
        if np.any(np.asarray(self.variances) < 0):
            raise ParameterError("variances must be >= 0")

    @property
    def trend(self) -> float:
        return spearman(self.ts, self.variances)


def difference_residual_series(batches, seq: AdmissibleSequence, i: int, j: int,
                               table: MomentTable) -> ResidualSeries:
    """Per-t variance of a_i V~_i - a_j V~_j over trials (dense-regime residual).

    `batches` is a list of (t, raw) with raw of shape (trials, n).
    """
    a = scale_coefficients(seq, table)
    ts, variances = [], []
    for t, raw in batches:
        raw = np.asarray(raw, dtype=float)
        if raw.shape[0] < 200:
            raise ParameterError("need at least 200 trials per t for a stable variance")
        diff = a[i] * raw[:, i] - a[j] * raw[:, j]
        ts.append(float(t))
        variances.append(float(np.var(diff, ddof=1)))
    return ResidualSeries(np.array(ts), np.array(variances), "dense-difference")


@dataclass(frozen=True)
class GaussianResidualReport:
    trials: int
    mean: float
    variance: float
    correlation: float  # against the first normalized functional
    mean_band: float
    variance_band: float
    correlation_band: float

    @property
    def passes(self) -> dict:
        return {
            "mean": abs(self.mean) <= self.mean_band,
            "variance": abs(self.variance - 1.0) <= self.variance_band,
            "correlation": abs(self.correlation) <= self.correlation_band,
        }

    @property
    def all_pass(self) -> bool:
        return all(self.passes.values())


def gaussian_residual_stats(raw, seq: AdmissibleSequence, t: float, delta: float,
                            table: MomentTable) -> GaussianResidualReport:
    """Sparse-regime Gaussian residual for an equal-k pair.

    Applies the second row of the explicit Cholesky inverse to the
    theoretically centered pair; in the limit the result is N(0,1) and
    independent of the first coordinate, so mean -> 0, variance -> 1,
    correlation -> 0, each with a 3-sigma band for the trial count.
    """
    if seq.n != 2 or seq.pairs[0].k != seq.pairs[1].k:
        raise ParameterError("gaussian residual needs an equal-k pair sequence")
    raw = np.asarray(raw, dtype=float)
    if raw.ndim != 2 or raw.shape[1] != 2 or raw.shape[0] < 2:
        raise ParameterError("raw must be (trials, 2) with at least 2 trials")
    k = seq.pairs[0].k
    d = seq.d
    centered = raw - theoretical_normalized_means(seq, t, delta, table)
    _, g_inv = same_k_pair_cholesky(k, seq.pairs[0].alpha, seq.pairs[1].alpha, d, table)
    z = centered @ g_inv[1]
    n = raw.shape[0]
    corr = float(np.corrcoef(z, raw[:, 0])[0, 1])
    return GaussianResidualReport(
        trials=n,
        mean=float(np.mean(z)),
        variance=float(np.var(z, ddof=1)),
        correlation=corr,
        mean_band=3.0 / math.sqrt(n),
        variance_band=3.0 * math.sqrt(2.0) / math.sqrt(n),
        correlation_band=3.0 / math.sqrt(n),
    )


def theoretical_normalized_means(seq: AdmissibleSequence, t: float, delta: float,
                                 table: MomentTable) -> np.ndarray:
    """E V~ = mu_k^(alpha) t^(k+1) delta^(k(alpha+d)) / ((k+1)! Q); exact on the torus."""
    out = []
    for k, a in seq.pairs:
        mu = table.value(MomentKey.single(seq.d, k, a))
        q = normalizing_constant(t, delta, seq.d, FunctionalSpec(k, a))
        out.append(mu * t ** (k + 1) * delta ** (k * (a + seq.d)) / (math.factorial(k + 1) * q))
    return np.array(out)


def decay_exponent(series: ResidualSeries) -> float:
    """Least-squares slope of log-variance against log-t (>= 4 grid points)."""
    if series.ts.size < 4:
        raise ParameterError("need at least 4 grid points to fit a decay exponent")
    if np.any(series.variances <= 0):
        raise ParameterError("variances must be positive to fit on a log scale")
    slope, _ = np.polyfit(np.log(series.ts), np.log(series.variances), 1)
    return float(slope)
