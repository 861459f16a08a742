"""Closed-form structure of the covariance matrix in each regime.

Dense limit: the matrix is the rank-1 outer product of (1/a_1, ..., 1/a_n)
with a_i = k_i!/mu_{k_i}^{(alpha_i)}, and all of its decompositions (eigen,
Schur with an explicit inverse, LU, Cholesky, matrix root) have entrywise
formulas.  Sparse limit: the matrix is block diagonal over runs of equal k,
each block a positive-definite multiple of a moment matrix (Hankel for powers
in arithmetic progression).  Critical regime: each high-branch expansion term
is a lower-right block matrix; when the dominating product of the
scalar-bound diagonal and the rank-1 block majorizes it in the Loewner order,
the term's eigenvalues are bounded by bound * sum(1/a_{i,m}^2) - a theorem,
asserted - and the full-matrix eigenvalue cap is reported as a conjecture,
never asserted.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .covariance import AdmissibleSequence, expansion_term_high
from .errors import (NearSingularError, NumericalError, ParameterError,
                     StructureViolationError)
from .moments import MomentKey, MomentTable, moment_upper_bound, unit_ball_volume

PSD_REL_TOL = 1e-10
RANK_REL_TOL = 1e-10


def scale_coefficients(seq: AdmissibleSequence, table: MomentTable) -> np.ndarray:
    """a_i = k_i! / mu_{k_i}^{(alpha_i)} for each pair of the sequence."""
    return np.array([math.factorial(k) / table.value(MomentKey.single(seq.d, k, a))
                     for k, a in seq.pairs])


def _check_positive(a) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.ndim != 1 or a.size < 2:
        raise ParameterError("need a coefficient vector of length >= 2")
    if not np.all(a > 0):
        raise ParameterError("coefficients must be positive")
    return a


def rank_one_matrix(a) -> np.ndarray:
    """The dense-limit covariance: entries 1/(a_i a_j)."""
    a = _check_positive(a)
    inv = 1.0 / a
    return np.outer(inv, inv)


def cofactor_sum(a) -> float:
    """b = sum_k prod_{l != k} a_l^2, the shared denominator of the inverse forms."""
    a = _check_positive(a)
    prod_all = float(np.prod(a**2))
    return float(np.sum(prod_all / a**2))


def rank_one_eigensystem(a):
    """Eigenvalues {0 (n-1 times), sum 1/a_i^2} and the explicit eigenvectors.

    Kernel vectors: v_j = (a_1/a_{j+1}, 0, ..., -1 in slot j+1, ..., 0);
    top vector: v_n = (a_n/a_1, ..., a_n/a_{n-1}, 1).
    """
    a = _check_positive(a)
    n = a.size
    top = float(np.sum(1.0 / a**2))
    values = np.append(np.zeros(n - 1), top)
    vectors = np.zeros((n, n))
    for j in range(n - 1):
        vectors[0, j] = a[0] / a[j + 1]
        vectors[j + 1, j] = -1.0
    vectors[:, n - 1] = a[n - 1] / a
    return values, vectors


@dataclass(frozen=True)
class SchurForm:
    basis: np.ndarray       # eigenvectors as columns
    diagonal: np.ndarray    # eigenvalues, kernel first
    basis_inv: np.ndarray   # explicit inverse, not numerically inverted
    identity_residual: float
    reconstruction_residual: float


def rank_one_schur(a) -> SchurForm:
    """Similarity transform basis with its closed-form inverse."""
    a = _check_positive(a)
    n = a.size
    values, s = rank_one_eigensystem(a)
    prod_all = float(np.prod(a**2))
    b = cofactor_sum(a)
    s_inv = np.empty((n, n))
    # three-case entry formula; the diagonal-adjacent case excludes index i+1
    # (solving S x = e_j forces that index; excluding i fails S S^-1 = I)
    for i in range(n):
        for j in range(n):
            if i == n - 1:
                s_inv[i, j] = prod_all / (a[j] * a[n - 1] * b)
            elif j == i + 1:
                s_inv[i, j] = -sum(prod_all / a[k] ** 2 for k in range(n) if k != i + 1) / b
            else:
                s_inv[i, j] = prod_all / (a[i + 1] * a[j] * b)
    sigma = rank_one_matrix(a)
    identity_residual = float(np.max(np.abs(s @ s_inv - np.eye(n))))
    recon = s @ np.diag(values) @ s_inv
    reconstruction_residual = float(np.linalg.norm(sigma - recon) / np.linalg.norm(sigma))
    return SchurForm(s, values, s_inv, identity_residual, reconstruction_residual)


@dataclass(frozen=True)
class Factorization:
    kind: str  # "lu" | "cholesky" | "root"
    factors: tuple
    residual: float  # relative Frobenius reconstruction error

    def reconstruction(self) -> np.ndarray:
        if self.kind == "lu":
            l, u = self.factors
            return l @ u
        if self.kind == "cholesky":
            (g,) = self.factors
            return g @ g.T
        (b,) = self.factors
        return b @ b


def _finish(kind: str, factors: tuple, sigma: np.ndarray) -> Factorization:
    fact = Factorization(kind, factors, 0.0)
    resid = float(np.linalg.norm(fact.reconstruction() - sigma) / np.linalg.norm(sigma))
    return Factorization(kind, factors, resid)


def rank_one_lu(a) -> Factorization:
    """L unit lower with first column a_1/a_i; U with first row 1/(a_1 a_j)."""
    a = _check_positive(a)
    n = a.size
    l = np.eye(n)
    l[1:, 0] = a[0] / a[1:]
    u = np.zeros((n, n))
    u[0, :] = 1.0 / (a[0] * a)
    return _finish("lu", (l, u), rank_one_matrix(a))


def rank_one_cholesky(a) -> Factorization:
    """G with first column 1/a_i and zeros elsewhere."""
    a = _check_positive(a)
    g = np.zeros((a.size, a.size))
    g[:, 0] = 1.0 / a
    return _finish("cholesky", (g,), rank_one_matrix(a))


def rank_one_root(a) -> Factorization:
    """Symmetric B with B^2 = Sigma: entries prod(a) / (a_i a_j sqrt(b))."""
    a = _check_positive(a)
    scale = float(np.prod(a)) / math.sqrt(cofactor_sum(a))
    inv = 1.0 / a
    return _finish("root", (scale * np.outer(inv, inv),), rank_one_matrix(a))


def rank_one_invariants(sigma: np.ndarray) -> dict:
    """Numerical rank/determinant/definiteness report for a dense-limit matrix."""
    w, _ = kernels.jacobi_eigen(sigma)
    top = float(np.abs(w).max())
    return {
        "rank": kernels.numeric_rank(sigma, RANK_REL_TOL),
        "det": kernels.det(sigma),
        "det_scale": top ** sigma.shape[0],
        "psd": bool(w.min() >= -PSD_REL_TOL * top),
        "eigenvalues": w,
        "trace": float(np.trace(sigma)),
    }


# ---------------------------------------------------------------------------
# sparse limit: block structure


@dataclass(frozen=True)
class BlockStructure:
    runs: tuple            # (start, length, k) per run of equal k
    blocks: tuple          # the diagonal blocks of Sigma
    moment_blocks: tuple   # blocks rescaled by (k+1)!/kappa_d^k
    hankel: tuple          # exact anti-diagonal constancy per block
    min_eigenvalues: tuple


def _is_hankel(block: np.ndarray) -> bool:
    n = block.shape[0]
    for s in range(2 * n - 1):
        anti = [block[i, s - i] for i in range(max(0, s - n + 1), min(s, n - 1) + 1)]
        if any(x != anti[0] for x in anti[1:]):
            return False
    return True


def block_structure(sigma: np.ndarray, seq: AdmissibleSequence) -> BlockStructure:
    """Runs of equal k and the diagonal blocks they induce on a sparse-limit matrix."""
    ks = [p.k for p in seq.pairs]
    runs = []
    start = 0
    for i in range(1, len(ks) + 1):
        if i == len(ks) or ks[i] != ks[start]:
            runs.append((start, i - start, ks[start]))
            start = i
    mask = np.zeros_like(sigma, dtype=bool)
    for s, ln, _ in runs:
        mask[s : s + ln, s : s + ln] = True
    off = sigma[~mask]
    if off.size and np.any(off != 0.0):
        bad = float(np.max(np.abs(off)))
        raise StructureViolationError(f"off-block entry {bad:.3e} must be exactly zero")
    blocks, moment_blocks, hankel, min_eigs = [], [], [], []
    kappa = unit_ball_volume(seq.d)
    for s, ln, k in runs:
        block = sigma[s : s + ln, s : s + ln].copy()
        blocks.append(block)
        moment_blocks.append(block * (math.factorial(k + 1) / kappa**k))
        hankel.append(_is_hankel(block))
        if ln == 1:
            min_eigs.append(float(block[0, 0]))
        else:
            w, _ = kernels.jacobi_eigen(block)
            min_eigs.append(float(w[0]))
    return BlockStructure(tuple(runs), tuple(blocks), tuple(moment_blocks),
                          tuple(hankel), tuple(min_eigs))


def block_inverse(structure: BlockStructure) -> np.ndarray:
    """Blockwise inverse: reciprocal, 2x2 adjugate, generic LU beyond that."""
    n = sum(ln for _, ln, _ in structure.runs)
    out = np.zeros((n, n))
    for (s, ln, _), block in zip(structure.runs, structure.blocks):
        if ln == 1:
            if block[0, 0] == 0.0:
                raise NearSingularError("zero 1x1 block")
            out[s, s] = 1.0 / block[0, 0]
            continue
        w, _ = kernels.jacobi_eigen(block)
        if np.abs(w).min() <= 1e-12 * np.abs(w).max():
            raise NearSingularError(f"block at {s} has eigenvalue ratio below 1e-12")
        if ln == 2:
            det = block[0, 0] * block[1, 1] - block[0, 1] * block[1, 0]
            inv = np.array([[block[1, 1], -block[0, 1]],
                            [-block[1, 0], block[0, 0]]]) / det
        else:
            inv = kernels.inverse(block)
        out[s : s + ln, s : s + ln] = inv
    return out


def block_eigenvalues(structure: BlockStructure) -> list:
    """Per-block eigenvalues; singleton blocks pass their entry through untouched."""
    out = []
    for block in structure.blocks:
        if block.shape[0] == 1:
            out.append(np.array([block[0, 0]]))
        else:
            w, _ = kernels.jacobi_eigen(block)
            out.append(w)
    return out


def same_k_pair_cholesky(k: int, alpha1: float, alpha2: float, d: int,
                         table: MomentTable) -> tuple:
    """Explicit (G, G^-1) for the 2x2 equal-k sparse block, straight from moments.

    G is lower triangular with G G^T equal to the block
    [[mu^(2a1), mu^(a1+a2)], [mu^(a1+a2), mu^(2a2)]] / (k+1)!.
    """
    fac = math.factorial(k + 1)
    m11 = table.value(MomentKey.single(d, k, 2 * alpha1))
    m22 = table.value(MomentKey.single(d, k, 2 * alpha2))
    m12 = table.value(MomentKey.single(d, k, alpha1 + alpha2))
    disc = m11 * m22 - m12 * m12
    if disc <= 0:
        raise NearSingularError("moment discriminant is not positive")
    g = np.array([
        [math.sqrt(m11 / fac), 0.0],
        [m12 / math.sqrt(fac * m11), math.sqrt(disc / (fac * m11))],
    ])
    g_inv = np.array([
        [math.sqrt(fac / m11), 0.0],
        [-math.sqrt(fac) * m12 / math.sqrt(m11 * disc), math.sqrt(fac * m11 / disc)],
    ])
    return g, g_inv


def block_decompositions(sigma: np.ndarray, seq: AdmissibleSequence,
                         table: MomentTable | None = None) -> dict:
    """Cholesky/LU/root factorizations available in the sparse limit.

    Distinct dimensions make Sigma diagonal: the Cholesky factor and the
    matrix root are both diag(sqrt(sigma_ii)) and I*Sigma is an LU
    decomposition.  A single equal-k pair gets the explicit moment-ratio
    factor; anything else falls back to generic per-block Cholesky (the
    blocks are positive definite) and an eigen square root.
    """
    structure = block_structure(sigma, seq)
    out = {"structure": structure}
    distinct = all(ln == 1 for _, ln, _ in structure.runs)
    if distinct:
        g = np.diag(np.sqrt(np.diag(sigma)))
        out["cholesky"] = _finish("cholesky", (g,), sigma)
        out["lu"] = _finish("lu", (np.eye(seq.n), sigma.copy()), sigma)
        out["root"] = _finish("root", (g,), sigma)
        return out
    if seq.n == 2 and len(structure.runs) == 1 and table is not None:
        (k, a1), (_, a2) = seq.pairs
        g, g_inv = same_k_pair_cholesky(k, a1, a2, seq.d, table)
        out["cholesky"] = _finish("cholesky", (g,), sigma)
        out["cholesky_inverse"] = g_inv
        out["root"] = _finish("root", (_eigen_root(sigma),), sigma)
        return out
    n = seq.n
    g = np.zeros((n, n))
    root = np.zeros((n, n))
    for (s, ln, _), block in zip(structure.runs, structure.blocks):
        g[s : s + ln, s : s + ln] = kernels.cholesky_decompose(block)
        root[s : s + ln, s : s + ln] = _eigen_root(block)
    out["cholesky"] = _finish("cholesky", (g,), sigma)
    out["root"] = _finish("root", (root,), sigma)
    return out


def _eigen_root(sym: np.ndarray) -> np.ndarray:
    w, v = kernels.jacobi_eigen(sym)
    if w.min() < -PSD_REL_TOL * max(abs(w).max(), 1e-300):
        raise NumericalError("matrix root needs a positive semidefinite input")
    return v @ np.diag(np.sqrt(np.maximum(w, 0.0))) @ v.T


# ---------------------------------------------------------------------------
# critical regime


@dataclass(frozen=True)
class CriticalBlocks:
    m: int
    term: np.ndarray        # the overlap-m expansion term (lower-right block form)
    dominating: np.ndarray  # rank-1 block of 1/(a_{i,m} a_{j,m}) on active indices
    bound_diag: np.ndarray  # S_m * I
    coefficients: np.ndarray  # a_{i,m} over active indices
    active: np.ndarray
    bound: float            # S_m


def critical_coefficients(seq: AdmissibleSequence, m: int) -> tuple:
    """Active indices (k_i >= m) and a_{i,m} = sqrt((m+1)!) (k_i - m)!."""
    active = np.array([i for i, (k, _) in enumerate(seq.pairs) if k >= m], dtype=int)
    coeffs = np.array([math.sqrt(math.factorial(m + 1)) * math.factorial(seq.pairs[i].k - m)
                       for i in active])
    return active, coeffs


def critical_m_blocks(m: int, seq: AdmissibleSequence, table: MomentTable) -> CriticalBlocks:
    if m < 0:
        raise ParameterError("m must be >= 0")
    n = seq.n
    active, coeffs = critical_coefficients(seq, m)
    term = expansion_term_high(m, seq, table)
    dom = np.zeros((n, n))
    if active.size:
        inv = 1.0 / coeffs
        dom[np.ix_(active, active)] = np.outer(inv, inv)
        bound = moment_upper_bound(seq.d, m, [seq.pairs[i] for i in active])
    else:
        bound = 0.0
    return CriticalBlocks(m, term, dom, bound * np.eye(n), coeffs, active, bound)


@dataclass(frozen=True)
class DominationReport:
    m: int
    holds: bool
    term_psd: bool
    gap_psd: bool
    min_eig_term: float
    min_eig_gap: float
    witness: np.ndarray | None
    pair_condition: bool | None
    pair_agrees: bool | None


def domination_check(m: int, seq: AdmissibleSequence, table: MomentTable) -> DominationReport:
    """Check the critical-regime constraint: the expansion term is PSD and is
    majorized (Loewner) by bound_diag @ dominating.

    For one or two active rows the equivalent scalar determinant condition is
    evaluated as well and must agree with the eigenvalue check.
    """
    blocks = critical_m_blocks(m, seq, table)
    term = blocks.term
    gap = blocks.bound_diag @ blocks.dominating - term

    w_term, _ = kernels.jacobi_eigen(term)
    w_gap, v_gap = kernels.jacobi_eigen(gap)
    scale_term = max(float(np.abs(w_term).max()), 1e-300)
    scale_gap = max(float(np.abs(w_gap).max()), float(np.abs(term).max(initial=0.0)), 1e-300)
    term_psd = bool(w_term.min() >= -PSD_REL_TOL * scale_term)
    gap_psd = bool(w_gap.min() >= -PSD_REL_TOL * scale_gap)
    witness = None if gap_psd else v_gap[:, 0]

    pair_condition = None
    pair_agrees = None
    act = blocks.active
    if act.size in (1, 2):
        # scalar determinant condition, scaled into the same units as the
        # gap-matrix eigenvalues so the two checks share one tolerance
        mu = [[table.value(MomentKey.cross(seq.d, seq.pairs[i].k, seq.pairs[j].k, m + 1,
                                           seq.pairs[i].alpha, seq.pairs[j].alpha))
               for j in act] for i in act]
        s = blocks.bound
        co = blocks.coefficients
        tol = PSD_REL_TOL * scale_gap
        if act.size == 1:
            pair_condition = bool((s - mu[0][0]) / co[0] ** 2 >= -tol)
        else:
            g00 = (s - mu[0][0]) / co[0] ** 2
            g11 = (s - mu[1][1]) / co[1] ** 2
            g01 = (s - mu[0][1]) / (co[0] * co[1])
            det_ok = g00 * g11 - g01 * g01 >= -tol * scale_gap
            pair_condition = bool(g00 >= -tol and g11 >= -tol and det_ok)
        pair_agrees = pair_condition == gap_psd
        if not pair_agrees:
            raise NumericalError(
                f"scalar condition ({pair_condition}) disagrees with the "
                f"eigenvalue check ({gap_psd}) at m={m}"
            )
    return DominationReport(m, term_psd and gap_psd, term_psd, gap_psd,
                            float(w_term.min()), float(w_gap.min()), witness,
                            pair_condition, pair_agrees)


def term_eigenvalue_cap(m: int, seq: AdmissibleSequence) -> float:
    """S_m * sum over active i of 1/a_{i,m}^2 (holds whenever domination does)."""
    _, coeffs = critical_coefficients(seq, m)
    if coeffs.size == 0:
        return 0.0
    return moment_upper_bound(
        seq.d, m, [p for p in seq.pairs if p.k >= m]
    ) * float(np.sum(1.0 / coeffs**2))


def eigenvalue_cap(seq: AdmissibleSequence) -> float:
    """(k_n + 1) * max_m of the per-term caps; conjectural for the full matrix."""
    kn = seq.max_k
    return (kn + 1) * max(term_eigenvalue_cap(m, seq) for m in range(kn + 1))


def eigenvalue_bound_report(seq: AdmissibleSequence, table: MomentTable,
                            c_values=(0.5, 1.0, 2.0)) -> dict:
    """Report (never assert) the conjectured eigenvalue cap against assembled matrices."""
    from .covariance import Regime, assemble_covariance

    kn = seq.max_k
    checks = {m: domination_check(m, seq, table) for m in range(kn + 1)}
    applicable = all(r.holds for r in checks.values())
    report = {
        "bound": eigenvalue_cap(seq),
        "applicable": applicable,
        "per_m": {m: {"holds": r.holds, "term_cap": term_eigenvalue_cap(m, seq)}
                  for m, r in checks.items()},
        "per_c": {},
    }
    for c in c_values:
        model = assemble_covariance(seq, Regime.critical(c), table)
        w, _ = kernels.jacobi_eigen(model.matrix)
        report["per_c"][c] = {
            "eigenvalues": w,
            "max_eigenvalue": float(w.max()),
            "within_bound": bool(w.max() <= report["bound"]) if applicable else None,
        }
    return report


def loewner_geq(a: np.ndarray, b: np.ndarray, rel_tol: float = PSD_REL_TOL) -> bool:
    """a >= b in the Loewner order, up to a scale-relative eigenvalue slack."""
    gap = np.asarray(a, float) - np.asarray(b, float)
    w, _ = kernels.jacobi_eigen(gap)
    scale = max(float(np.abs(a).max(initial=0.0)), float(np.abs(b).max(initial=0.0)), 1e-300)
    return bool(w.min() >= -rel_tol * scale)
