"""Admissible sequences and assembly of the asymptotic covariance matrix.

The covariance of the normalized functional vector is assembled per regime
from moment-table lookups:

    sparse limit          Sigma = T^low_0
    low-density  (c <= 1) Sigma = sum_{m=0}^{2 k_n} T^low_m  c^(m/2)
    high-density (c >= 1) Sigma = sum_{m=0}^{k_n}   T^high_m c^(-m)
    dense limit           Sigma = T^high_0

where T^high_m has entries mu_{k_l,k_j:m+1} / ((m+1)! (k_l-m)! (k_j-m)!)
gated by m <= min(k_l, k_j), and T^low_m has entries
mu_{k_l,k_j:(k_l+k_j-m+2)/2} over the analogous factorial denominator, gated
by m - |k_l - k_j| being an even number in 0..2 min(k_l, k_j).  Both critical
branches are computable for any c > 0 (which is what makes the c = 1
cross-branch identity testable); the branch flag only records the canonical
form.  Denominators are exact integer factorials; entry standard errors are
first-order propagations of the moment standard errors.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ParameterError
from .functionals import FunctionalSpec
from .moments import MomentKey, MomentTable

MAX_SEQUENCE_LENGTH = 16


def validate_sequence(pairs, d: int) -> list:
    """Every violated admissibility condition, with offending indices; [] if ok."""
    pairs = [FunctionalSpec(int(k), float(a)) for k, a in pairs]
    problems = []
    if not pairs:
        problems.append("sequence is empty")
        return problems
    if len(pairs) > MAX_SEQUENCE_LENGTH:
        problems.append(f"sequence length {len(pairs)} exceeds cap {MAX_SEQUENCE_LENGTH}")
    ks = [p.k for p in pairs]
    if any(k < 0 for k in ks):
        problems.append("simplex dimensions must be >= 0")
    if any(ks[i] > ks[i + 1] for i in range(len(ks) - 1)):
        problems.append("dimensions must be nondecreasing (k_1 <= ... <= k_n)")
    if len(set(pairs)) != len(pairs):
        dupes = sorted({p for p in pairs if pairs.count(p) > 1})
        problems.append(f"pairs must be distinct, repeated: {dupes}")
    for i, (k, a) in enumerate(pairs):
        # integrability binds only at or below the ambient dimension; above it
        # the power is forced to 0 and the integrand is an indicator
        if k <= d and not a > -d + k - 1:
            problems.append(f"pair {i}: alpha={a} violates alpha > -d+k-1 = {-d + k - 1}")
        if k > d and a != 0.0:
            problems.append(f"pair {i}: alpha must be 0 when k={k} exceeds d={d}")
    for i in range(len(pairs)):
        for j in range(i, len(pairs)):
            ki, ai = pairs[i]
            kj, aj = pairs[j]
            if min(ki, kj) <= d and not ai + aj > -d + min(ki, kj) - 1:
                problems.append(
                    f"pairs {i},{j}: alpha_i+alpha_j={ai + aj} violates the joint bound "
                    f"{-d + min(ki, kj) - 1}"
                )
    return problems


@dataclass(frozen=True)
class AdmissibleSequence:
    pairs: tuple
    d: int

    def __post_init__(self):
        object.__setattr__(self, "pairs",
                           tuple(FunctionalSpec(int(k), float(a)) for k, a in self.pairs))

    @property
    def n(self) -> int:
        return len(self.pairs)

    @property
    def max_k(self) -> int:
        return max(p.k for p in self.pairs)

    def violations(self) -> list:
        return validate_sequence(self.pairs, self.d)

    def require_valid(self):
        problems = self.violations()
        if problems:
            raise ParameterError("inadmissible sequence: " + "; ".join(problems))
        return self


@dataclass(frozen=True)
class Regime:
    tag: str  # "sub" | "critical" | "super"
    c: float | None = None
    branch: str | None = None  # "low" (c <= 1) | "high" (c >= 1)

    def __post_init__(self):
        if self.tag not in ("sub", "critical", "super"):
            raise ParameterError(f"unknown regime tag {self.tag!r}")
        if self.tag == "critical":
            if self.c is None or not self.c > 0:
                raise ParameterError("critical regime needs c > 0")
            branch = self.branch or ("low" if self.c <= 1.0 else "high")
            if branch not in ("low", "high"):
                raise ParameterError(f"unknown critical branch {branch!r}")
            if branch == "low" and self.c > 1.0:
                raise ParameterError("low branch is canonical only for c <= 1")
            if branch == "high" and self.c < 1.0:
                raise ParameterError("high branch is canonical only for c >= 1")
            object.__setattr__(self, "branch", branch)

    @staticmethod
    def subcritical() -> "Regime":
        return Regime("sub")

    @staticmethod
    def critical(c: float, branch: str | None = None) -> "Regime":
        return Regime("critical", float(c), branch)

    @staticmethod
    def supercritical() -> "Regime":
        return Regime("super")

    def describe(self) -> str:
        if self.tag == "critical":
            return f"critical(c={self.c!r}, branch={self.branch})"
        return {"sub": "subcritical", "super": "supercritical"}[self.tag]


def _high_denominator(m: int, kl: int, kj: int) -> int:
    """Exact integer (m+1)!(kl-m)!(kj-m)!, or 0 when the indicator gates the entry."""
    if m > min(kl, kj):
        return 0
    return math.factorial(m + 1) * math.factorial(kl - m) * math.factorial(kj - m)


def _low_denominator(m: int, kl: int, kj: int) -> int:
    diff = m - abs(kl - kj)
    if diff < 0 or diff % 2 or diff > 2 * min(kl, kj):
        return 0
    overlap = (kl + kj - m + 2) // 2
    return (math.factorial(overlap)
            * math.factorial((m - kl + kj) // 2)
            * math.factorial((m + kl - kj) // 2))


def expansion_term_high(m: int, seq: AdmissibleSequence, table: MomentTable,
                        with_stderr: bool = False):
    """Overlap-m expansion term of the high-density branch (m in 0..k_n)."""
    if m < 0:
        raise ParameterError("m must be >= 0")
    n = seq.n
    mat = np.zeros((n, n))
    err = np.zeros((n, n))
    for l in range(n):
        kl, al = seq.pairs[l]
        for j in range(l, n):
            kj, aj = seq.pairs[j]
            den = _high_denominator(m, kl, kj)
            if den == 0:
                continue
            est = table.get(MomentKey.cross(seq.d, kl, kj, m + 1, al, aj))
            mat[l, j] = mat[j, l] = est.value / den
            err[l, j] = err[j, l] = est.stderr / den
    return (mat, err) if with_stderr else mat


def expansion_term_low(m: int, seq: AdmissibleSequence, table: MomentTable,
                       with_stderr: bool = False):
    """Term m of the low-density branch (m in 0..2k_n, parity-gated)."""
    if m < 0:
        raise ParameterError("m must be >= 0")
    n = seq.n
    mat = np.zeros((n, n))
    err = np.zeros((n, n))
    for l in range(n):
        kl, al = seq.pairs[l]
        for j in range(l, n):
            kj, aj = seq.pairs[j]
            den = _low_denominator(m, kl, kj)
            if den == 0:
                continue
            overlap = (kl + kj - m + 2) // 2
            est = table.get(MomentKey.cross(seq.d, kl, kj, overlap, al, aj))
            mat[l, j] = mat[j, l] = est.value / den
            err[l, j] = err[j, l] = est.stderr / den
    return (mat, err) if with_stderr else mat


def required_moment_keys(seq: AdmissibleSequence) -> set:
    """Every moment key any regime assembly of this sequence can touch."""
    keys = set()
    for k, a in seq.pairs:
        keys.add(MomentKey.single(seq.d, k, a))
        keys.add(MomentKey.single(seq.d, k, 2 * a))
    kn = seq.max_k
    for l in range(seq.n):
        kl, al = seq.pairs[l]
        for j in range(l, seq.n):
            kj, aj = seq.pairs[j]
            for m in range(0, kn + 1):
                if _high_denominator(m, kl, kj):
                    keys.add(MomentKey.cross(seq.d, kl, kj, m + 1, al, aj))
            for m in range(0, 2 * kn + 1):
                if _low_denominator(m, kl, kj):
                    overlap = (kl + kj - m + 2) // 2
                    keys.add(MomentKey.cross(seq.d, kl, kj, overlap, al, aj))
    return keys


@dataclass(frozen=True)
class CovarianceModel:
    matrix: np.ndarray
    entry_stderr: np.ndarray
    sequence: AdmissibleSequence
    regime: Regime
    table_hash: str

    @property
    def n(self) -> int:
        return self.sequence.n

    def to_text(self) -> str:
        lines = ["# ripscov covariance model"]
        reg = self.regime
        lines.append(
            f"d={self.sequence.d} n={self.n} regime={reg.tag} "
            f"c={'' if reg.c is None else format(reg.c, '.17g')} "
            f"branch={reg.branch or ''} table={self.table_hash}"
        )
        for k, a in self.sequence.pairs:
            lines.append(f"spec k={k} alpha={format(a, '.17g')}")
        for row in self.matrix:
            lines.append("row " + " ".join(format(x, ".17g") for x in row))
        for row in self.entry_stderr:
            lines.append("se " + " ".join(format(x, ".17g") for x in row))
        return "\n".join(lines) + "\n"

    @staticmethod
    def from_text(text: str) -> "CovarianceModel":
        lines = [ln for ln in text.splitlines() if ln.strip() and not ln.startswith("#")]
        head = dict(p.split("=", 1) for p in lines[0].split())
        d = int(head["d"])
        specs, rows, ses = [], [], []
        for ln in lines[1:]:
            tag, rest = ln.split(" ", 1)
            if tag == "spec":
                fields = dict(p.split("=", 1) for p in rest.split())
                specs.append(FunctionalSpec(int(fields["k"]), float(fields["alpha"])))
            elif tag == "row":
                rows.append([float(x) for x in rest.split()])
            elif tag == "se":
                ses.append([float(x) for x in rest.split()])
        regime = (Regime.critical(float(head["c"]), head["branch"])
                  if head["regime"] == "critical"
                  else Regime(head["regime"]))
        return CovarianceModel(np.array(rows), np.array(ses),
                               AdmissibleSequence(tuple(specs), d), regime, head["table"])


def assemble_covariance(seq: AdmissibleSequence, regime: Regime,
                        table: MomentTable) -> CovarianceModel:
    seq.require_valid()
    if table.d != seq.d:
        raise ParameterError("moment table dimension does not match the sequence")
    kn = seq.max_k
    sigma = np.zeros((seq.n, seq.n))
    stderr = np.zeros((seq.n, seq.n))
    if regime.tag == "sub":
        sigma, stderr = expansion_term_low(0, seq, table, with_stderr=True)
    elif regime.tag == "super":
        sigma, stderr = expansion_term_high(0, seq, table, with_stderr=True)
    elif regime.branch == "low":
        for m in range(0, 2 * kn + 1):
            mat, err = expansion_term_low(m, seq, table, with_stderr=True)
            weight = regime.c ** (m / 2.0)
            sigma += weight * mat
            stderr += weight * err
    else:
        for m in range(0, kn + 1):
            mat, err = expansion_term_high(m, seq, table, with_stderr=True)
            weight = regime.c ** (-m)
            sigma += weight * mat
            stderr += weight * err
    return CovarianceModel(sigma, stderr, seq, regime, table.content_hash())


def branch_sum_gap(seq: AdmissibleSequence, table: MomentTable) -> tuple:
    """(max absolute, max relative) entry gap between the two branch sums at c=1.

    Both sums draw on the same table, so the gap only measures floating-point
    reordering; it must sit at the 1e-12-relative level for any admissible
    sequence.
    """
    seq.require_valid()
    kn = seq.max_k
    low = sum(expansion_term_low(m, seq, table) for m in range(0, 2 * kn + 1))
    high = sum(expansion_term_high(m, seq, table) for m in range(0, kn + 1))
    gap = float(np.max(np.abs(low - high)))
    scale = float(np.max(np.abs(high)))
    return gap, gap / scale if scale > 0 else gap
