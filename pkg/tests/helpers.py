"""Shared test utilities: sequence generators and independent oracles."""

import itertools
import math
from fractions import Fraction

import numpy as np

from ripscov.covariance import AdmissibleSequence, required_moment_keys, validate_sequence
from ripscov.moments import MomentTable


def random_admissible_sequence(rng, d=3, max_n=5, max_k=4, alphas=(0.0, 1.0, 2.0, 3.0)):
    """A random admissible sequence: sorted k's, distinct pairs, alpha=0 above d."""
    while True:
        n = int(rng.integers(1, max_n + 1))
        ks = sorted(int(rng.integers(0, max_k + 1)) for _ in range(n))
        pairs = []
        for k in ks:
            choices = (0.0,) if k > d else alphas
            pairs.append((k, float(rng.choice(choices))))
        pairs = sorted(set(pairs))
        if pairs and not validate_sequence(pairs, d):
            return AdmissibleSequence(tuple(pairs), d)


def table_for(seqs, d, samples=4096, seed=1234) -> MomentTable:
    table = MomentTable(d)
    for seq in seqs:
        table.ensure(required_moment_keys(seq), samples, seed)
    return table


def brute_force_pairs(points, delta, periodic=False):
    """All-pairs reference for the neighbor graph."""
    n = len(points)
    out = []
    for i in range(n):
        for j in range(i + 1, n):
            diff = points[i] - points[j]
            if periodic:
                diff = diff - np.rint(diff)
            if float(diff @ diff) <= delta * delta:
                out.append((i, j))
    return out


def h_sum_exact(f_counts, k, l) -> Fraction:
    """Rational re-evaluation of the alternating binomial h-sum."""

    def comb(a, b):
        if b < 0 or a < 0 or b > a:
            return 0
        return math.comb(a, b)

    total = Fraction((-1) ** k * comb(l, k))
    for i in range(1, k + 1):
        total += Fraction((-1) ** (k - i) * comb(l - i, k - i) * f_counts[i - 1])
    return total


def triangle_areas(points, delta):
    """Sum of areas over all 3-subsets with pairwise distances <= delta."""
    total = 0.0
    for tri in itertools.combinations(range(len(points)), 3):
        p = points[list(tri)]
        dists = [np.linalg.norm(p[a] - p[b]) for a, b in ((0, 1), (0, 2), (1, 2))]
        if max(dists) <= delta:
            u, v = p[1] - p[0], p[2] - p[0]
            total += 0.5 * abs(u[0] * v[1] - u[1] * v[0])
    return total
