"""Monte Carlo estimation of the moment integrals behind every covariance entry.

A single moment of order (k, alpha) integrates the gated simplex volume
Delta_1[0, x_1..x_k]^alpha over k independent uniform points of the unit ball
B^d; a cross moment of overlap m shares the origin plus m-1 points between
two gated blocks of sizes k1 and k2 and integrates over k1+k2+1-m points.
Estimates carry the kappa_d^(#points) domain factor, a standard error from
the sample variance, and full seed provenance.

Sampling is chunked with counter-based seeding (one child seed per fixed-size
chunk), and chunk statistics are folded in chunk order, so results are
bit-identical for any worker count.

Exact values are substituted where they exist: k = 1 reduces to the radial
integral d*kappa_d/(alpha+d); k = 0 has no integral and is fixed at 1 by
convention (each such lookup is recorded); overlap-1 cross moments factorize
into products of single moments.
"""

from __future__ import annotations

import hashlib
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import MissingMomentError, ParameterError
from .functionals import simplex_volumes_batch

CHUNK_SIZE = 16384
MIN_SAMPLES = 1000


def unit_ball_volume(d: int) -> float:
    """kappa_d = pi^(d/2) / Gamma(d/2 + 1)."""
    if d < 1:
        raise ParameterError("dimension must be >= 1")
    return math.pi ** (d / 2.0) / math.gamma(d / 2.0 + 1.0)


def closed_form_single(d: int, k: int, alpha: float) -> float | None:
    """Exact single-moment value where one is known, else None.

    k = 0: empty integral, 1 by convention.  k = 1: the gate is vacuous and
    polar coordinates give d*kappa_d/(alpha+d).
    """
    if k == 0:
        return 1.0
    if k == 1:
        if alpha <= -d:
            raise ParameterError(f"alpha={alpha} not integrable at k=1, d={d}")
        return d * unit_ball_volume(d) / (alpha + d)
    return None


# ---------------------------------------------------------------------------
# keys and estimates


@dataclass(frozen=True, order=True)
class MomentKey:
    kind: str  # "single" | "cross"
    d: int
    k1: int
    k2: int = 0
    m: int = 0
    alpha1: float = 0.0
    alpha2: float = 0.0

    @staticmethod
    def single(d: int, k: int, alpha: float) -> "MomentKey":
        return MomentKey("single", d, int(k), 0, 0, float(alpha), 0.0)

    @staticmethod
    def cross(d: int, k1: int, k2: int, m: int, alpha1: float, alpha2: float) -> "MomentKey":
        if not (1 <= m <= min(k1, k2) + 1):
            raise ParameterError(f"overlap m={m} outside 1..min(k1,k2)+1 for k=({k1},{k2})")
        key = MomentKey("cross", d, int(k1), int(k2), int(m), float(alpha1), float(alpha2))
        return key.normalize()

    def normalize(self) -> "MomentKey":
        """Canonical form: full overlap reduces to a single moment; blocks sorted."""
        if self.kind != "cross":
            return self
        if self.k1 == self.k2 and self.m == self.k1 + 1:
            return MomentKey.single(self.d, self.k1, self.alpha1 + self.alpha2)
        if (self.k2, self.alpha2) < (self.k1, self.alpha1):
            return MomentKey("cross", self.d, self.k2, self.k1, self.m, self.alpha2, self.alpha1)
        return self


@dataclass(frozen=True)
class MomentEstimate:
    value: float
    stderr: float
    samples: int
    seed: int
    method: str  # mc | closed-form | convention | product

    def __post_init__(self):
        if self.stderr < 0:
            raise ParameterError("standard error must be >= 0")


# ---------------------------------------------------------------------------
# sampling


def _unit_ball_points(rng: np.random.Generator, count: int, d: int) -> np.ndarray:
    """`count` i.i.d. uniform points of B^d: cube rejection below d=4, polar above."""
    if d < 4:
        out = np.empty((count, d))
        have = 0
        while have < count:
            need = count - have
            draw = int(need / (unit_ball_volume(d) / 2.0**d) * 1.2) + 16
            cand = rng.uniform(-1.0, 1.0, size=(draw, d))
            cand = cand[np.einsum("ij,ij->i", cand, cand) <= 1.0]
            take = min(len(cand), need)
            out[have : have + take] = cand[:take]
            have += take
        return out
    g = rng.standard_normal((count, d))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    r = rng.random(count) ** (1.0 / d)
    return g * r[:, None]


def _block_factor(block: np.ndarray, alpha: float, d: int) -> np.ndarray:
    """Gated Delta_1[0, block]^alpha per sample; block shape (c, k, d)."""
    c, k, _ = block.shape
    if k >= 2:
        d2 = block[:, :, None, :] - block[:, None, :, :]
        gate = np.einsum("cijk,cijk->cij", d2, d2).max(axis=(1, 2)) <= 1.0
    else:
        gate = np.ones(c, dtype=bool)
    if alpha == 0 or k > d:
        return gate.astype(float)
    coords = np.concatenate([np.zeros((c, 1, block.shape[2])), block], axis=1)
    vols = simplex_volumes_batch(coords)
    with np.errstate(divide="ignore"):
        powered = np.where(vols > 0.0, vols, 1.0) ** alpha
        powered = np.where(vols > 0.0, powered, 0.0 if alpha > 0 else np.inf)
    return np.where(gate, powered, 0.0)


def _chunk_plan(samples: int) -> list:
    sizes = []
    remaining = samples
    while remaining > 0:
        sizes.append(min(CHUNK_SIZE, remaining))
        remaining -= CHUNK_SIZE
    return sizes


def _single_chunk_stats(args) -> tuple:
    d, k, alpha, seed, chunk_index, size = args
    rng = np.random.default_rng(np.random.SeedSequence([seed, chunk_index]))
    pts = _unit_ball_points(rng, size * k, d).reshape(size, k, d)
    w = _block_factor(pts, alpha, d)
    return chunk_index, float(w.sum()), float((w * w).sum()), size


def _cross_chunk_stats(args) -> tuple:
    d, k1, k2, m, a1, a2, seed, chunk_index, size = args
    npts = k1 + k2 + 1 - m
    rng = np.random.default_rng(np.random.SeedSequence([seed, chunk_index]))
    pts = _unit_ball_points(rng, size * npts, d).reshape(size, npts, d)
    f1 = _block_factor(pts[:, :k1], a1, d)
    f2 = _block_factor(pts[:, k1 - m + 1 : k1 + k2 - m + 1], a2, d)
    w = f1 * f2
    return chunk_index, float(w.sum()), float((w * w).sum()), size


def _fold_chunks(results, samples: int, kappa_power: float, seed: int) -> MomentEstimate:
    total = 0.0
    total_sq = 0.0
    for _, s, s2, _ in sorted(results, key=lambda r: r[0]):
        total += s
        total_sq += s2
    mean = total / samples
    var = max(total_sq / samples - mean * mean, 0.0) * samples / (samples - 1)
    stderr = math.sqrt(var / samples)
    return MomentEstimate(kappa_power * mean, kappa_power * stderr, samples, seed, "mc")


def _run_chunks(fn, tasks, workers: int):
    if workers <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, tasks, chunksize=4))


def estimate_single_moment(d: int, k: int, alpha: float, samples: int, seed: int,
                           workers: int = 1) -> MomentEstimate:
    if k < 1:
        raise ParameterError("single-moment estimation needs k >= 1 (k=0 is fixed by convention)")
    if samples < MIN_SAMPLES:
        raise ParameterError(f"samples must be >= {MIN_SAMPLES}")
    # above the ambient dimension the integrand is an indicator (always integrable)
    if k <= d and not alpha > -d + k - 1:
        raise ParameterError(f"alpha={alpha} violates integrability alpha > {-d + k - 1}")
    sizes = _chunk_plan(samples)
    tasks = [(d, k, float(alpha), int(seed), i, s) for i, s in enumerate(sizes)]
    results = _run_chunks(_single_chunk_stats, tasks, workers)
    return _fold_chunks(results, samples, unit_ball_volume(d) ** k, int(seed))


def estimate_cross_moment(d: int, k1: int, k2: int, m: int, alpha1: float, alpha2: float,
                          samples: int, seed: int, workers: int = 1) -> MomentEstimate:
    if not (1 <= m <= min(k1, k2) + 1):
        raise ParameterError(f"overlap m={m} outside 1..min(k1,k2)+1")
    if min(k1, k2) < 1:
        raise ParameterError("cross-moment estimation needs k1, k2 >= 1")
    if samples < MIN_SAMPLES:
        raise ParameterError(f"samples must be >= {MIN_SAMPLES}")
    for k, a in ((k1, alpha1), (k2, alpha2)):
        if k <= d and not a > -d + k - 1:
            raise ParameterError(f"alpha={a} violates integrability alpha > {-d + k - 1}")
    if m >= 2 and min(k1, k2) <= d and not alpha1 + alpha2 > -d + min(k1, k2) - 1:
        raise ParameterError("alpha1+alpha2 violates the joint integrability condition")
    npts = k1 + k2 + 1 - m
    sizes = _chunk_plan(samples)
    tasks = [(d, k1, k2, m, float(alpha1), float(alpha2), int(seed), i, s)
             for i, s in enumerate(sizes)]
    results = _run_chunks(_cross_chunk_stats, tasks, workers)
    return _fold_chunks(results, samples, unit_ball_volume(d) ** npts, int(seed))


def moment_upper_bound(d: int, m: int, specs) -> float:
    """S_m: max over spec pairs of (d kappa_d/(min(a_i,a_j,a_i+a_j)+d))^(k_i+k_j-m)."""
    specs = list(specs)
    if not specs:
        raise ParameterError("moment_upper_bound needs at least one (k, alpha) spec")
    kd = d * unit_ball_volume(d)
    best = -math.inf
    for ki, ai in specs:
        for kj, aj in specs:
            low = min(ai, aj, ai + aj)
            if low + d <= 0:
                raise ParameterError("bound requires min(alpha_i, alpha_j, alpha_i+alpha_j) > -d")
            best = max(best, (kd / (low + d)) ** (ki + kj - m))
    return best


# ---------------------------------------------------------------------------
# table


def _key_seed(master_seed: int, key: MomentKey) -> int:
    text = f"{master_seed}|{key.kind}|{key.d}|{key.k1}|{key.k2}|{key.m}|{key.alpha1!r}|{key.alpha2!r}"
    return int.from_bytes(hashlib.sha256(text.encode()).digest()[:6], "big")


@dataclass
class MomentTable:
    d: int
    entries: dict = field(default_factory=dict)
    convention_uses: list = field(default_factory=list)

    def put(self, key: MomentKey, estimate: MomentEstimate):
        key = key.normalize()
        if key.d != self.d:
            raise ParameterError(f"key dimension {key.d} does not match table dimension {self.d}")
        self.entries[key] = estimate

    def get(self, key: MomentKey) -> MomentEstimate:
        key = key.normalize()
        if key in self.entries:
            return self.entries[key]
        if key.kind == "single" and key.k1 == 0:
            # no k=0 integral exists; fixed at 1 and every use is recorded
            self.convention_uses.append(key)
            return MomentEstimate(1.0, 0.0, 0, 0, "convention")
        if key.kind == "cross" and key.m == 1:
            left = self.get(MomentKey.single(self.d, key.k1, key.alpha1))
            right = self.get(MomentKey.single(self.d, key.k2, key.alpha2))
            stderr = abs(left.value) * right.stderr + abs(right.value) * left.stderr
            return MomentEstimate(left.value * right.value, stderr,
                                  min(left.samples, right.samples), left.seed, "product")
        raise MissingMomentError(key)

    def value(self, key: MomentKey) -> float:
        return self.get(key).value

    def ensure(self, keys, samples: int, seed: int, workers: int = 1,
               closed_form: bool = True):
        """Estimate (or derive) every key not yet present."""
        for key in sorted(set(k.normalize() for k in keys)):
            key = key.normalize()
            if key.kind == "single" and key.k1 == 0:
                continue
            if key.kind == "cross" and key.m == 1:
                self.ensure([MomentKey.single(self.d, key.k1, key.alpha1),
                             MomentKey.single(self.d, key.k2, key.alpha2)],
                            samples, seed, workers, closed_form)
                continue
            if key in self.entries:
                continue
            if closed_form and key.kind == "single":
                exact = closed_form_single(self.d, key.k1, key.alpha1)
                if exact is not None:
                    self.put(key, MomentEstimate(exact, 0.0, 0, 0, "closed-form"))
                    continue
            key_seed = _key_seed(seed, key)
            if key.kind == "single":
                est = estimate_single_moment(self.d, key.k1, key.alpha1, samples,
                                             key_seed, workers)
            else:
                est = estimate_cross_moment(self.d, key.k1, key.k2, key.m, key.alpha1,
                                            key.alpha2, samples, key_seed, workers)
            self.put(key, est)
        return self

    # -- persistence --------------------------------------------------------

    def _record_lines(self) -> list:
        lines = []
        for key in sorted(self.entries):
            est = self.entries[key]
            if key.kind == "single":
                head = f"single d={key.d} k={key.k1} alpha={key.alpha1!r}"
            else:
                head = (f"cross d={key.d} k1={key.k1} k2={key.k2} m={key.m} "
                        f"alpha1={key.alpha1!r} alpha2={key.alpha2!r}")
            lines.append(f"{head} value={est.value!r} stderr={est.stderr!r} "
                         f"samples={est.samples} seed={est.seed} method={est.method}")
        return lines

    def save(self, path):
        with open(path, "w", encoding="ascii") as fh:
            fh.write(f"# ripscov moment table d={self.d}\n")
            for line in self._record_lines():
                fh.write(line + "\n")

    @classmethod
    def load(cls, path) -> "MomentTable":
        table = None
        with open(path, "r", encoding="ascii") as fh:
            for raw in fh:
                line = raw.strip()
                if not line:
                    continue
                if line.startswith("#"):
                    fields = dict(p.split("=", 1) for p in line.split() if "=" in p)
                    table = cls(int(fields["d"]))
                    continue
                if table is None:
                    raise ParameterError("moment table file is missing its header line")
                kind, rest = line.split(" ", 1)
                fields = dict(p.split("=", 1) for p in rest.split())
                est = MomentEstimate(float(fields["value"]), float(fields["stderr"]),
                                     int(fields["samples"]), int(fields["seed"]),
                                     fields["method"])
                if kind == "single":
                    key = MomentKey.single(int(fields["d"]), int(fields["k"]),
                                           float(fields["alpha"]))
                elif kind == "cross":
                    key = MomentKey("cross", int(fields["d"]), int(fields["k1"]),
                                    int(fields["k2"]), int(fields["m"]),
                                    float(fields["alpha1"]), float(fields["alpha2"]))
                else:
                    raise ParameterError(f"unknown moment record kind {kind!r}")
                table.put(key, est)
        if table is None:
            raise ParameterError("empty moment table file")
        return table

    def content_hash(self) -> str:
        digest = hashlib.sha256("\n".join(self._record_lines()).encode())
        return digest.hexdigest()[:16]

    def with_value(self, key: MomentKey, value: float) -> "MomentTable":
        """Copy with one entry overridden (for perturbation experiments)."""
        clone = MomentTable(self.d, dict(self.entries))
        clone.entries[key.normalize()] = replace(self.get(key), value=value)
        return clone
