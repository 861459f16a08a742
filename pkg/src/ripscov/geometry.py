"""Poisson sampling on the unit cube and Vietoris-Rips simplex enumeration.

Points live in the axis-aligned unit cube [0,1]^d (volume exactly 1).  The
neighbor graph collects every pair at Euclidean distance <= delta, found with
a uniform grid of cell size delta and a 3^d-cell neighborhood scan; all
distance comparisons are done on squared distances.  k-simplices are the
(k+1)-cliques of that graph.

An optional periodic flag evaluates distances on the unit torus (minimum
image).  It exists to suppress the O(delta) boundary bias in desk-scale
statistical checks and requires delta < 0.25 so that min-image embeddings of
cliques are unambiguous.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .errors import OracleRefusedError, ParameterError, SimplexBudgetError

DEFAULT_SIMPLEX_BUDGET = 20_000_000
_ORACLE_MAX_POINTS = 200
_PERIODIC_MAX_DELTA = 0.25


@dataclass(frozen=True)
class Window:
    """Axis-aligned unit cube [0,1]^d; the only supported observation window."""

    dimension: int

    def __post_init__(self):
        if not isinstance(self.dimension, (int, np.integer)) or self.dimension < 1:
            raise ParameterError(f"window dimension must be a positive integer, got {self.dimension}")


@dataclass(frozen=True)
class PointCloud:
    dimension: int
    points: np.ndarray  # shape (n, d), all coordinates in [0, 1]
    provenance: tuple | None = None  # (seed material...) recorded by the sampler

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != self.dimension:
            raise ParameterError(f"points must have shape (n, {self.dimension})")
        if pts.size and (pts.min() < 0.0 or pts.max() > 1.0):
            raise ParameterError("point coordinates must lie in [0, 1]")
        object.__setattr__(self, "points", pts)

    @property
    def size(self) -> int:
        return self.points.shape[0]


@dataclass(frozen=True)
class NeighborGraph:
    n_points: int
    delta: float
    edges: np.ndarray  # shape (m, 2), rows (i, j) with i < j
    periodic: bool = False
    edge_sq_dists: np.ndarray | None = None  # aligned with edges; cached from the build
    _neighbors: dict = field(default_factory=dict, repr=False, compare=False)

    def neighbors(self, v: int) -> np.ndarray:
        """Sorted array of vertices adjacent to v (cached)."""
        if not self._neighbors:
            nbrs = {i: [] for i in range(self.n_points)}
            for i, j in self.edges:
                nbrs[int(i)].append(int(j))
                nbrs[int(j)].append(int(i))
            for i, lst in nbrs.items():
                self._neighbors[i] = np.array(sorted(lst), dtype=np.int64)
        return self._neighbors[v]


@dataclass(frozen=True)
class RipsComplex:
    delta: float
    cap: int
    simplices: dict  # dimension k -> np.ndarray of shape (count, k+1), rows ascending
    n_points: int
    periodic: bool = False
    edge_sq_dists: np.ndarray | None = None  # aligned with simplices[1] when carried over

    def count(self, k: int) -> int:
        arr = self.simplices.get(k)
        return 0 if arr is None else arr.shape[0]

    @property
    def dimension(self) -> int:
        """Largest k with at least one k-simplex; -1 for the empty complex."""
        dims = [k for k, arr in self.simplices.items() if arr.shape[0] > 0]
        return max(dims) if dims else -1


def sample_poisson(window: Window, intensity: float, rng: np.random.Generator,
                   provenance: tuple | None = None) -> PointCloud:
    """Homogeneous Poisson sample on the unit cube: N ~ Poisson(t), points i.i.d. uniform."""
    if not (isinstance(intensity, (int, float, np.floating)) and math.isfinite(intensity)) or intensity <= 0:
        raise ParameterError(f"intensity must be a positive finite real, got {intensity!r}")
    n = int(rng.poisson(intensity))
    pts = rng.random((n, window.dimension))
    return PointCloud(window.dimension, pts, provenance)


def minimum_image(disp: np.ndarray) -> np.ndarray:
    """Wrap coordinate differences into [-1/2, 1/2] on the unit torus."""
    return disp - np.rint(disp)


def _half_neighborhood_offsets(d: int) -> np.ndarray:
    """Nonzero offsets in {-1,0,1}^d, one per unordered cell pair (lexicographically positive)."""
    offs = np.array(list(itertools.product((-1, 0, 1), repeat=d)), dtype=np.int64)
    keep = []
    for off in offs:
        nz = off[off != 0]
        if len(nz) and nz[0] > 0:
            keep.append(off)
    return np.array(keep, dtype=np.int64)


def _group_cartesian(starts_a, counts_a, starts_b, counts_b):
    """All (i, j) index pairs between matched ragged groups, fully vectorized."""
    sizes = counts_a * counts_b
    total = int(sizes.sum())
    if total == 0:
        return np.empty(0, np.int64), np.empty(0, np.int64)
    grp = np.repeat(np.arange(len(sizes)), sizes)
    offset = np.arange(total) - np.repeat(np.cumsum(sizes) - sizes, sizes)
    cb = counts_b[grp]
    return starts_a[grp] + offset // cb, starts_b[grp] + offset % cb


_BLOCKWISE_OCCUPANCY = 4.0


def _all_pairs_within(pts: np.ndarray, delta: float, periodic: bool):
    n = pts.shape[0]
    i, j = np.triu_indices(n, k=1)
    disp = pts[i] - pts[j]
    if periodic:
        disp -= np.rint(disp)
    d2 = np.einsum("ij,ij->i", disp, disp)
    keep = d2 <= delta * delta
    return i[keep].astype(np.int64), j[keep].astype(np.int64), d2[keep]


def _matched_cell_pairs(uniq, uniq_coords, strides, ncells, d, periodic):
    """Pairs of occupied-cell group indices per half-neighborhood offset."""
    src_parts, dst_parts = [], []
    for off in _half_neighborhood_offsets(d):
        target = uniq_coords + off
        if periodic:
            target = np.mod(target, ncells)
            valid = np.ones(len(uniq), dtype=bool)
        else:
            valid = np.all((target >= 0) & (target < ncells), axis=1)
        if not valid.any():
            continue
        target_ids = target[valid] @ strides
        pos = np.searchsorted(uniq, target_ids)
        pos = np.minimum(pos, len(uniq) - 1)
        hit = uniq[pos] == target_ids
        if not hit.any():
            continue
        src_parts.append(np.flatnonzero(valid)[hit])
        dst_parts.append(pos[hit])
    if not src_parts:
        return np.empty(0, np.int64), np.empty(0, np.int64)
    return np.concatenate(src_parts), np.concatenate(dst_parts)


def _pairs_within(pts: np.ndarray, delta: float, periodic: bool):
    """(i, j, squared distance) for all pairs at distance <= delta (inclusive).

    Points are bucketed on a uniform grid of cell size delta (the 3^d
    neighboring cells then cover every admissible pair) and sorted by cell so
    each occupied cell is a contiguous slice.  Sparse occupancies use one
    vectorized gather over candidate index arrays; dense occupancies instead
    broadcast slice against slice per cell pair, which avoids materializing
    the candidate indices entirely.
    """
    n, d = pts.shape
    delta2 = delta * delta
    if periodic:
        ncells = int(math.floor(1.0 / delta))
        if ncells < 3:
            return _all_pairs_within(pts, delta, periodic)
        cell_size = 1.0 / ncells
    else:
        # cap the resolution so flattened cell ids stay within int64
        max_cells = int(2 ** (60 / d))
        ncells = min(int(math.floor(1.0 / delta)) + 1, max_cells)
        cell_size = max(delta, 1.0 / ncells)
    coords = np.minimum((pts / cell_size).astype(np.int64), ncells - 1)

    strides = ncells ** np.arange(d - 1, -1, -1, dtype=np.int64)
    ids = coords @ strides
    order = np.argsort(ids, kind="stable")
    spts = pts[order]
    uniq, starts, counts = np.unique(ids[order], return_index=True, return_counts=True)
    uniq_coords = np.empty((len(uniq), d), dtype=np.int64)
    rem = uniq
    for axis in range(d - 1):
        uniq_coords[:, axis], rem = np.divmod(rem, strides[axis])
    uniq_coords[:, d - 1] = rem
    src, dst = _matched_cell_pairs(uniq, uniq_coords, strides, ncells, d, periodic)

    if n / len(uniq) >= _BLOCKWISE_OCCUPANCY:
        ii, jj, d2 = _pairs_dense(spts, starts, counts, src, dst, delta2, periodic)
    else:
        ii, jj, d2 = _pairs_sparse(spts, starts, counts, src, dst, delta2, periodic)
    return order[ii], order[jj], d2


def _pairs_sparse(spts, starts, counts, src, dst, delta2, periodic):
    i_parts, j_parts = [], []
    multi = counts >= 2
    if multi.any():
        ii, jj = _group_cartesian(starts[multi], counts[multi], starts[multi], counts[multi])
        keep = ii < jj
        i_parts.append(ii[keep])
        j_parts.append(jj[keep])
    if src.size:
        ii, jj = _group_cartesian(starts[src], counts[src], starts[dst], counts[dst])
        i_parts.append(ii)
        j_parts.append(jj)
    if not i_parts:
        empty = np.empty(0, np.int64)
        return empty, empty, np.empty(0)
    i = np.concatenate(i_parts)
    j = np.concatenate(j_parts)
    disp = spts[i] - spts[j]
    if periodic:
        disp -= np.rint(disp)
    d2 = np.einsum("ij,ij->i", disp, disp)
    keep = d2 <= delta2
    return i[keep], j[keep], d2[keep]


def _pairs_dense(spts, starts, counts, src, dst, delta2, periodic):
    i_parts, j_parts, d2_parts = [], [], []
    for g in np.flatnonzero(counts >= 2):
        s, c = int(starts[g]), int(counts[g])
        block = spts[s : s + c]
        diff = block[:, None, :] - block[None, :, :]
        if periodic:
            diff -= np.rint(diff)
        d2 = np.einsum("ijk,ijk->ij", diff, diff)
        ii, jj = np.nonzero(np.triu(d2 <= delta2, k=1))
        i_parts.append(s + ii)
        j_parts.append(s + jj)
        d2_parts.append(d2[ii, jj])
    for a, b in zip(src, dst):
        sa, ca = int(starts[a]), int(counts[a])
        sb, cb = int(starts[b]), int(counts[b])
        diff = spts[sa : sa + ca, None, :] - spts[None, sb : sb + cb, :]
        if periodic:
            diff -= np.rint(diff)
        d2 = np.einsum("ijk,ijk->ij", diff, diff)
        ii, jj = np.nonzero(d2 <= delta2)
        i_parts.append(sa + ii)
        j_parts.append(sb + jj)
        d2_parts.append(d2[ii, jj])
    if not i_parts:
        empty = np.empty(0, np.int64)
        return empty, empty, np.empty(0)
    return (np.concatenate(i_parts).astype(np.int64),
            np.concatenate(j_parts).astype(np.int64),
            np.concatenate(d2_parts))


def build_neighbor_graph(cloud: PointCloud, delta: float, periodic: bool = False) -> NeighborGraph:
    """Exact distance-threshold graph (inclusive <= delta) over the cloud."""
    if not (delta > 0 and math.isfinite(delta)):
        raise ParameterError(f"delta must be a positive finite real, got {delta!r}")
    if periodic and delta >= _PERIODIC_MAX_DELTA:
        raise ParameterError(f"periodic mode requires delta < {_PERIODIC_MAX_DELTA}")
    pts = cloud.points
    n = pts.shape[0]
    if n < 2:
        edges = np.empty((0, 2), dtype=np.int64)
        return NeighborGraph(n, delta, edges, periodic, np.empty(0))
    i, j, d2 = _pairs_within(pts, delta, periodic)
    edges = np.stack([np.minimum(i, j), np.maximum(i, j)], axis=1)
    return NeighborGraph(n, delta, edges, periodic, d2)


def enumerate_simplices(graph: NeighborGraph, cap: int,
                        budget: int = DEFAULT_SIMPLEX_BUDGET) -> RipsComplex:
    """Cliques of the neighbor graph up to dimension `cap`, by incremental expansion.

    Each k-simplex is extended by the common neighbors of its vertices that
    carry a larger index, so every clique is emitted exactly once with its
    vertices ascending.
    """
    if cap < 0:
        raise ParameterError("dimension cap must be >= 0")
    n = graph.n_points
    simplices = {0: np.arange(n, dtype=np.int64).reshape(n, 1)}
    total = n
    edge_sq = None
    if cap >= 1:
        simplices[1] = graph.edges.copy()
        edge_sq = None if graph.edge_sq_dists is None else graph.edge_sq_dists.copy()
        total += graph.edges.shape[0]
        if total > budget:
            raise SimplexBudgetError(budget, 1, total)

    # candidates[r] = common neighbors of row r's vertices, all > its last vertex
    candidates = None
    for k in range(2, cap + 1):
        prev = simplices[k - 1]
        if prev.shape[0] == 0:
            simplices[k] = np.empty((0, k + 1), dtype=np.int64)
            continue
        if candidates is None:
            candidates = []
            for a, b in prev:
                common = np.intersect1d(graph.neighbors(int(a)), graph.neighbors(int(b)),
                                        assume_unique=True)
                candidates.append(common[common > b])
        rows = []
        next_candidates = []
        for r in range(prev.shape[0]):
            base = prev[r]
            for v in candidates[r]:
                rows.append(np.append(base, v))
                nxt = np.intersect1d(candidates[r], graph.neighbors(int(v)),
                                     assume_unique=True)
                next_candidates.append(nxt[nxt > v])
        if rows:
            simplices[k] = np.array(rows, dtype=np.int64)
        else:
            simplices[k] = np.empty((0, k + 1), dtype=np.int64)
        candidates = next_candidates
        total += simplices[k].shape[0]
        if total > budget:
            raise SimplexBudgetError(budget, k, total)
    return RipsComplex(graph.delta, cap, simplices, n, graph.periodic, edge_sq)


@lru_cache(maxsize=512)
def _combination_rows(n: int, size: int) -> np.ndarray:
    count = math.comb(n, size)
    flat = np.fromiter(itertools.chain.from_iterable(itertools.combinations(range(n), size)),
                       dtype=np.int64, count=count * size)
    return flat.reshape(count, size)


def brute_force_simplices(cloud: PointCloud, delta: float, cap: int,
                          periodic: bool = False) -> RipsComplex:
    """Oracle enumeration: every (k+1)-subset whose pairwise distances are all <= delta."""
    n = cloud.size
    if n > _ORACLE_MAX_POINTS:
        raise OracleRefusedError(f"oracle refuses clouds larger than {_ORACLE_MAX_POINTS} points (got {n})")
    if not (delta > 0 and math.isfinite(delta)):
        raise ParameterError(f"delta must be a positive finite real, got {delta!r}")
    pts = cloud.points
    disp = pts[:, None, :] - pts[None, :, :]
    if periodic:
        disp = minimum_image(disp)
    adj = np.einsum("ijk,ijk->ij", disp, disp) <= delta * delta
    np.fill_diagonal(adj, False)

    simplices = {0: np.arange(n, dtype=np.int64).reshape(n, 1)}
    for k in range(1, cap + 1):
        if n < k + 1:
            simplices[k] = np.empty((0, k + 1), dtype=np.int64)
            continue
        rows = _combination_rows(n, k + 1)
        keep = np.ones(rows.shape[0], dtype=bool)
        for a in range(k + 1):
            for b in range(a + 1, k + 1):
                keep &= adj[rows[:, a], rows[:, b]]
        simplices[k] = rows[keep]
    return RipsComplex(delta, cap, simplices, n, periodic)
