"""Simplex volumes, volume power functionals, f/h-vectors, and normalization.

The k-dimensional volume of a simplex is computed from the Cayley-Menger
determinant of its pairwise squared distances,

    vol^2 = (-1)^(k+1) / (2^k (k!)^2) * det(CM),

which is symmetric in the vertices and independent of the ambient embedding.
Tiny negative round-off in vol^2 is clamped to zero; a negative value beyond
tolerance is reported as a numerical error.

The gated volume is zero as soon as any pairwise distance exceeds the gate s.
For k > d the gate result is the presence indicator (1 if all pairwise
distances are within s), so that the power-0 functional always counts
simplices.  Powers use the convention 0^0 = 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .errors import DegenerateSimplexError, NumericalError, ParameterError
from .geometry import PointCloud, RipsComplex, minimum_image

_CM_CLAMP_TOL = 1e-10
_CM_FLAT_TOL = 1e-13


class FunctionalSpec(NamedTuple):
    """One (simplex dimension, volume power) pair."""

    k: int
    alpha: float


@dataclass(frozen=True)
class FunctionalVector:
    specs: tuple
    values: np.ndarray
    normalized: np.ndarray
    intensity: float
    delta: float


def binomial(a: int, b: int) -> int:
    """C(a, b), zero outside 0 <= b <= a (exact integer arithmetic)."""
    if b < 0 or a < 0 or b > a:
        return 0
    return math.comb(a, b)


def _pairwise_sq_dists(coords: np.ndarray) -> np.ndarray:
    # coords: (..., v, d) -> (..., v, v)
    diff = coords[..., :, None, :] - coords[..., None, :, :]
    return np.einsum("...ijk,...ijk->...ij", diff, diff)


def simplex_volumes_batch(coords: np.ndarray) -> np.ndarray:
    """Volumes of a batch of simplices, shape (batch, k+1, d) -> (batch,)."""
    coords = np.asarray(coords, dtype=float)
    batch, nverts, _ = coords.shape
    k = nverts - 1
    if k == 0:
        return np.ones(batch)
    if k == 1:
        return np.sqrt(np.einsum("bj,bj->b", coords[:, 1] - coords[:, 0],
                                 coords[:, 1] - coords[:, 0]))
    d2 = _pairwise_sq_dists(coords)
    cm = np.zeros((batch, k + 2, k + 2))
    cm[:, 0, 1:] = 1.0
    cm[:, 1:, 0] = 1.0
    cm[:, 1:, 1:] = d2
    dets = np.linalg.det(cm)
    factor = ((-1.0) ** (k + 1)) / (2.0**k * math.factorial(k) ** 2)
    vol2 = factor * dets
    scale = np.maximum(d2.max(axis=(1, 2)) ** k, 1.0)
    bad = vol2 < -_CM_CLAMP_TOL * scale
    if bad.any():
        raise NumericalError(
            f"Cayley-Menger produced vol^2 = {vol2[bad].min():.3e} beyond clamp tolerance"
        )
    # the round-off band around zero is collapsed to exactly flat, so that
    # degenerate simplices are detectable downstream
    vol2 = np.where(np.abs(vol2) <= _CM_FLAT_TOL * scale, 0.0, np.maximum(vol2, 0.0))
    return np.sqrt(vol2)


def simplex_volume(vertices: Sequence, ambient_dim: int | None = None) -> float:
    """k-dimensional volume of the convex hull of k+1 points.

    Requires 1 <= k <= d; dimensions above the ambient space must go through
    the gated indicator path instead.
    """
    coords = np.asarray(vertices, dtype=float)
    if coords.ndim != 2:
        raise ParameterError("vertices must be a (k+1, d) array")
    if not np.all(np.isfinite(coords)):
        raise ParameterError("vertices must be finite")
    k = coords.shape[0] - 1
    d = coords.shape[1] if ambient_dim is None else ambient_dim
    if k < 1:
        raise ParameterError("simplex_volume needs at least 2 vertices")
    if k > d:
        raise ParameterError(f"k={k} exceeds ambient dimension d={d}; use the indicator path")
    return float(simplex_volumes_batch(coords[None])[0])


def gated_simplex_volume(vertices: Sequence, gate: float, k: int, d: int) -> float:
    """Volume gated on all pairwise distances <= gate; indicator for k > d."""
    if not (gate > 0):
        raise ParameterError("gate must be positive")
    coords = np.asarray(vertices, dtype=float)
    d2 = _pairwise_sq_dists(coords[None])[0]
    if d2.max(initial=0.0) > gate * gate:
        return 0.0
    if k > d:
        return 1.0
    if k == 0:
        return 1.0
    return float(simplex_volumes_batch(coords[None])[0])


def _simplex_coords(complex_: RipsComplex, cloud: PointCloud, k: int) -> np.ndarray:
    sims = complex_.simplices.get(k)
    if sims is None or sims.shape[0] == 0:
        return np.empty((0, k + 1, cloud.dimension))
    coords = cloud.points[sims]
    if complex_.periodic:
        rel = coords - coords[:, :1, :]
        coords = minimum_image(rel)
    return coords


def volume_power(complex_: RipsComplex, cloud: PointCloud, spec: FunctionalSpec) -> float:
    """V_k^(alpha): sum of alpha-powers of k-simplex volumes of the complex.

    Each unordered simplex is stored once, which absorbs the 1/(k+1)! of the
    ordered-tuple definition.  alpha = 0 returns the simplex count f_k.
    """
    k, alpha = spec
    if k > complex_.cap:
        raise ParameterError(f"spec dimension {k} exceeds complex cap {complex_.cap}")
    count = complex_.count(k)
    if count == 0:
        return 0.0
    if alpha == 0 or k == 0 or k > cloud.dimension:
        # stored simplices already passed the gate; powers of the indicator
        return float(count)
    if k == 1 and complex_.edge_sq_dists is not None:
        vols = np.sqrt(complex_.edge_sq_dists)
    else:
        vols = simplex_volumes_batch(_simplex_coords(complex_, cloud, k))
    if alpha < 0 and np.any(vols == 0.0):
        idx = int(np.flatnonzero(vols == 0.0)[0])
        raise DegenerateSimplexError(complex_.simplices[k][idx], alpha)
    return float(np.sum(vols**alpha))


def f_vector(complex_: RipsComplex, cap: int | None = None) -> list:
    cap = complex_.cap if cap is None else cap
    return [complex_.count(k) for k in range(cap + 1)]


def truncated_dimension(complex_: RipsComplex, d: int, convention: str = "dim-plus-one-capped") -> int:
    """The l used by the h-functional; see `h_functional` for the convention flag."""
    dim = complex_.dimension
    if convention == "dim-plus-one-capped":
        return min(d, dim + 1)
    if convention == "capped-dim-plus-one":
        return min(d, dim) + 1
    raise ParameterError(f"unknown l convention {convention!r}")


def h_functional(complex_: RipsComplex, k: int, d: int,
                 convention: str = "dim-plus-one-capped") -> int:
    """H_k = (-1)^k C(l,k) + sum_{i=1..k} (-1)^(k-i) C(l-i, k-i) f_{i-1}.

    Counts come from the subcomplex truncated at dimension d when the complex
    reaches higher dimensions.  Two conventions for l are supported
    ("dim-plus-one-capped" -> min(d, dim+1), the default, and
    "capped-dim-plus-one" -> min(d, dim)+1); the source formula is ambiguous
    between them.
    """
    l = truncated_dimension(complex_, d, convention)
    if k < 0 or k > l:
        raise ParameterError(f"h index k={k} outside 0..{l}")
    total = (-1) ** k * binomial(l, k)
    for i in range(1, k + 1):
        # f counts at dimension i-1 <= k-1 < d are unchanged by truncation
        total += (-1) ** (k - i) * binomial(l - i, k - i) * complex_.count(i - 1)
    return total


def normalizing_constant(intensity: float, delta: float, d: int, spec: FunctionalSpec) -> float:
    """Q = sqrt(t) * delta^(alpha k) * max_{1<=m<=k+1} (t delta^d)^(k-(m-1)/2)."""
    if not (intensity > 0 and delta > 0):
        raise ParameterError("intensity and delta must be positive")
    k, alpha = spec
    x = intensity * delta**d
    best = max(x ** (k - (m - 1) / 2.0) for m in range(1, k + 2))
    return math.sqrt(intensity) * delta ** (alpha * k) * best


def evaluate_vector(complex_: RipsComplex, cloud: PointCloud, specs: Sequence[FunctionalSpec],
                    intensity: float, delta: float) -> FunctionalVector:
    specs = tuple(FunctionalSpec(*s) for s in specs)
    values = np.array([volume_power(complex_, cloud, s) for s in specs])
    q = np.array([normalizing_constant(intensity, delta, cloud.dimension, s) for s in specs])
    return FunctionalVector(specs, values, values / q, intensity, delta)
