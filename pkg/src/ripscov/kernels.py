"""Generic dense-matrix kernels for small symmetric problems (n <= 16).

These are the in-package fallbacks and oracles used by the structured
decompositions; numpy.linalg only appears in the test suite, as an
independent cross-check.
"""

from __future__ import annotations

import numpy as np

from .errors import NearSingularError, NotPositiveDefiniteError, ParameterError

MAX_DENSE_N = 16


def _as_square(a) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ParameterError(f"expected a square matrix, got shape {a.shape}")
    return a


def offdiagonal_norm(a: np.ndarray) -> float:
    a = _as_square(a)
    off = a[~np.eye(a.shape[0], dtype=bool)]
    return float(np.linalg.norm(off))


def jacobi_eigen(a, tol: float = 1e-14, max_sweeps: int = 100):
    """Cyclic Jacobi rotations for a symmetric matrix.

    Returns (w, v): eigenvalues ascending, eigenvectors as columns of v.
    Iterates until the off-diagonal Frobenius norm is <= tol * ||a||_F.
    """
    a = _as_square(a).copy()
    n = a.shape[0]
    if not np.allclose(a, a.T, atol=1e-12 * max(1.0, np.abs(a).max(initial=0.0))):
        raise ParameterError("jacobi_eigen requires a symmetric matrix")
    a = 0.5 * (a + a.T)
    v = np.eye(n)
    frob = float(np.linalg.norm(a))
    if frob == 0.0 or n == 1:
        return np.sort(np.diag(a)), v

    for _ in range(max_sweeps):
        if offdiagonal_norm(a) <= tol * frob:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if abs(apq) <= 1e-300:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                t = np.sign(theta) / (abs(theta) + np.hypot(theta, 1.0))
                if theta == 0.0:
                    t = 1.0
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                rot_p = c * a[:, p] - s * a[:, q]
                rot_q = s * a[:, p] + c * a[:, q]
                a[:, p], a[:, q] = rot_p, rot_q
                rot_p = c * a[p, :] - s * a[q, :]
                rot_q = s * a[p, :] + c * a[q, :]
                a[p, :], a[q, :] = rot_p, rot_q
                a[p, q] = a[q, p] = 0.0
                rot_p = c * v[:, p] - s * v[:, q]
                rot_q = s * v[:, p] + c * v[:, q]
                v[:, p], v[:, q] = rot_p, rot_q

    w = np.diag(a).copy()
    order = np.argsort(w, kind="stable")
    return w[order], v[:, order]


def lu_decompose(a):
    """LU factorization with partial pivoting: a[perm] = L @ U."""
    a = _as_square(a)
    n = a.shape[0]
    u = a.copy()
    l = np.eye(n)
    perm = np.arange(n)
    for j in range(n - 1):
        piv = j + int(np.argmax(np.abs(u[j:, j])))
        if piv != j:
            u[[j, piv], :] = u[[piv, j], :]
            l[[j, piv], :j] = l[[piv, j], :j]
            perm[[j, piv]] = perm[[piv, j]]
        if u[j, j] == 0.0:
            continue
        mult = u[j + 1 :, j] / u[j, j]
        l[j + 1 :, j] = mult
        u[j + 1 :, j:] -= np.outer(mult, u[j, j:])
        u[j + 1 :, j] = 0.0
    return perm, l, u


def det(a) -> float:
    perm, _, u = lu_decompose(a)
    # permutation parity by cycle counting
    n = len(perm)
    seen = np.zeros(n, dtype=bool)
    sign = 1.0
    for i in range(n):
        if seen[i]:
            continue
        j, length = i, 0
        while not seen[j]:
            seen[j] = True
            j = perm[j]
            length += 1
        if length % 2 == 0:
            sign = -sign
    return float(sign * np.prod(np.diag(u)))


def solve_lower(l, b):
    l = _as_square(l)
    b = np.asarray(b, dtype=float)
    n = l.shape[0]
    x = np.zeros_like(b)
    for i in range(n):
        x[i] = (b[i] - l[i, :i] @ x[:i]) / l[i, i]
    return x


def solve_upper(u, b):
    u = _as_square(u)
    b = np.asarray(b, dtype=float)
    n = u.shape[0]
    x = np.zeros_like(b)
    for i in range(n - 1, -1, -1):
        x[i] = (b[i] - u[i, i + 1 :] @ x[i + 1 :]) / u[i, i]
    return x


def inverse(a):
    a = _as_square(a)
    n = a.shape[0]
    perm, l, u = lu_decompose(a)
    piv = np.abs(np.diag(u))
    scale = max(np.abs(a).max(initial=0.0), 1e-300)
    if piv.min(initial=np.inf) <= 1e-14 * scale:
        raise NearSingularError(
            f"pivot {piv.min():.3e} below tolerance for scale {scale:.3e}"
        )
    inv = np.empty((n, n))
    eye = np.eye(n)
    for j in range(n):
        y = solve_lower(l, eye[perm, j])
        inv[:, j] = solve_upper(u, y)
    return inv


def cholesky_decompose(a):
    """Lower-triangular G with a = G G^T; raises with a witness if not SPD."""
    a = _as_square(a)
    n = a.shape[0]
    g = np.zeros((n, n))
    for j in range(n):
        pivot = a[j, j] - g[j, :j] @ g[j, :j]
        if pivot <= 0.0:
            witness = np.zeros(n)
            witness[j] = 1.0
            if j > 0:
                # x = (-G[:j,:j]^{-T} g_j, 1, 0...) gives x^T a x = pivot
                y = solve_upper(g[:j, :j].T, g[j, :j])
                witness[:j] = -y
            raise NotPositiveDefiniteError(float(pivot), witness)
        g[j, j] = np.sqrt(pivot)
        for i in range(j + 1, n):
            g[i, j] = (a[i, j] - g[i, :j] @ g[j, :j]) / g[j, j]
    return g


def spectral_norm(a) -> float:
    w, _ = jacobi_eigen(a)
    return float(np.max(np.abs(w), initial=0.0))


def numeric_rank(a, rel_tol: float = 1e-10) -> int:
    """Rank of a symmetric matrix by |eigenvalue| ratio thresholding."""
    w, _ = jacobi_eigen(a)
    mags = np.abs(w)
    top = mags.max(initial=0.0)
    if top == 0.0:
        return 0
    return int(np.sum(mags > rel_tol * top))


def is_psd(a, rel_tol: float = 1e-10) -> bool:
    w, _ = jacobi_eigen(a)
    top = np.abs(w).max(initial=0.0)
    return bool(w.min(initial=0.0) >= -rel_tol * max(top, 1e-300))
