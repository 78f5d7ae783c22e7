"""Dense linear-algebra kernels used by the LMI/ADMM machinery.

All vectorization in this package is column-major (Fortran order), so the
identity ``vec(A @ B @ C) == kron(C.T, A) @ vec(B)`` holds exactly.  Use
:func:`vec`/:func:`unvec` rather than ``ravel`` to keep that convention in
one place.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg

from .errors import DimensionError, SymmetryError, UnstableError

__all__ = [
    "vec",
    "unvec",
    "kron",
    "commutation_matrix",
    "soft_threshold",
    "psd_project",
    "pinv",
    "lstsq_pinv",
    "ReducedVecMap",
    "sym_eig",
    "lyap_solve",
]

#: Relative singular-value cutoff for every pseudo-inverse in the package.
PINV_RCOND = 1e-10

#: Relative asymmetry tolerated before a matrix is rejected as non-symmetric.
SYM_RTOL = 1e-8


def vec(x: np.ndarray) -> np.ndarray:
    """Column-major vectorization of a 2-D array."""
    return np.asarray(x).ravel(order="F")


def unvec(v: np.ndarray, rows: int, cols: int) -> np.ndarray:
    """Inverse of :func:`vec` for a ``rows x cols`` matrix."""
    return np.asarray(v).reshape((rows, cols), order="F")


def kron(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Kronecker product (thin wrapper, kept for a single point of use)."""
    return np.kron(np.asarray(a, dtype=float), np.asarray(b, dtype=float))


def commutation_matrix(m: int, n: int) -> np.ndarray:
    """Permutation ``T`` of order ``m*n`` with ``T @ vec(Y) == vec(Y.T)``.

    Parameters
    ----------
    m, n : int
        Shape of the matrices ``Y`` the permutation acts on.
    """
    if m < 1 or n < 1:
        raise DimensionError(f"commutation_matrix needs m,n >= 1, got {m},{n}")
    i = np.repeat(np.arange(m), n)
    j = np.tile(np.arange(n), m)
    t = np.zeros((m * n, m * n))
    t[j + i * n, i + j * m] = 1.0
    return t


def soft_threshold(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Elementwise shrinkage of ``a`` toward zero by the margins ``b >= 0``.

    Computes ``max(0, a - b) - max(0, -a - b)``; entries with ``|a| <= b``
    collapse to zero.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if np.any(b < 0):
        raise DimensionError("soft_threshold margins must be nonnegative")
    if b.shape not in ((), a.shape):
        raise DimensionError(f"margin shape {b.shape} does not match {a.shape}")
    return np.maximum(0.0, a - b) - np.maximum(0.0, -a - b)


def _check_symmetric(p: np.ndarray, what: str) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    if p.ndim != 2 or p.shape[0] != p.shape[1]:
        raise DimensionError(f"{what} must be square, got shape {p.shape}")
    scale = max(1.0, float(np.linalg.norm(p)))
    if np.linalg.norm(p - p.T) > SYM_RTOL * scale:
        raise SymmetryError(f"{what} is not symmetric within tolerance")
    return 0.5 * (p + p.T)


def psd_project(p: np.ndarray, eps: float) -> np.ndarray:
    """Project a symmetric matrix onto ``{X = X.T : eig(X) >= eps}``.

    Eigenvalues below ``eps`` are clamped to ``eps``; this is the nearest
    such matrix in Frobenius norm.  Input asymmetry beyond tolerance raises
    :class:`~precis.errors.SymmetryError`.
    """
    p = _check_symmetric(p, "psd_project input")
    w, r = np.linalg.eigh(p)
    if w[0] >= eps:
        return p
    w = np.maximum(w, eps)
    out = (r * w) @ r.T
    return 0.5 * (out + out.T)


def pinv(a: np.ndarray) -> np.ndarray:
    """Moore-Penrose pseudo-inverse with the package-wide rank cutoff."""
    return np.linalg.pinv(np.asarray(a, dtype=float), rcond=PINV_RCOND)


def lstsq_pinv(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Minimum-norm least-squares solution of ``min ||A x - b||_2``."""
    a = np.atleast_2d(np.asarray(a, dtype=float))
    b = np.asarray(b, dtype=float)
    x, *_ = np.linalg.lstsq(a, b, rcond=PINV_RCOND)
    return x


class ReducedVecMap:
    """Index map between symmetric ``n x n`` matrices and their free entries.

    The free entries are the lower triangle packed column-major, so
    ``vec_r`` has length ``n*(n+1)//2``.  ``reduced_columns`` folds an
    operator on ``vec(X)`` into the equivalent operator on ``vec_r(X)`` by
    summing the two columns of each symmetric off-diagonal pair; the folded
    operator satisfies ``A @ vec(X) == reduced_columns(A) @ vec_r(X)`` for
    every symmetric ``X``.
    """

    def __init__(self, n: int):
        if n < 1:
            raise DimensionError(f"ReducedVecMap needs n >= 1, got {n}")
        self.n = n
        rows = []
        cols = []
        for j in range(n):
            for i in range(j, n):
                rows.append(i)
                cols.append(j)
        self.rows = np.array(rows)
        self.cols = np.array(cols)
        self.size = n * (n + 1) // 2
        self._dup = None

    def vec_r(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.n, self.n):
            raise DimensionError(f"expected {self.n}x{self.n}, got {x.shape}")
        return x[self.rows, self.cols]

    def unvec_r(self, v: np.ndarray) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        if v.shape != (self.size,):
            raise DimensionError(f"expected length {self.size}, got {v.shape}")
        x = np.zeros((self.n, self.n))
        x[self.rows, self.cols] = v
        x[self.cols, self.rows] = v
        return x

    def reduced_columns(self, a: np.ndarray) -> np.ndarray:
        a = np.atleast_2d(np.asarray(a, dtype=float))
        if a.shape[1] != self.n * self.n:
            raise DimensionError(
                f"expected {self.n * self.n} columns, got {a.shape[1]}"
            )
        lo = self.rows + self.cols * self.n
        hi = self.cols + self.rows * self.n
        out = a[:, lo].copy()
        off = self.rows != self.cols
        out[:, off] += a[:, hi[off]]
        return out

    def duplication(self) -> np.ndarray:
        """Matrix ``D`` with ``vec(X) == D @ vec_r(X)`` for symmetric X."""
        if self._dup is None:
            self._dup = self.reduced_columns(np.eye(self.n * self.n))
        return self._dup


def reduced_columns(a: np.ndarray, rvmap: ReducedVecMap) -> np.ndarray:
    """Functional alias for :meth:`ReducedVecMap.reduced_columns`."""
    return rvmap.reduced_columns(a)


def sym_eig(p: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Eigendecomposition of a symmetric matrix.

    Returns ascending eigenvalues and orthonormal eigenvectors ``(w, R)``
    with ``P == R @ diag(w) @ R.T`` up to roundoff.
    """
    p = _check_symmetric(p, "sym_eig input")
    return np.linalg.eigh(p)


def lyap_solve(a: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Solve the continuous Lyapunov equation ``A P + P A.T + W = 0``.

    ``A`` must be Hurwitz and ``W`` symmetric; the (unique) solution is
    returned exactly symmetric.
    """
    a = np.asarray(a, dtype=float)
    w = _check_symmetric(w, "lyap_solve right-hand side")
    if a.shape != w.shape:
        raise DimensionError(f"shape mismatch: A {a.shape}, W {w.shape}")
    if np.max(np.linalg.eigvals(a).real) >= 0.0:
        raise UnstableError("lyap_solve requires a Hurwitz matrix")
    p = scipy.linalg.solve_continuous_lyapunov(a, -w)
    return 0.5 * (p + p.T)
