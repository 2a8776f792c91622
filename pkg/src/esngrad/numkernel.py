"""Dense and sparse numeric primitives shared by the rest of the package.

Everything here works in float64. Sparse matrices keep a fixed coordinate
pattern so that learned recurrent weights can be updated in place without
ever creating new nonzeros.
"""

from dataclasses import dataclass

import numpy as np
from scipy.linalg import lapack
from scipy.special import expit

__all__ = [
    "NumericError",
    "SparsePattern",
    "SparseMatrix",
    "sigmoid_map",
    "spectral_radius",
    "solve_spd",
]


class NumericError(ArithmeticError):
    """Raised when a factorization or eigen-computation cannot proceed."""


@dataclass(frozen=True)
class SparsePattern:
    """Sorted, duplicate-free coordinate list of a sparse matrix."""

    rows: int
    cols: int
    row_idx: np.ndarray
    col_idx: np.ndarray

    def __post_init__(self):
        r = np.asarray(self.row_idx, dtype=np.int64)
        c = np.asarray(self.col_idx, dtype=np.int64)
        if r.shape != c.shape or r.ndim != 1:
            raise ValueError("row_idx and col_idx must be 1-d arrays of equal length")
        if r.size:
            if r.min() < 0 or r.max() >= self.rows or c.min() < 0 or c.max() >= self.cols:
                raise ValueError("sparse index out of range")
            key = r * self.cols + c
            if np.any(np.diff(key) <= 0):
                raise ValueError("pattern must be strictly sorted (row-major) and duplicate-free")
        r.setflags(write=False)
        c.setflags(write=False)
        object.__setattr__(self, "row_idx", r)
        object.__setattr__(self, "col_idx", c)

    @classmethod
    def from_mask(cls, mask):
        mask = np.asarray(mask, dtype=bool)
        r, c = np.nonzero(mask)  # row-major order already
        return cls(mask.shape[0], mask.shape[1], r, c)

    @property
    def nnz(self):
        return int(self.row_idx.size)

    @property
    def shape(self):
        return (self.rows, self.cols)

    def mask(self):
        m = np.zeros(self.shape, dtype=bool)
        m[self.row_idx, self.col_idx] = True
        return m

    def gather(self, dense):
        """Pick the pattern entries out of a dense matrix."""
        return np.asarray(dense)[self.row_idx, self.col_idx].copy()

    def __eq__(self, other):
        if not isinstance(other, SparsePattern):
            return NotImplemented
        return (
            self.shape == other.shape
            and np.array_equal(self.row_idx, other.row_idx)
            and np.array_equal(self.col_idx, other.col_idx)
        )

    def __hash__(self):
        return hash((self.shape, self.row_idx.tobytes(), self.col_idx.tobytes()))


@dataclass(frozen=True, eq=False)
class SparseMatrix:
    """Values aligned with a :class:`SparsePattern`."""

    pattern: SparsePattern
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=np.float64)
        if v.shape != (self.pattern.nnz,):
            raise ValueError(f"expected {self.pattern.nnz} values, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("sparse values must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def from_dense(cls, dense, pattern=None):
        dense = np.asarray(dense, dtype=np.float64)
        if pattern is None:
            pattern = SparsePattern.from_mask(dense != 0)
        return cls(pattern, pattern.gather(dense))

    @property
    def shape(self):
        return self.pattern.shape

    def to_dense(self):
        out = np.zeros(self.shape)
        out[self.pattern.row_idx, self.pattern.col_idx] = self.values
        return out

    def with_values(self, values):
        return SparseMatrix(self.pattern, values)

    def scaled(self, factor):
        return SparseMatrix(self.pattern, self.values * factor)


def sigmoid_map(m):
    """Elementwise logistic function ``1 / (1 + exp(-x))``.

    Backed by :func:`scipy.special.expit`, which never overflows. Large
    negative inputs give tiny positive values (``sigmoid(-40)`` is about
    4.2e-18); the result is exactly 0.0 only once ``exp(x)`` underflows,
    below roughly -745.
    """
    return expit(np.asarray(m, dtype=np.float64))


def _as_dense_square(m):
    dense = m.to_dense() if isinstance(m, SparseMatrix) else np.asarray(m, dtype=np.float64)
    if dense.ndim != 2 or dense.shape[0] != dense.shape[1]:
        raise ValueError(f"spectral radius needs a square matrix, got shape {dense.shape}")
    return dense


def spectral_radius(m, tol=1e-10, max_iter=1000, seed=0):
    """Largest eigenvalue modulus of ``m``.

    Power iteration from a seeded start vector is tried first. It is only
    trusted if the estimate settles and the eigen-residual ``|A v -/+ r v|``
    is within ``tol``; a complex or near-degenerate dominant pair makes it
    stall, in which case the dense eigenvalues are computed instead.
    """
    a = _as_dense_square(m)
    n = a.shape[0]
    if n == 0 or not np.any(a):
        return 0.0

    v = np.random.default_rng(seed).standard_normal(n)
    v /= np.linalg.norm(v)
    est = 0.0
    for _ in range(max_iter):
        w = a @ v
        norm = np.linalg.norm(w)
        if norm == 0.0:
            # v landed in the null space of a nilpotent part
            return 0.0
        w /= norm
        if abs(norm - est) <= tol * norm:
            aw = a @ w
            for sign in (1.0, -1.0):
                if np.linalg.norm(aw - sign * norm * w) <= tol * norm:
                    return float(norm)
        est = norm
        v = w

    return float(np.max(np.abs(np.linalg.eigvals(a))))


def solve_spd(a, b):
    """Solve ``a @ x = b`` for symmetric positive definite ``a`` by Cholesky.

    Raises :class:`NumericError` naming the first non-positive pivot (0-based)
    when ``a`` is not numerically positive definite; callers typically react
    by increasing the ridge term.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"solve_spd needs a square matrix, got {a.shape}")
    if b.shape[0] != a.shape[0]:
        raise ValueError(f"right-hand side has {b.shape[0]} rows, expected {a.shape[0]}")
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise ValueError("solve_spd inputs must be finite")
    scale = max(np.abs(a).max(), np.finfo(float).tiny)
    if np.abs(a - a.T).max() > 1e-12 * scale:
        raise ValueError("solve_spd needs a symmetric matrix")

    diag = np.diag(a)
    if np.count_nonzero(a) == np.count_nonzero(diag):
        # diagonal system: plain division is exact where Cholesky rounds twice
        bad = np.flatnonzero(diag <= 0)
        if bad.size:
            raise NumericError(
                f"Cholesky factorization failed at pivot {bad[0]}: matrix is not "
                "positive definite (increase the ridge parameter mu)"
            )
        return b / (diag[:, None] if b.ndim == 2 else diag)

    c, info = lapack.dpotrf(a, lower=1, clean=1)
    if info > 0:
        raise NumericError(
            f"Cholesky factorization failed at pivot {info - 1}: matrix is not "
            "positive definite (increase the ridge parameter mu)"
        )
    if info < 0:
        raise ValueError(f"invalid argument {-info} passed to dpotrf")
    x, info = lapack.dpotrs(c, b, lower=1)
    if info != 0:
        raise NumericError(f"Cholesky back-substitution failed (info={info})")
    return x
