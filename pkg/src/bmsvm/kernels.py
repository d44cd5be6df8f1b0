"""Gaussian kernel construction and dense symmetric linear algebra.

Everything downstream (priors, conditionals, prediction) goes through the
objects here: an eigendecomposed kernel matrix with a numerical-rank
threshold, its Moore-Penrose pseudo-inverse and log-pseudo-determinant,
the ``[1, K]`` augmented matrix, and a Cholesky solver with lazy jitter.

Eigendecompositions and Cholesky factorizations are delegated to
LAPACK via numpy/scipy; matrices are dense and at most a few hundred
rows in the intended regime.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import LinAlgError, cho_solve, cholesky, solve_triangular
from scipy.spatial.distance import cdist

from .errors import (
    ConditioningError,
    DegenerateMatrixError,
    ParameterError,
    ShapeError,
)

DEFAULT_JITTER_SCALE = 1e-10


def gaussian_kernel(x: np.ndarray, x2: np.ndarray, theta: float) -> float:
    """Gaussian kernel exp(-||x - x2||^2 / theta^2).

    ``theta`` has the units of a distance; the value is 1 exactly when
    the arguments coincide and decays to 0 with separation.
    """
    if theta <= 0:
        raise ParameterError(f"kernel width must be positive, got {theta}")
    x = np.asarray(x, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    if x.shape != x2.shape:
        raise ShapeError(f"input dimensions differ: {x.shape} vs {x2.shape}")
    d2 = float(np.sum((x - x2) ** 2))
    return float(np.exp(-d2 / theta**2))


@dataclass(frozen=True)
class KernelMatrix:
    """Symmetric PSD kernel matrix with its eigendecomposition.

    Attributes
    ----------
    entries : (n, n) array, symmetric.
    theta : kernel width used to build it (1.0 for synthetic matrices).
    eigvals : eigenvalues in descending order.
    eigvecs : orthogonal matrix, columns matching ``eigvals``.
    rank_tol : eigenvalues at or below this threshold count as zero;
        fixed at n * machine-epsilon * max(eigvals).
    """

    entries: np.ndarray
    theta: float
    eigvals: np.ndarray
    eigvecs: np.ndarray
    rank_tol: float

    @classmethod
    def from_entries(cls, entries: np.ndarray, theta: float = 1.0) -> "KernelMatrix":
        """Wrap an existing symmetric PSD matrix (also used for non-Gaussian kernels)."""
        entries = np.asarray(entries, dtype=float)
        if entries.ndim != 2 or entries.shape[0] != entries.shape[1]:
            raise ShapeError(f"kernel matrix must be square, got {entries.shape}")
        scale = max(np.max(np.abs(entries)), 1.0)
        if np.max(np.abs(entries - entries.T)) > 1e-12 * scale:
            raise ShapeError("kernel matrix is not symmetric within 1e-12 relative tolerance")
        vals, vecs = np.linalg.eigh(entries)
        order = np.argsort(vals)[::-1]
        vals = vals[order]
        vecs = vecs[:, order]
        n = entries.shape[0]
        rank_tol = n * np.finfo(float).eps * max(vals[0], 0.0)
        return cls(entries=entries, theta=float(theta), eigvals=vals,
                   eigvecs=vecs, rank_tol=rank_tol)

    @property
    def n(self) -> int:
        return self.entries.shape[0]

    @property
    def rank(self) -> int:
        """Numerical rank: eigenvalues strictly above rank_tol."""
        return int(np.sum(self.eigvals > self.rank_tol))


def build_kernel_matrix(inputs: np.ndarray, theta: float) -> KernelMatrix:
    """Gaussian kernel matrix over a set of input vectors.

    ``inputs`` is (n, p) (or a sequence of equal-length vectors). The
    result has unit diagonal exactly and is symmetric exactly because
    squared distances are computed pairwise from differences.
    """
    if theta <= 0:
        raise ParameterError(f"kernel width must be positive, got {theta}")
    inputs = _as_input_matrix(inputs)
    d2 = cdist(inputs, inputs, "sqeuclidean")
    entries = np.exp(-d2 / theta**2)
    return KernelMatrix.from_entries(entries, theta=theta)


def kernel_cross(x_star: np.ndarray, inputs: np.ndarray, theta: float) -> np.ndarray:
    """Kernel values between query rows and training rows, (m, n)."""
    if theta <= 0:
        raise ParameterError(f"kernel width must be positive, got {theta}")
    inputs = _as_input_matrix(inputs)
    x_star = np.asarray(x_star, dtype=float)
    single = x_star.ndim == 1
    if single:
        x_star = x_star[None, :]
    if x_star.shape[1] != inputs.shape[1]:
        raise ShapeError(
            f"query dimension {x_star.shape[1]} != training dimension {inputs.shape[1]}"
        )
    out = np.exp(-cdist(x_star, inputs, "sqeuclidean") / theta**2)
    return out[0] if single else out


def _as_input_matrix(inputs) -> np.ndarray:
    rows = [np.asarray(r, dtype=float) for r in inputs]
    if len(rows) == 0:
        raise ShapeError("need at least one input vector")
    p = rows[0].shape
    for i, r in enumerate(rows):
        if r.shape != p:
            raise ShapeError(f"input {i} has dimension {r.shape}, expected {p}")
    return np.asarray(rows, dtype=float)


def pseudo_inverse(k: KernelMatrix) -> np.ndarray:
    """Moore-Penrose inverse from the eigendecomposition.

    Eigenvalues at or below ``rank_tol`` are treated as exact zeros, so a
    singular kernel matrix is handled without error.
    """
    keep = k.eigvals > k.rank_tol
    inv_vals = np.where(keep, 1.0 / np.where(keep, k.eigvals, 1.0), 0.0)
    v = k.eigvecs
    out = (v * inv_vals) @ v.T
    return (out + out.T) / 2.0


def log_pseudo_det(k: KernelMatrix) -> float:
    """Sum of log eigenvalues above the rank tolerance."""
    keep = k.eigvals > k.rank_tol
    if not np.any(keep):
        raise DegenerateMatrixError(
            f"all {k.n} eigenvalues are at or below the rank tolerance {k.rank_tol:g}"
        )
    return float(np.sum(np.log(k.eigvals[keep])))


def chol_factor_spd(
    m: np.ndarray, jitter_scale: float = DEFAULT_JITTER_SCALE
) -> tuple[np.ndarray, float]:
    """Lower Cholesky factor of a symmetric PSD matrix with lazy jitter.

    Tries the plain factorization first; only on failure adds
    ``jitter_scale * tr(m)/dim`` to the diagonal and retries. Returns
    the factor and the jitter actually used (0.0 on the clean path).
    """
    m = np.asarray(m, dtype=float)
    try:
        return cholesky(m, lower=True), 0.0
    except LinAlgError:
        pass
    if jitter_scale > 0:
        jitter = jitter_scale * float(np.trace(m)) / m.shape[0]
        try:
            return cholesky(m + jitter * np.eye(m.shape[0]), lower=True), jitter
        except LinAlgError:
            pass
    smallest = float(np.linalg.eigvalsh(m)[0])
    raise ConditioningError(
        f"Cholesky failed for {m.shape[0]}x{m.shape[0]} matrix "
        f"(smallest eigenvalue {smallest:.3e}, jitter_scale {jitter_scale:g})",
        smallest_eigenvalue=smallest,
    )


def chol_solve_spd(
    m: np.ndarray,
    rhs: np.ndarray,
    jitter_scale: float = DEFAULT_JITTER_SCALE,
) -> tuple[np.ndarray, float]:
    """Solve (m + jitter I) x = rhs, jitter added only if needed.

    ``rhs`` may be a vector or a matrix of stacked right-hand sides.
    Returns the solution and the jitter actually used.
    """
    lower, jitter = chol_factor_spd(m, jitter_scale)
    return cho_solve((lower, True), np.asarray(rhs, dtype=float)), jitter


def solve_lower(lower: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Forward substitution with a lower-triangular factor."""
    return solve_triangular(lower, rhs, lower=True)


def solve_upper_from_lower(lower: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Back substitution with the transpose of a lower-triangular factor."""
    return solve_triangular(lower, rhs, lower=True, trans="T")


@dataclass(frozen=True)
class AugmentedKernel:
    """The n x (n+1) matrix [1, K]: an all-ones column prepended to K."""

    rows: np.ndarray

    @classmethod
    def from_kernel(cls, k: KernelMatrix) -> "AugmentedKernel":
        n = k.n
        return cls(rows=np.hstack([np.ones((n, 1)), k.entries]))

    def row_view(self, i: int) -> np.ndarray:
        return self.rows[i]


@dataclass(frozen=True)
class CenteringMatrix:
    """I_c - (1/c) 11': projects out the all-ones direction over classes.

    Idempotent with rank c-1; multiplying a coefficient block by it
    enforces the sum-to-zero constraints.
    """

    c: int

    def __post_init__(self):
        if self.c < 2:
            raise ParameterError(f"class count must be >= 2, got {self.c}")

    @property
    def entries(self) -> np.ndarray:
        return np.eye(self.c) - np.full((self.c, self.c), 1.0 / self.c)
