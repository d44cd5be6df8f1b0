"""Core probability model: hinge likelihood, priors, and latent encoding.

The classifier keeps c decision functions that sum to zero. Coefficients
are stored unconstrained as (b0, B) and mapped onto the constraint set by
the centering projection, giving (w0, W). The likelihood penalizes, for
every point, the hinge of each wrong-class decision value shifted by
1/(c-1). Latent responses z tie the hinge likelihood to a per-class
kernel regression; only the entries for wrong classes are free, the own-
class entry being fixed by the row-sum-zero constraint.

All likelihood bookkeeping stays in log space, and hinge sums are
accumulated with ``math.fsum`` so that regrouping terms (per point vs per
class) cannot change the result.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConstraintError, ParameterError, ShapeError
from .kernels import KernelMatrix, log_pseudo_det


def hinge(u):
    """Positive part max(u, 0), elementwise on arrays."""
    return np.maximum(u, 0.0)


def to_zero_based(labels: np.ndarray, n_classes: int) -> np.ndarray:
    """Convert user-facing 1..c labels to the internal 0-based form.

    This is the single conversion point between the two label
    conventions.
    """
    labels = np.asarray(labels, dtype=int)
    if labels.size and (labels.min() < 1 or labels.max() > n_classes):
        raise ParameterError(
            f"labels must lie in 1..{n_classes}, found range "
            f"[{labels.min()}, {labels.max()}]"
        )
    return labels - 1


@dataclass(frozen=True)
class TrainingSet:
    """Standardized inputs with integer class labels and index bookkeeping.

    ``labels`` are stored 0-based internally. ``class_indices[j]`` holds
    the rows of class j, ``complements[j]`` the rest; the complement
    sizes sum to (c-1) * n.
    """

    inputs: np.ndarray
    labels: np.ndarray
    n_classes: int
    class_indices: tuple = field(init=False)
    complements: tuple = field(init=False)
    counts: tuple = field(init=False)

    def __post_init__(self):
        inputs = np.asarray(self.inputs, dtype=float)
        labels = np.asarray(self.labels, dtype=int)
        if inputs.ndim != 2:
            raise ShapeError(f"inputs must be 2-d, got shape {inputs.shape}")
        if labels.shape != (inputs.shape[0],):
            raise ShapeError(
                f"labels shape {labels.shape} does not match {inputs.shape[0]} inputs"
            )
        if self.n_classes < 2:
            raise ParameterError(f"need at least 2 classes, got {self.n_classes}")
        object.__setattr__(self, "inputs", inputs)
        object.__setattr__(self, "labels", labels)
        all_idx = np.arange(inputs.shape[0])
        class_indices = []
        complements = []
        for j in range(self.n_classes):
            # empty classes are tolerated here; the evaluation protocols
            # raise FoldDegeneracyError before fitting on such a set
            class_indices.append(all_idx[labels == j])
            complements.append(all_idx[labels != j])
        object.__setattr__(self, "class_indices", tuple(class_indices))
        object.__setattr__(self, "complements", tuple(complements))
        object.__setattr__(self, "counts", tuple(int(c.size) for c in complements))

    @classmethod
    def from_labels(cls, inputs, labels_one_based, n_classes: int | None = None) -> "TrainingSet":
        labels_one_based = np.asarray(labels_one_based, dtype=int)
        if n_classes is None:
            n_classes = int(labels_one_based.max())
        return cls(inputs=np.asarray(inputs, dtype=float),
                   labels=to_zero_based(labels_one_based, n_classes),
                   n_classes=n_classes)

    @property
    def n(self) -> int:
        return self.inputs.shape[0]

    @property
    def margin_offset(self) -> float:
        """The shift 1/(c-1) applied inside every wrong-class hinge."""
        return 1.0 / (self.n_classes - 1)


@dataclass(frozen=True)
class Hyperparams:
    """Prior and proposal settings for the hierarchical model.

    ``sigma2_shape_mode`` selects the shape of the noise-precision
    conditional: 'paper' uses (a_sigma + n c)/2, 'exact' uses
    (a_sigma + (c-1) n)/2 matching the free-latent count.
    """

    a_sigma: float = 3.0
    b_sigma: float = 10.0
    a_tau: float = 4.0
    b_tau: float = 0.1
    eta: float = 1000.0
    theta_bounds: tuple[float, float] = (0.1, 200.0)
    z_proposal_sd: float = 0.5
    theta_proposal_sd: float = 0.25
    sigma2_shape_mode: str = "paper"

    def __post_init__(self):
        for name in ("a_sigma", "b_sigma", "a_tau", "b_tau", "eta",
                     "z_proposal_sd", "theta_proposal_sd"):
            if getattr(self, name) <= 0:
                raise ParameterError(f"{name} must be positive, got {getattr(self, name)}")
        lo, hi = self.theta_bounds
        if not (0 < lo < hi):
            raise ParameterError(f"theta bounds must satisfy 0 < lo < hi, got {self.theta_bounds}")
        if self.sigma2_shape_mode not in ("paper", "exact"):
            raise ParameterError(
                f"sigma2_shape_mode must be 'paper' or 'exact', got {self.sigma2_shape_mode!r}"
            )


@dataclass(frozen=True)
class Coefficients:
    """Unconstrained coefficients (b0, B) and their centered images (w0, W).

    w0 = H b0 and W = B H subtract the class-wise mean, so w0 sums to
    zero and every row of W sums to zero by construction.
    """

    b0: np.ndarray
    B: np.ndarray

    def __post_init__(self):
        b0 = np.asarray(self.b0, dtype=float)
        B = np.asarray(self.B, dtype=float)
        if b0.ndim != 1 or B.ndim != 2 or B.shape[1] != b0.shape[0]:
            raise ShapeError(
                f"intercepts {b0.shape} and coefficient matrix {B.shape} are inconsistent"
            )
        object.__setattr__(self, "b0", b0)
        object.__setattr__(self, "B", B)

    @classmethod
    def zeros(cls, n: int, c: int) -> "Coefficients":
        return cls(b0=np.zeros(c), B=np.zeros((n, c)))

    @property
    def n_classes(self) -> int:
        return self.b0.shape[0]

    @property
    def w0(self) -> np.ndarray:
        return self.b0 - self.b0.mean()

    @property
    def W(self) -> np.ndarray:
        return self.B - self.B.mean(axis=1, keepdims=True)

    @property
    def beta_matrix(self) -> np.ndarray:
        """The (n+1) x c stack [b0'; B]: column j is the class-j regression vector."""
        return np.vstack([self.b0[None, :], self.B])


def training_decision_values(coef: Coefficients, k: KernelMatrix) -> np.ndarray:
    """Decision values at the training points: row i holds w0 + W' k_i."""
    if coef.B.shape[0] != k.n:
        raise ShapeError(
            f"coefficient rows {coef.B.shape[0]} do not match kernel size {k.n}"
        )
    return coef.w0[None, :] + k.entries @ coef.W


def neg_log_likelihood(f_values: np.ndarray, ts: TrainingSet, grouping: str = "by_point") -> float:
    """Sum of wrong-class hinges: sum_i sum_{j != y_i} (f_ij + 1/(c-1))_+.

    ``grouping`` picks the iteration order ('by_point' or 'by_class');
    both accumulate the identical multiset of terms with ``fsum``, so
    they agree exactly.
    """
    f_values = np.asarray(f_values, dtype=float)
    if f_values.shape != (ts.n, ts.n_classes):
        raise ShapeError(
            f"decision values shape {f_values.shape} does not match "
            f"({ts.n}, {ts.n_classes})"
        )
    shifted = hinge(f_values + ts.margin_offset)
    if grouping == "by_point":
        terms = (shifted[i, j]
                 for i in range(ts.n)
                 for j in range(ts.n_classes) if j != ts.labels[i])
    elif grouping == "by_class":
        terms = (shifted[i, j]
                 for j in range(ts.n_classes)
                 for i in ts.complements[j])
    else:
        raise ParameterError(f"unknown grouping {grouping!r}")
    return math.fsum(terms)


def log_prior_W(W: np.ndarray, k: KernelMatrix, lam: float) -> float:
    """Log density (up to the 2-pi constant) of the centered coefficient prior.

    The prior on W is the rank-deficient matrix normal obtained by
    centering c independent N(0, (lam K)^-1) columns:

        (n(c-1)/2) log lam + ((c-1)/2) log pdet(K) - (lam/2) tr(K W W').
    """
    if lam <= 0:
        raise ParameterError(f"lam must be positive, got {lam}")
    W = np.asarray(W, dtype=float)
    n, c = W.shape
    if n != k.n:
        raise ShapeError(f"W has {n} rows, kernel has {k.n}")
    row_sums = W.sum(axis=1)
    if np.max(np.abs(row_sums), initial=0.0) > 1e-10:
        raise ConstraintError(
            f"rows of W must sum to zero within 1e-10, worst {np.max(np.abs(row_sums)):.3e}"
        )
    quad = float(np.sum((k.entries @ W) * W))
    return (n * (c - 1) / 2.0) * math.log(lam) \
        + ((c - 1) / 2.0) * log_pseudo_det(k) \
        - 0.5 * lam * quad


def log_prior_beta(beta_j: np.ndarray, sigma2: float, tau: float, eta: float,
                   k: KernelMatrix) -> float:
    """Log density of one regression column under N(0, sigma2 Sigma^-1).

    Sigma = blockdiag(eta, tau K); the quadratic form is
    eta b0^2 + tau b' K b and the normalizer uses the pseudo-determinant
    of K.
    """
    if sigma2 <= 0 or tau <= 0 or eta <= 0:
        raise ParameterError("sigma2, tau and eta must all be positive")
    beta_j = np.asarray(beta_j, dtype=float)
    n = k.n
    if beta_j.shape != (n + 1,):
        raise ShapeError(f"beta has shape {beta_j.shape}, expected ({n + 1},)")
    b0, b = beta_j[0], beta_j[1:]
    quad = eta * b0**2 + tau * float(b @ (k.entries @ b))
    log_det_sigma = math.log(eta) + n * math.log(tau) + log_pseudo_det(k)
    return 0.5 * log_det_sigma \
        - 0.5 * (n + 1) * math.log(2.0 * math.pi * sigma2) \
        - quad / (2.0 * sigma2)


def alt_class_probabilities(f_row: np.ndarray) -> np.ndarray:
    """Softmax-of-hinge class probabilities, the normalized-likelihood variant.

    p_j = exp((f_j + 1/(c-1))_+) / sum_l exp((f_l + 1/(c-1))_+).
    """
    f_row = np.asarray(f_row, dtype=float)
    c = f_row.shape[0]
    g = hinge(f_row + 1.0 / (c - 1))
    g = g - g.max()
    e = np.exp(g)
    return e / e.sum()


def binary_reduction_pair(f1: float) -> tuple[float, float]:
    """Unnormalized two-class probabilities (p(y=1), p(y=-1)) at decision value f1.

    With two classes and f2 = -f1, the wrong-class hinge likelihood
    collapses to exp(-(1 - f1)_+) for the positive class and
    exp(-(1 + f1)_+) for the negative one. Used in consistency tests.
    """
    return math.exp(-max(1.0 - f1, 0.0)), math.exp(-max(1.0 + f1, 0.0))


@dataclass(frozen=True)
class LatentState:
    """Free latent responses, one vector per class.

    ``s[j]`` holds the latent values of class j at the rows not
    belonging to class j, ordered as ``ts.complements[j]``.
    """

    s: tuple

    @classmethod
    def from_arrays(cls, arrays) -> "LatentState":
        return cls(s=tuple(np.asarray(a, dtype=float) for a in arrays))

    def copy(self) -> "LatentState":
        return LatentState(s=tuple(a.copy() for a in self.s))


def initial_latent(ts: TrainingSet) -> LatentState:
    """Encoding start: every free latent at -1/(c-1).

    Completing the matrix then puts the own-class entries at exactly 1.
    """
    return LatentState(s=tuple(
        np.full(ts.counts[j], -ts.margin_offset) for j in range(ts.n_classes)
    ))


def complete_Z(latent: LatentState, ts: TrainingSet) -> np.ndarray:
    """Fill the own-class entries so that every row of Z sums to zero.

    The entry for the observed class is the exact negation of the sum of
    the free entries in its row.
    """
    if len(latent.s) != ts.n_classes:
        raise ShapeError(
            f"latent state has {len(latent.s)} classes, training set {ts.n_classes}"
        )
    z = np.zeros((ts.n, ts.n_classes))
    for j in range(ts.n_classes):
        if latent.s[j].shape != (ts.counts[j],):
            raise ShapeError(
                f"class {j + 1} latent vector has shape {latent.s[j].shape}, "
                f"expected ({ts.counts[j]},)"
            )
        z[ts.complements[j], j] = latent.s[j]
    rows = np.arange(ts.n)
    z[rows, ts.labels] = 0.0
    z[rows, ts.labels] = -z.sum(axis=1)
    return z
