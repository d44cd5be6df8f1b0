"""Posterior-averaged class scores and the induced classification rule.

For a query point, each retained sample contributes exp(-(f_j + 1/(c-1))_+)
per class: an unnormalized "not class j" weight in (0, 1]. Averaging over
samples and taking the arg-min gives the label; ties break to the
smallest class index. A single-sample record (e.g. a deterministic fit)
reduces to the usual arg-max-of-f rule wherever some hinge is active.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ParameterError, ShapeError
from .kernels import kernel_cross
from .model import Coefficients, hinge
from .sampler import PosteriorSamples


@dataclass(frozen=True)
class Prediction:
    """Predicted label (1-based) with the averaged per-class scores."""

    class_label: int
    not_class_scores: np.ndarray
    per_sample_f: np.ndarray | None = None


def decision_values(x_star: np.ndarray, coef: Coefficients,
                    train_inputs: np.ndarray, theta: float) -> np.ndarray:
    """Decision vector f(x*) = w0 + W' k(x*), summing to zero."""
    train_inputs = np.asarray(train_inputs, dtype=float)
    if coef.B.shape[0] != train_inputs.shape[0]:
        raise ShapeError(
            f"coefficients cover {coef.B.shape[0]} points, got {train_inputs.shape[0]}"
        )
    kvec = kernel_cross(np.asarray(x_star, dtype=float), train_inputs, theta)
    return coef.w0 + coef.W.T @ kvec


def _sample_decision_values(x_star, samples: PosteriorSamples,
                            train_inputs) -> np.ndarray:
    """(T, c) decision values of one query under every retained sample.

    Samples sharing a width value share one kernel evaluation.
    """
    if samples.retained < 1:
        raise ParameterError("need at least one retained sample")
    x_star = np.asarray(x_star, dtype=float)
    train_inputs = np.asarray(train_inputs, dtype=float)
    out = np.zeros((samples.retained, samples.w0.shape[1]))
    for theta in np.unique(samples.theta):
        mask = samples.theta == theta
        kvec = kernel_cross(x_star, train_inputs, float(theta))
        out[mask] = samples.w0[mask] + np.einsum("tnc,n->tc", samples.W[mask], kvec)
    return out


def posterior_not_class_scores(x_star, samples: PosteriorSamples,
                               train_inputs) -> np.ndarray:
    """Averaged not-class weights: mean over samples of exp(-(f_j + 1/(c-1))_+)."""
    f = _sample_decision_values(x_star, samples, train_inputs)
    c = f.shape[1]
    return np.exp(-hinge(f + 1.0 / (c - 1))).mean(axis=0)


def classify(x_star, samples: PosteriorSamples, train_inputs,
             keep_sample_f: bool = False) -> Prediction:
    """Label a query by the smallest averaged not-class score."""
    f = _sample_decision_values(x_star, samples, train_inputs)
    c = f.shape[1]
    scores = np.exp(-hinge(f + 1.0 / (c - 1))).mean(axis=0)
    return Prediction(
        class_label=int(np.argmin(scores)) + 1,
        not_class_scores=scores,
        per_sample_f=f if keep_sample_f else None,
    )


def score_batch(x_stars, samples: PosteriorSamples,
                train_inputs) -> np.ndarray:
    """(m, c) averaged not-class scores for a batch of query rows."""
    if samples.retained < 1:
        raise ParameterError("need at least one retained sample")
    x_stars = np.asarray(x_stars, dtype=float)
    if x_stars.ndim != 2:
        raise ShapeError(f"query batch must be 2-d, got shape {x_stars.shape}")
    train_inputs = np.asarray(train_inputs, dtype=float)
    c = samples.w0.shape[1]
    offset = 1.0 / (c - 1)
    scores = np.zeros((x_stars.shape[0], c))
    for theta in np.unique(samples.theta):
        mask = np.flatnonzero(samples.theta == theta)
        kmat = kernel_cross(x_stars, train_inputs, float(theta))
        for t in mask:
            f = samples.w0[t] + kmat @ samples.W[t]
            scores += np.exp(-hinge(f + offset))
    return scores / samples.retained


def classify_batch(x_stars, samples: PosteriorSamples,
                   train_inputs) -> tuple[np.ndarray, np.ndarray]:
    """Labels (1-based) and score matrix for a batch of query rows."""
    scores = score_batch(x_stars, samples, train_inputs)
    return np.argmin(scores, axis=1) + 1, scores
