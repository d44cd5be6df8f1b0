"""Deterministic regularized-primal training by projected subgradient descent.

Minimizes the hinge-plus-quadratic objective over the unconstrained
(b0, B) parameterization; the centering projection keeps every iterate's
(w0, W) on the sum-to-zero constraint set. Steps decay as step0/sqrt(t)
and the best iterate seen is returned, so the reported objective is
nonincreasing even though raw subgradient iterates oscillate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DivergenceError, ParameterError
from .kernels import KernelMatrix
from .model import Coefficients, TrainingSet, neg_log_likelihood, training_decision_values

# Stopping is evaluated on windows of this many iterations.
STALL_WINDOW = 50


@dataclass(frozen=True)
class MapConfig:
    """Settings for the subgradient optimizer.

    ``lam`` is the quadratic regularization weight; use tau/sigma2 when
    warm-starting the sampler, 1.0 standalone.
    """

    lam: float = 1.0
    max_iters: int = 1000
    step0: float = 0.5
    tol: float = 1e-6

    def __post_init__(self):
        if self.lam <= 0 or self.step0 <= 0 or self.tol <= 0:
            raise ParameterError("lam, step0 and tol must all be positive")
        if self.max_iters < 0:
            raise ParameterError(f"max_iters must be nonnegative, got {self.max_iters}")


def primal_objective(coef: Coefficients, k: KernelMatrix, ts: TrainingSet,
                     lam: float) -> float:
    """Wrong-class hinge sum plus (lam/2) tr(K W W')."""
    if lam <= 0:
        raise ParameterError(f"lam must be positive, got {lam}")
    f = training_decision_values(coef, k)
    w = coef.W
    # divergence shows up as inf/nan and is handled upstream
    with np.errstate(over="ignore", invalid="ignore"):
        quad = float(np.sum((k.entries @ w) * w))
    return neg_log_likelihood(f, ts) + 0.5 * lam * quad


def subgradient(coef: Coefficients, k: KernelMatrix, ts: TrainingSet,
                lam: float) -> tuple[np.ndarray, np.ndarray]:
    """Subgradient of the primal objective with respect to (b0, B).

    At hinge kinks the zero element is chosen. The chain rule through
    the centering projection amounts to centering the hinge-indicator
    block (rows for b0 and B alike), since the projection is idempotent.
    """
    f = training_decision_values(coef, k)
    active = (f + ts.margin_offset) > 0.0
    g = active.astype(float)
    g[np.arange(ts.n), ts.labels] = 0.0
    g_centered = g - g.mean(axis=1, keepdims=True)
    grad_b0 = g.sum(axis=0)
    grad_b0 = grad_b0 - grad_b0.mean()
    grad_B = k.entries @ (g_centered + lam * coef.W)
    return grad_b0, grad_B


def map_fit(ts: TrainingSet, k: KernelMatrix, cfg: MapConfig, seed: int = 0) -> Coefficients:
    """Subgradient descent from zero coefficients, returning the best iterate.

    ``seed`` is accepted for interface uniformity with the stochastic
    trainers; the optimizer itself is deterministic. Raises
    DivergenceError if the objective turns non-finite.
    """
    del seed
    coef = Coefficients.zeros(ts.n, ts.n_classes)
    best_obj = primal_objective(coef, k, ts, cfg.lam)
    best = coef
    window_best = best_obj
    b0 = coef.b0.copy()
    B = coef.B.copy()
    for t in range(1, cfg.max_iters + 1):
        g_b0, g_B = subgradient(Coefficients(b0=b0, B=B), k, ts, cfg.lam)
        # normalized direction keeps the step scale meaningful across
        # regularization weights
        norm = math.sqrt(float(g_b0 @ g_b0) + float(np.sum(g_B * g_B)))
        if norm == 0.0:
            break
        step = cfg.step0 / (math.sqrt(t) * norm)
        b0 -= step * g_b0
        B -= step * g_B
        cand = Coefficients(b0=b0.copy(), B=B.copy())
        obj = primal_objective(cand, k, ts, cfg.lam)
        if not math.isfinite(obj):
            raise DivergenceError(
                f"objective became non-finite at iteration {t}", iteration=t
            )
        if obj < best_obj:
            best_obj = obj
            best = cand
        if t % STALL_WINDOW == 0:
            decrease = (window_best - best_obj) / max(abs(window_best), 1.0)
            if decrease < cfg.tol:
                break
            window_best = best_obj
    return best
