"""Trainer/predictor glue shared by the CLI and the evaluation protocols.

A trainer is a picklable callable ``(features, labels, n_classes, seed)
-> FittedModel`` so that fold workers can run in separate processes. The
sampler trainer resolves the kernel width per training set: a fixed
value, a grid chosen by inner cross-validation on the training rows
only, or width sampling inside the chain.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .data import StandardizationStats, standardize
from .errors import ParameterError
from .map_fit import MapConfig, map_fit
from .model import Hyperparams, TrainingSet
from .predict import classify_batch
from .sampler import (
    KernelWorkspace,
    PosteriorSamples,
    SamplerSchedule,
    init_state,
    run_chain,
)

MODEL_FORMAT = "bmsvm-model"
MODEL_VERSION = 1

# Salt mixed into seeds of inner cross-validation folds so they cannot
# collide with outer-protocol fold seeds.
_CV_SALT = 104729


@dataclass
class FittedModel:
    """Everything needed to score new points: samples plus training context."""

    samples: PosteriorSamples
    train_inputs: np.ndarray
    n_classes: int
    method: str
    stats: StandardizationStats | None = None
    label_vocabulary: tuple | None = None
    meta: dict = field(default_factory=dict)


def predict_labels(model: FittedModel, x: np.ndarray) -> np.ndarray:
    """1-based labels for already-standardized query rows."""
    labels, _ = classify_batch(x, model.samples, model.train_inputs)
    return labels


def predict_scores(model: FittedModel, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    return classify_batch(x, model.samples, model.train_inputs)


@dataclass(frozen=True)
class MapTrainer:
    """Deterministic regularized-primal trainer at a fixed or grid-chosen width."""

    cfg: MapConfig = MapConfig()
    theta: float | None = None
    theta_grid: tuple | None = None
    cv_folds: int = 5

    def __call__(self, x, y, n_classes, seed) -> FittedModel:
        theta = _resolve_theta(self, x, y, n_classes, seed)
        ts = TrainingSet.from_labels(x, y, n_classes)
        ws = KernelWorkspace.build(ts, theta)
        coef = map_fit(ts, ws.kernel, self.cfg, seed)
        return FittedModel(
            samples=PosteriorSamples.from_map(coef, theta),
            train_inputs=ts.inputs, n_classes=n_classes, method="map",
            meta={"theta": theta, "lambda": self.cfg.lam},
        )

    def with_theta(self, theta: float) -> "MapTrainer":
        return MapTrainer(cfg=self.cfg, theta=theta, theta_grid=None,
                          cv_folds=self.cv_folds)


@dataclass(frozen=True)
class SamplerTrainer:
    """Runs the data-augmentation chain on a training set."""

    hyper: Hyperparams = Hyperparams()
    schedule: SamplerSchedule = SamplerSchedule(10000, 5000, 10)
    theta: float | None = None
    theta_grid: tuple | None = None
    sample_theta: bool = False
    warm_start: bool = False
    fast_linalg: bool = False
    cv_folds: int = 5
    trace_path: str | None = None

    def __call__(self, x, y, n_classes, seed) -> FittedModel:
        theta = None if self.sample_theta else _resolve_theta(self, x, y, n_classes, seed)
        ts = TrainingSet.from_labels(x, y, n_classes)
        rng = np.random.default_rng(seed)
        init = init_state(ts, self.hyper, rng, theta=theta,
                          warm_start=self.warm_start)
        samples = run_chain(ts, self.hyper, self.schedule, init, rng,
                            sample_theta=self.sample_theta,
                            fast_linalg=self.fast_linalg,
                            trace_path=self.trace_path)
        return FittedModel(
            samples=samples, train_inputs=ts.inputs, n_classes=n_classes,
            method="bmsvm",
            meta={
                "theta": theta, "sample_theta": self.sample_theta,
                "z_acceptance_rate": samples.z_acceptance_rate,
                "theta_acceptance_rate": samples.theta_acceptance_rate,
            },
        )

    def with_theta(self, theta: float) -> "SamplerTrainer":
        return SamplerTrainer(
            hyper=self.hyper, schedule=self.schedule, theta=theta,
            theta_grid=None, sample_theta=False, warm_start=self.warm_start,
            fast_linalg=self.fast_linalg, cv_folds=self.cv_folds,
        )


def _resolve_theta(trainer, x, y, n_classes, seed) -> float:
    if trainer.theta is not None:
        return float(trainer.theta)
    if trainer.theta_grid:
        return select_theta_cv(x, y, n_classes, trainer.theta_grid, trainer,
                               seed, folds=trainer.cv_folds)
    raise ParameterError("trainer has neither a fixed width nor a grid")


def select_theta_cv(x, y, n_classes, grid, trainer, seed: int,
                    folds: int = 5) -> float:
    """Pick the kernel width from a grid by k-fold error on (x, y) only.

    Ties break to the smallest width. Fold membership is a seeded
    permutation cut into ``folds`` contiguous blocks.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=int)
    n = x.shape[0]
    folds = min(folds, n)
    perm = np.random.default_rng(np.random.SeedSequence((seed, _CV_SALT))).permutation(n)
    blocks = np.array_split(perm, folds)
    best_theta = None
    best_errors = None
    for theta in sorted(float(t) for t in grid):
        candidate = trainer.with_theta(theta)
        errors = 0
        for b, test_idx in enumerate(blocks):
            if test_idx.size == 0:
                continue
            train_idx = np.setdiff1d(perm, test_idx)
            if np.unique(y[train_idx]).size < n_classes:
                continue  # degenerate inner fold carries no vote
            x_tr, x_te, _ = standardize(x[train_idx], x[test_idx])
            model = candidate(x_tr, y[train_idx], n_classes,
                              int(np.random.SeedSequence((seed, _CV_SALT, b)).generate_state(1)[0]))
            errors += int(np.sum(predict_labels(model, x_te) != y[test_idx]))
        if best_errors is None or errors < best_errors:
            best_errors = errors
            best_theta = theta
    return best_theta


def model_to_dict(model: FittedModel, config: dict | None = None) -> dict:
    s = model.samples
    return {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "method": model.method,
        "n_classes": model.n_classes,
        "label_vocabulary": list(model.label_vocabulary) if model.label_vocabulary else None,
        "standardization": None if model.stats is None else {
            "means": model.stats.means.tolist(),
            "sds": model.stats.sds.tolist(),
        },
        "train_inputs": model.train_inputs.tolist(),
        "samples": {
            "w0": s.w0.tolist(),
            "W": s.W.tolist(),
            "sigma2": s.sigma2.tolist(),
            "tau": s.tau.tolist(),
            "theta": s.theta.tolist(),
            "accept_z": s.accept_z,
            "total_z": s.total_z,
            "accept_theta": s.accept_theta,
            "total_theta": s.total_theta,
        },
        "meta": model.meta,
        "config": config,
    }


def save_model(model: FittedModel, path, config: dict | None = None):
    with open(path, "w") as fh:
        json.dump(model_to_dict(model, config), fh, sort_keys=True, indent=1)
        fh.write("\n")


def load_model(path) -> FittedModel:
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("format") != MODEL_FORMAT:
        raise ParameterError(f"{path} is not a model file")
    s = doc["samples"]
    samples = PosteriorSamples(
        w0=np.asarray(s["w0"], dtype=float),
        W=np.asarray(s["W"], dtype=float),
        sigma2=np.asarray(s["sigma2"], dtype=float),
        tau=np.asarray(s["tau"], dtype=float),
        theta=np.asarray(s["theta"], dtype=float),
        accept_z=int(s["accept_z"]), total_z=int(s["total_z"]),
        accept_theta=int(s["accept_theta"]), total_theta=int(s["total_theta"]),
    )
    stats = None
    if doc.get("standardization"):
        stats = StandardizationStats(
            means=np.asarray(doc["standardization"]["means"], dtype=float),
            sds=np.asarray(doc["standardization"]["sds"], dtype=float),
        )
    vocab = doc.get("label_vocabulary")
    return FittedModel(
        samples=samples,
        train_inputs=np.asarray(doc["train_inputs"], dtype=float),
        n_classes=int(doc["n_classes"]),
        method=doc["method"],
        stats=stats,
        label_vocabulary=tuple(vocab) if vocab else None,
        meta=doc.get("meta", {}),
    )
