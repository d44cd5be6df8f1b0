"""Dataset ingestion, standardization, and the two evaluation protocols.

CSV files are parsed strictly: features must be numeric, missing cells
are an error (no imputation), and label tokens are mapped to 1..c in
first-appearance order. Both protocols (leave-one-out and repeated
random splits) standardize inside each fold using the training portion
only, derive per-fold seeds deterministically from the master seed, and
can run folds in parallel worker processes.
"""

from __future__ import annotations

import csv
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, FoldDegeneracyError, ParameterError

MISSING_TOKENS = ("", "?")


@dataclass(frozen=True)
class RawDataset:
    """Numeric feature matrix with 1-based integer labels.

    ``label_vocabulary[k]`` is the original token of label k+1.
    """

    features: np.ndarray
    labels: np.ndarray
    label_vocabulary: tuple
    feature_names: tuple | None = None

    def __post_init__(self):
        features = np.asarray(self.features, dtype=float)
        labels = np.asarray(self.labels, dtype=int)
        if features.ndim != 2 or labels.shape != (features.shape[0],):
            raise DataError(
                f"feature matrix {features.shape} and labels {labels.shape} disagree"
            )
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "labels", labels)

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def p(self) -> int:
        return self.features.shape[1]

    @property
    def n_classes(self) -> int:
        return len(self.label_vocabulary)


@dataclass(frozen=True)
class StandardizationStats:
    """Column means and standard deviations learned from a training portion."""

    means: np.ndarray
    sds: np.ndarray

    def apply(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.means.shape[0]:
            raise DataError(
                f"expected {self.means.shape[0]} feature columns, got {x.shape[-1]}"
            )
        return (x - self.means) / self.sds


@dataclass(frozen=True)
class EvalResult:
    """Outcome of one evaluation protocol run."""

    protocol: str
    error_rate: float
    per_split_errors: list
    n_test: int
    seed: int
    metadata: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "protocol": self.protocol,
            "error_rate": self.error_rate,
            "per_split_errors": list(self.per_split_errors),
            "n_test": self.n_test,
            "seed": self.seed,
            "metadata": dict(self.metadata),
        }


def load_csv(path, label_column=0, delimiter: str = ",", header="auto") -> RawDataset:
    """Read a delimited text file into a RawDataset.

    ``label_column`` selects the label cell by 0-based index or, when a
    header row is present, by name. ``header`` is True, False, or
    "auto" (a header is assumed when the label column is a name, or
    when the first row fails numeric parsing).
    """
    with open(path, newline="") as fh:
        rows = [row for row in csv.reader(fh, delimiter=delimiter)
                if row and any(cell.strip() for cell in row)]
    names = None
    if rows:
        if header == "auto":
            header = isinstance(label_column, str) or _looks_like_header(rows[0], label_column)
        if header:
            names = [cell.strip() for cell in rows[0]]
            rows = rows[1:]
    elif isinstance(label_column, str):
        raise DataError(f"{path}: empty file cannot carry the label column {label_column!r}")
    if isinstance(label_column, str):
        if names is None or label_column not in names:
            raise DataError(f"{path}: no column named {label_column!r} in header")
        label_idx = names.index(label_column)
    else:
        label_idx = int(label_column)
    features = []
    tokens = []
    width = None
    for r, row in enumerate(rows):
        cells = [cell.strip() for cell in row]
        if width is None:
            width = len(cells)
            if not (-width <= label_idx < width):
                raise DataError(f"{path}: label column {label_idx} out of range for {width} columns")
            if label_idx < 0:
                label_idx += width
        if len(cells) != width:
            raise DataError(f"{path}: row {r + 1} has {len(cells)} cells, expected {width}")
        tokens.append(cells[label_idx])
        feat = []
        for c, cell in enumerate(cells):
            if c == label_idx:
                continue
            if cell in MISSING_TOKENS:
                raise DataError(f"{path}: missing value at row {r + 1}, column {c + 1}")
            try:
                feat.append(float(cell))
            except ValueError:
                raise DataError(
                    f"{path}: cannot parse feature cell {cell!r} at row {r + 1}, column {c + 1}"
                ) from None
        features.append(feat)
    vocabulary = []
    for tok in tokens:
        if tok in MISSING_TOKENS:
            raise DataError(f"{path}: missing label token")
        if tok not in vocabulary:
            vocabulary.append(tok)
    mapping = {tok: k + 1 for k, tok in enumerate(vocabulary)}
    labels = np.array([mapping[tok] for tok in tokens], dtype=int)
    feature_names = None
    if names is not None:
        feature_names = tuple(nm for k, nm in enumerate(names) if k != label_idx)
    return RawDataset(
        features=np.array(features, dtype=float).reshape(len(features), width - 1 if width else 0),
        labels=labels,
        label_vocabulary=tuple(vocabulary),
        feature_names=feature_names,
    )


def _looks_like_header(row, label_column) -> bool:
    # a header row has no numeric feature cells at all; a data row with
    # a single bad cell must surface as a parse error instead
    saw_name = False
    for c, cell in enumerate(row):
        if isinstance(label_column, int) and c == label_column:
            continue
        cell = cell.strip()
        if cell in MISSING_TOKENS:
            continue
        try:
            float(cell)
            return False
        except ValueError:
            saw_name = True
    return saw_name


def standardize(train_x: np.ndarray, apply_x: np.ndarray | None = None):
    """Zero-mean unit-variance transform learned from the training rows.

    Uses the population (divide-by-n) convention. Constant columns have
    their deviation clamped to 1, so they transform to zero. Returns
    (train_transformed, apply_transformed, stats); the second element is
    None when ``apply_x`` is omitted.
    """
    train_x = np.asarray(train_x, dtype=float)
    if train_x.ndim != 2 or train_x.shape[0] == 0:
        raise DataError(f"training portion must be a nonempty 2-d array, got {train_x.shape}")
    means = train_x.mean(axis=0)
    sds = train_x.std(axis=0)
    scale = np.maximum(np.abs(means), 1.0)
    sds = np.where(sds <= 1e-12 * scale, 1.0, sds)
    stats = StandardizationStats(means=means, sds=sds)
    applied = None if apply_x is None else stats.apply(apply_x)
    return stats.apply(train_x), applied, stats


def fold_seed(master_seed: int, index: int) -> int:
    """Deterministic per-fold integer seed derived from the master seed."""
    return int(np.random.SeedSequence((master_seed, index)).generate_state(1)[0])


def _check_class_coverage(labels: np.ndarray, n_classes: int, context: str):
    present = np.unique(labels)
    for cls in range(1, n_classes + 1):
        if cls not in present:
            raise FoldDegeneracyError(
                f"class {cls} has no members in the training portion of {context}",
                class_label=cls,
            )


@dataclass(frozen=True)
class _FoldTask:
    features: np.ndarray
    labels: np.ndarray
    n_classes: int
    train_idx: np.ndarray
    test_idx: np.ndarray
    trainer: object
    predictor: object
    seed: int
    context: str


def _run_fold(task: _FoldTask) -> int:
    """Train on the fold's training rows, return the misclassification count."""
    y_train = task.labels[task.train_idx]
    _check_class_coverage(y_train, task.n_classes, task.context)
    x_train, x_test, _ = standardize(task.features[task.train_idx],
                                     task.features[task.test_idx])
    model = task.trainer(x_train, y_train, task.n_classes, task.seed)
    predicted = task.predictor(model, x_test)
    return int(np.sum(np.asarray(predicted) != task.labels[task.test_idx]))


def _run_tasks(tasks, jobs: int):
    if jobs <= 1 or len(tasks) <= 1:
        return [_run_fold(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_run_fold, tasks, chunksize=max(1, len(tasks) // (4 * jobs))))


def leave_one_out(ds: RawDataset, trainer, predictor, seed: int = 0,
                  jobs: int = 1) -> EvalResult:
    """Hold out each point in turn; error rate is (#wrong)/n.

    Standardization happens inside every fold from the n-1 retained
    rows. Raises FoldDegeneracyError up front if any class has fewer
    than two members.
    """
    if ds.n < 2:
        raise ParameterError(f"need at least two rows for leave-one-out, got {ds.n}")
    counts = np.bincount(ds.labels, minlength=ds.n_classes + 1)[1:]
    thin = np.flatnonzero(counts < 2)
    if thin.size:
        raise FoldDegeneracyError(
            f"class {thin[0] + 1} has fewer than two members; a fold would lose it",
            class_label=int(thin[0] + 1),
        )
    all_idx = np.arange(ds.n)
    tasks = [
        _FoldTask(
            features=ds.features, labels=ds.labels, n_classes=ds.n_classes,
            train_idx=np.delete(all_idx, i), test_idx=np.array([i]),
            trainer=trainer, predictor=predictor,
            seed=fold_seed(seed, i), context=f"leave-one-out fold {i}",
        )
        for i in range(ds.n)
    ]
    wrongs = _run_tasks(tasks, jobs)
    return EvalResult(
        protocol="loo",
        error_rate=sum(wrongs) / ds.n,
        per_split_errors=[int(w) for w in wrongs],
        n_test=ds.n,
        seed=seed,
        metadata={"standardization": "population", "folds": ds.n},
    )


def random_splits(ds: RawDataset, n_train: int, n_repeats: int, trainer,
                  predictor, seed: int = 0, jobs: int = 1,
                  n_test: int | None = None) -> EvalResult:
    """Uniform unstratified train/test splits, averaged over repeats.

    Each repeat's permutation comes from (seed, repeat); the first
    ``n_train`` rows train and the next ``n_test`` (all the rest by
    default) are scored. A class absent from some training split raises
    FoldDegeneracyError naming the repeat.
    """
    if not (0 < n_train < ds.n):
        raise ParameterError(f"n_train must lie in 1..{ds.n - 1}, got {n_train}")
    if n_test is None:
        n_test = ds.n - n_train
    if not (0 < n_test <= ds.n - n_train):
        raise ParameterError(f"n_test must lie in 1..{ds.n - n_train}, got {n_test}")
    if n_repeats < 1:
        raise ParameterError(f"n_repeats must be positive, got {n_repeats}")
    tasks = []
    for r in range(n_repeats):
        rng = np.random.default_rng(np.random.SeedSequence((seed, r)))
        perm = rng.permutation(ds.n)
        tasks.append(_FoldTask(
            features=ds.features, labels=ds.labels, n_classes=ds.n_classes,
            train_idx=perm[:n_train], test_idx=perm[n_train:n_train + n_test],
            trainer=trainer, predictor=predictor,
            seed=fold_seed(seed, r), context=f"split repeat {r}",
        ))
    wrongs = _run_tasks(tasks, jobs)
    return EvalResult(
        protocol="split",
        error_rate=sum(wrongs) / (n_repeats * n_test),
        per_split_errors=[w / n_test for w in wrongs],
        n_test=n_test,
        seed=seed,
        metadata={"standardization": "population", "n_train": n_train,
                  "n_repeats": n_repeats},
    )


def split_indices(n: int, n_train: int, seed: int, repeat: int) -> tuple[np.ndarray, np.ndarray]:
    """The exact train/test index split used by ``random_splits``."""
    rng = np.random.default_rng(np.random.SeedSequence((seed, repeat)))
    perm = rng.permutation(n)
    return perm[:n_train], perm[n_train:]
