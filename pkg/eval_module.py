"""Evaluation module for the MUCHLAC toolkit.

Stratified k-fold cross-validation of the Real AdaBoost detector,
confusion counting and precision/recall/F-measure, plus the two
experiment protocols built on top of it: training-size sensitivity and
top-k feature selection.
"""

from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from joblib import Parallel, delayed
from sklearn.metrics import confusion_matrix
from sklearn.model_selection import StratifiedKFold

from adaboost_module import DEFAULT_BINS, DEFAULT_ROUNDS, predict_labels, train_real_adaboost
from feature_module import FeatureMatrix
from forest_module import ImportanceReport, select_top_k

DEFAULT_FOLDS = 5
SENSITIVITY_FRACTIONS = (0.02, 0.04, 0.06, 0.08, 0.10, 0.20, 0.40, 0.60, 0.80)
SELECTION_KS = (100, 200, 300, 400, 500)


class EvaluationError(ValueError):
    """Raised when folds or subsamples cannot be formed."""


@dataclass
class ConfusionCounts:
    """Confusion counts; reals so fold averages stay exact."""

    tp: float = 0.0
    fp: float = 0.0
    tn: float = 0.0
    fn: float = 0.0

    def __post_init__(self) -> None:
        if min(self.tp, self.fp, self.tn, self.fn) < 0:
            raise EvaluationError("confusion counts must be >= 0")

    @property
    def total(self) -> float:
        return self.tp + self.fp + self.tn + self.fn

    def as_dict(self) -> Dict[str, float]:
        return {"tp": self.tp, "fp": self.fp, "tn": self.tn, "fn": self.fn}


def metrics(counts: ConfusionCounts, beta: float = 1.0) -> Tuple[float, float, float]:
    """Precision, recall and F-measure of a set of counts.

    F = (beta^2 + 1) P R / (beta^2 P + R). Every ratio with a zero
    denominator is 0.

    Raises:
        EvaluationError: On negative counts.
    """
    if min(counts.tp, counts.fp, counts.tn, counts.fn) < 0:
        raise EvaluationError("confusion counts must be >= 0")

    predicted = counts.tp + counts.fp
    actual = counts.tp + counts.fn
    precision = counts.tp / predicted if predicted > 0 else 0.0
    recall = counts.tp / actual if actual > 0 else 0.0

    weight = beta ** 2
    denominator = weight * precision + recall
    f_measure = (weight + 1) * precision * recall / denominator if denominator > 0 else 0.0
    return precision, recall, f_measure


@dataclass
class FoldResult:
    """Counts and metrics of one held-out fold."""

    fold: int
    counts: ConfusionCounts
    train_size: int
    test_size: int

    def as_dict(self) -> Dict[str, Any]:
        precision, recall, f_measure = metrics(self.counts)
        payload: Dict[str, Any] = {"fold": self.fold}
        payload.update(self.counts.as_dict())
        payload.update(
            {
                "precision": precision,
                "recall": recall,
                "f_measure": f_measure,
                "train_size": self.train_size,
                "test_size": self.test_size,
            }
        )
        return payload


@dataclass
class DetectionReport:
    """Per-fold and averaged detection results."""

    folds: List[FoldResult]
    config: Dict[str, Any] = field(default_factory=dict)

    @property
    def mean_counts(self) -> ConfusionCounts:
        stacked = np.array([[f.counts.tp, f.counts.fp, f.counts.tn, f.counts.fn] for f in self.folds])
        tp, fp, tn, fn = (float(v) for v in stacked.mean(axis=0))
        return ConfusionCounts(tp=tp, fp=fp, tn=tn, fn=fn)

    @property
    def mean_metrics(self) -> Tuple[float, float, float]:
        """P, R and F of the averaged counts."""
        return metrics(self.mean_counts)

    @property
    def mean_fold_f(self) -> float:
        return float(np.mean([metrics(f.counts)[2] for f in self.folds]))

    def as_dict(self) -> Dict[str, Any]:
        precision, recall, f_measure = self.mean_metrics
        mean = self.mean_counts.as_dict()
        mean.update(
            {
                "precision": precision,
                "recall": recall,
                "f_measure": f_measure,
                "mean_fold_f_measure": self.mean_fold_f,
            }
        )
        return {
            "config": self.config,
            "folds": [f.as_dict() for f in self.folds],
            "mean": mean,
        }


def kfold_split(labels: Sequence[int], k: int, seed: int) -> List[np.ndarray]:
    """Stratified, seeded partition of the sample indices into k folds.

    Returns:
        List[np.ndarray]: Sorted held-out indices of every fold.

    Raises:
        EvaluationError: If k < 2 or a class has fewer than k members.
    """
    labels = np.asarray(labels, dtype=np.int64)
    if k < 2:
        raise EvaluationError("k must be >= 2")
    for label in (1, -1):
        members = int(np.sum(labels == label))
        if members < k:
            raise EvaluationError(f"class {label:+d} has {members} samples, fewer than k={k} folds")

    splitter = StratifiedKFold(n_splits=k, shuffle=True, random_state=seed)
    placeholder = np.zeros((len(labels), 1))
    return [np.sort(test) for _, test in splitter.split(placeholder, labels)]


def stratified_subsample(train: np.ndarray, y: np.ndarray, fraction: float, seed: Sequence[int]) -> np.ndarray:
    """Keep a stratified share of the training indices.

    Each class keeps the first round(fraction * n_class) members of a
    permutation drawn from default_rng(seed). The permutation does not
    depend on fraction, so the subsample at a smaller fraction is always
    contained in the subsample at a larger one.

    Returns:
        np.ndarray: Sorted kept indices.

    Raises:
        EvaluationError: If a class ends up with no members.
    """
    if fraction >= 1.0:
        return train
    rng = np.random.default_rng(list(seed))
    kept = []
    for label in (-1, 1):
        members = train[y[train] == label]
        order = rng.permutation(members)
        take = int(round(fraction * len(members)))
        if take == 0:
            raise EvaluationError(f"train fraction {fraction} eliminates class {label:+d}")
        kept.append(order[:take])
    return np.sort(np.concatenate(kept))


def _run_fold(
    X: np.ndarray,
    y: np.ndarray,
    fold: int,
    test: np.ndarray,
    train_fraction: float,
    seed: int,
    rounds: int,
    bins: int,
) -> FoldResult:
    train = np.setdiff1d(np.arange(len(y)), test)
    train = stratified_subsample(train, y, train_fraction, (seed, fold))

    model = train_real_adaboost(X[train], y[train], rounds=rounds, bins=bins, seed=seed)
    predicted = predict_labels(model, X[test])

    # Rows/columns ordered negative then positive
    (tn, fp), (fn, tp) = confusion_matrix(y[test], predicted, labels=[-1, 1])
    counts = ConfusionCounts(tp=float(tp), fp=float(fp), tn=float(tn), fn=float(fn))
    return FoldResult(fold=fold, counts=counts, train_size=len(train), test_size=len(test))


def cross_validate(
    X: np.ndarray,
    y: np.ndarray,
    k: int = DEFAULT_FOLDS,
    train_fraction: float = 1.0,
    seed: int = 7,
    rounds: int = DEFAULT_ROUNDS,
    bins: int = DEFAULT_BINS,
    threads: int = 1,
) -> DetectionReport:
    """k-fold cross-validation of Real AdaBoost.

    For every fold the training portion is subsampled to train_fraction
    (stratified, nested across fractions, seeded by (seed, fold)), a
    model is trained and the held-out fold is counted.

    Args:
        X: (samples, features) matrix.
        y: Labels in {+1, -1}.
        k: Number of folds.
        train_fraction: Share of each training portion actually used.
        seed: Fold and subsample seed.
        rounds: Boosting rounds.
        bins: Bins per stump.
        threads: Folds evaluated in parallel.

    Raises:
        EvaluationError: On invalid folds or a subsample losing a class.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise EvaluationError("X must be (samples, features) with one label per sample")
    if not 0.0 < train_fraction <= 1.0:
        raise EvaluationError(f"train fraction {train_fraction} must be in (0, 1]")

    folds = kfold_split(y, k, seed)
    results = Parallel(n_jobs=threads, prefer="threads")(
        delayed(_run_fold)(X, y, fold, test, train_fraction, seed, rounds, bins)
        for fold, test in enumerate(folds)
    )

    config = {
        "folds": k,
        "train_fraction": train_fraction,
        "seed": seed,
        "rounds": rounds,
        "bins": bins,
        "samples": int(len(y)),
        "features": int(X.shape[1]),
    }
    return DetectionReport(folds=list(results), config=config)


def sensitivity_sweep(
    X: np.ndarray,
    y: np.ndarray,
    fractions: Sequence[float] = SENSITIVITY_FRACTIONS,
    seeds: Sequence[int] = (7,),
    k: int = DEFAULT_FOLDS,
    rounds: int = DEFAULT_ROUNDS,
    bins: int = DEFAULT_BINS,
    threads: int = 1,
) -> Dict[str, Any]:
    """Cross-validate at every training fraction for every seed.

    Returns:
        Dict: {"runs": [{fraction, seed, report}], "mean_f": [{fraction, f_measure}]}
            where f_measure is the F of averaged counts, averaged over seeds.
    """
    runs = []
    mean_f = []
    for fraction in fractions:
        scores = []
        for seed in seeds:
            report = cross_validate(X, y, k, fraction, seed, rounds, bins, threads)
            scores.append(report.mean_metrics[2])
            runs.append({"fraction": fraction, "seed": seed, "report": report.as_dict()})
        mean_f.append({"fraction": fraction, "f_measure": float(np.mean(scores))})

    return {"runs": runs, "mean_f": mean_f}


def selection_sweep(
    matrix: FeatureMatrix,
    importance: ImportanceReport,
    ks: Sequence[int] = SELECTION_KS,
    k: int = DEFAULT_FOLDS,
    seed: int = 7,
    rounds: int = DEFAULT_ROUNDS,
    bins: int = DEFAULT_BINS,
    threads: int = 1,
    include_all: bool = True,
) -> List[Dict[str, Any]]:
    """Cross-validate the top-k matrix for every k (and optionally all columns).

    Values of k above the column count are skipped.

    Raises:
        EvaluationError: If the matrix carries no labels.
    """
    if matrix.labels is None:
        raise EvaluationError("feature matrix has no labels")

    results = []
    for top in ks:
        if top > matrix.cols:
            continue
        reduced = select_top_k(matrix, importance, top)
        report = cross_validate(reduced.values, matrix.labels, k, 1.0, seed, rounds, bins, threads)
        results.append({"k": int(top), "f_measure": report.mean_metrics[2], "report": report.as_dict()})

    if include_all:
        report = cross_validate(matrix.values, matrix.labels, k, 1.0, seed, rounds, bins, threads)
        results.append({"k": matrix.cols, "f_measure": report.mean_metrics[2], "report": report.as_dict()})
    return results


def report_to_json(report: DetectionReport, run_config: Optional[Dict[str, Any]] = None) -> Dict[str, Any]:
    """Report payload with the producing run config merged into its echo."""
    payload = report.as_dict()
    if run_config:
        payload["config"] = {**run_config, "evaluation": payload["config"]}
    return payload
