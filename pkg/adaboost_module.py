"""Real AdaBoost module for the MUCHLAC toolkit.

Confidence-rated boosting with domain-partitioning stumps: each weak
learner splits one feature into equal-frequency bins and outputs
0.5 * ln((W+ + eps) / (W- + eps)) in every bin.
"""

from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

from muchlac import VERSION, read_json_file, write_json_file

MODEL_MAGIC = "RAB1"
DEFAULT_ROUNDS = 500
DEFAULT_BINS = 16
FEATURE_BLOCK = 2048


class TrainingError(ValueError):
    """Raised when a classifier cannot be trained or applied."""


@dataclass
class Stump:
    """A domain-partitioning weak learner on one feature.

    Attributes:
        feature_index: Column the stump reads.
        edges: Interior thresholds, strictly increasing; together with
            -inf and +inf they partition the real line into len(edges)+1 bins.
        outputs: Real output of every bin.
        name: Component name of the feature.
    """

    feature_index: int
    edges: np.ndarray
    outputs: np.ndarray
    name: str = ""

    def bin_of(self, values: np.ndarray) -> np.ndarray:
        return np.searchsorted(self.edges, values, side="right")

    def predict(self, values: np.ndarray) -> np.ndarray:
        return self.outputs[self.bin_of(values)]


@dataclass
class StumpEnsembleModel:
    """A trained Real AdaBoost ensemble.

    Attributes:
        stumps: One stump per round.
        n_features: Dimensionality the model was trained on.
        bins: Requested bin count B.
        epsilon: Smoothing term.
        seed: Seed echoed from the run config.
        normalizers: Z_t of every round.
        training_errors: Training error after every round.
    """

    stumps: List[Stump]
    n_features: int
    bins: int
    epsilon: float
    seed: int = 0
    normalizers: List[float] = field(default_factory=list)
    training_errors: List[float] = field(default_factory=list)
    config: Dict[str, Any] = field(default_factory=dict)

    @property
    def rounds(self) -> int:
        return len(self.stumps)

    def error_bounds(self) -> List[float]:
        """Running product of Z_t; bounds the training error at each round."""
        return [float(v) for v in np.cumprod(self.normalizers)]


def quantile_edges(column: np.ndarray, bins: int) -> np.ndarray:
    """Interior equal-frequency thresholds of one training feature.

    Only distinct quantiles above the feature minimum are kept, so every bin
    holds at least one training value and a constant feature gets one bin.
    """
    if bins < 2:
        return np.zeros(0, dtype=np.float64)
    quantiles = np.quantile(column, np.arange(1, bins) / bins)
    inner = np.unique(quantiles)
    return inner[inner > column.min()]


def _validate_training(X: np.ndarray, y: np.ndarray, rounds: int, bins: int) -> None:
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise TrainingError("X must be (samples, features) with one label per sample")
    if X.shape[1] == 0:
        raise TrainingError("X has no features")
    if rounds < 1:
        raise TrainingError("rounds must be >= 1")
    if bins < 1:
        raise TrainingError("bins must be >= 1")
    if not np.all(np.isin(y, (-1, 1))):
        raise TrainingError("labels must be +1 or -1")
    if np.all(y == 1) or np.all(y == -1):
        raise TrainingError("single-class input: both labels must be present")
    if not np.all(np.isfinite(X)):
        raise TrainingError("non-finite feature values")


def train_real_adaboost(
    X: np.ndarray,
    y: np.ndarray,
    rounds: int = DEFAULT_ROUNDS,
    bins: int = DEFAULT_BINS,
    epsilon: Optional[float] = None,
    seed: int = 0,
    component_names: Optional[Sequence[str]] = None,
) -> StumpEnsembleModel:
    """Train a Real AdaBoost ensemble of quantile-binned stumps.

    Args:
        X: (samples, features) training matrix.
        y: Labels in {+1, -1}.
        rounds: Number of boosting rounds T.
        bins: Bins per stump B.
        epsilon: Smoothing term; defaults to 1 / (2 * samples).
        seed: Recorded in the model; training itself is deterministic.
        component_names: Optional feature names stored with the stumps.

    Returns:
        StumpEnsembleModel: The trained model with Z_t and training error
            recorded for every round.

    Raises:
        TrainingError: On single-class input, rounds < 1 or non-finite values.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    _validate_training(X, y, rounds, bins)

    samples, features = X.shape
    if epsilon is None:
        epsilon = 1.0 / (2.0 * samples)

    # Bins depend only on the training values, so fix them once
    edges = [quantile_edges(X[:, j], bins) for j in range(features)]
    bin_index = np.empty((samples, features), dtype=np.int64)
    for j in range(features):
        bin_index[:, j] = np.searchsorted(edges[j], X[:, j], side="right")
    width = max(len(e) for e in edges) + 1

    positive = y == 1
    weights = np.full(samples, 1.0 / samples)
    score = np.zeros(samples)

    stumps: List[Stump] = []
    normalizers: List[float] = []
    training_errors: List[float] = []

    for _ in range(rounds):
        best_z = np.inf
        best_feature = -1
        best_outputs = None

        for start in range(0, features, FEATURE_BLOCK):
            stop = min(start + FEATURE_BLOCK, features)
            block = bin_index[:, start:stop] + np.arange(stop - start) * width
            size = (stop - start) * width
            w_pos = np.bincount(
                block.ravel(),
                weights=np.repeat(np.where(positive, weights, 0.0), stop - start),
                minlength=size,
            ).reshape(stop - start, width)
            w_neg = np.bincount(
                block.ravel(),
                weights=np.repeat(np.where(positive, 0.0, weights), stop - start),
                minlength=size,
            ).reshape(stop - start, width)

            outputs = 0.5 * np.log((w_pos + epsilon) / (w_neg + epsilon))
            z = np.sum(w_pos * np.exp(-outputs) + w_neg * np.exp(outputs), axis=1)

            # argmin keeps the lowest index among equal Z
            local = int(np.argmin(z))
            if z[local] < best_z:
                best_z = float(z[local])
                best_feature = start + local
                best_outputs = outputs[local]

        n_bins = len(edges[best_feature]) + 1
        stump = Stump(
            feature_index=best_feature,
            edges=edges[best_feature],
            outputs=np.array(best_outputs[:n_bins], dtype=np.float64),
            name=component_names[best_feature] if component_names is not None else "",
        )

        h = stump.outputs[bin_index[:, best_feature]]
        weights = weights * np.exp(-y * h)
        normalizer = float(weights.sum())
        weights = weights / normalizer

        score += h
        predicted = np.where(score > 0, 1, -1)
        stumps.append(stump)
        normalizers.append(normalizer)
        training_errors.append(float(np.mean(predicted != y)))

    return StumpEnsembleModel(
        stumps=stumps,
        n_features=features,
        bins=bins,
        epsilon=float(epsilon),
        seed=seed,
        normalizers=normalizers,
        training_errors=training_errors,
    )


def predict_scores(model: StumpEnsembleModel, X: np.ndarray) -> np.ndarray:
    """Ensemble score of every row of X.

    Raises:
        TrainingError: If X does not have the model's dimensionality.
    """
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if X.shape[1] != model.n_features:
        raise TrainingError(
            f"dimension mismatch: model expects {model.n_features} features, got {X.shape[1]}"
        )

    score = np.zeros(X.shape[0])
    for stump in model.stumps:
        score += stump.predict(X[:, stump.feature_index])
    return score


def predict_score(model: StumpEnsembleModel, x: np.ndarray) -> float:
    """Ensemble score of a single feature vector."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise TrainingError("predict_score expects a single feature vector")
    return float(predict_scores(model, x[np.newaxis])[0])


def predict_labels(model: StumpEnsembleModel, X: np.ndarray) -> np.ndarray:
    """sign(score) with a zero score predicted negative."""
    return np.where(predict_scores(model, X) > 0, 1, -1)


def model_to_json(model: StumpEnsembleModel) -> Dict[str, Any]:
    return {
        "magic": MODEL_MAGIC,
        "version": VERSION,
        "T": model.rounds,
        "B": model.bins,
        "epsilon": model.epsilon,
        "seed": model.seed,
        "n_features": model.n_features,
        "normalizers": list(model.normalizers),
        "training_errors": list(model.training_errors),
        "config": model.config,
        "stumps": [
            {
                "feature": stump.feature_index,
                "name": stump.name,
                "edges": [float(v) for v in stump.edges],
                "outputs": [float(v) for v in stump.outputs],
            }
            for stump in model.stumps
        ],
    }


def save_model(model: StumpEnsembleModel, path: str) -> str:
    """Write the model as canonical JSON."""
    return write_json_file(path, model_to_json(model))


def load_model(path: str) -> StumpEnsembleModel:
    """Read a model written by save_model.

    Raises:
        TrainingError: If the file is not a model of this format.
    """
    payload = read_json_file(path)
    if not isinstance(payload, dict) or payload.get("magic") != MODEL_MAGIC:
        raise TrainingError(f"{path} is not a {MODEL_MAGIC} model")

    try:
        stumps = [
            Stump(
                feature_index=int(item["feature"]),
                edges=np.array(item["edges"], dtype=np.float64),
                outputs=np.array(item["outputs"], dtype=np.float64),
                name=str(item.get("name", "")),
            )
            for item in payload["stumps"]
        ]
        model = StumpEnsembleModel(
            stumps=stumps,
            n_features=int(payload["n_features"]),
            bins=int(payload["B"]),
            epsilon=float(payload["epsilon"]),
            seed=int(payload.get("seed", 0)),
            normalizers=[float(v) for v in payload.get("normalizers", [])],
            training_errors=[float(v) for v in payload.get("training_errors", [])],
            config=payload.get("config", {}),
        )
    except (KeyError, TypeError, ValueError) as error:
        raise TrainingError(f"malformed model {path}: {error}") from None

    for stump in stumps:
        if len(stump.outputs) != len(stump.edges) + 1:
            raise TrainingError(f"malformed model {path}: stump bins and outputs disagree")
    return model
