"""Random Forest module for the MUCHLAC toolkit.

Bagged CART trees with recorded out-of-bag (OOB) sets, OOB permutation
importance of every feature component, and top-k component selection.
"""

import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
from joblib import Parallel, delayed
from sklearn.tree import DecisionTreeClassifier
from tqdm import tqdm

from adaboost_module import TrainingError
from feature_module import FeatureMatrix
from mask_module import MUCHLAC

DEFAULT_TREES = 100


@dataclass
class ForestParams:
    """Forest settings; features_per_split None means ceil(sqrt(d))."""

    n_trees: int = DEFAULT_TREES
    max_depth: Optional[int] = None
    features_per_split: Optional[int] = None
    seed: int = 7

    def as_dict(self) -> Dict[str, Any]:
        return {
            "n_trees": self.n_trees,
            "max_depth": self.max_depth,
            "features_per_split": self.features_per_split,
            "seed": self.seed,
        }


@dataclass
class Forest:
    """Trained trees with their bootstrap draws and OOB index sets."""

    trees: List[DecisionTreeClassifier]
    bootstraps: List[np.ndarray]
    oob_sets: List[np.ndarray]
    params: ForestParams
    n_features: int

    def oob_accuracy(self, X: np.ndarray, y: np.ndarray) -> List[float]:
        """OOB accuracy of every tree."""
        return [
            float(np.mean(tree.predict(X[oob]) == y[oob]))
            for tree, oob in zip(self.trees, self.oob_sets)
        ]


@dataclass
class ImportanceReport:
    """Per-component OOB permutation importance and the resulting ranking."""

    importance: np.ndarray
    ranking: List[int]
    component_names: List[str] = field(default_factory=list)
    config: Dict[str, Any] = field(default_factory=dict)

    def as_dict(self, top: int = 100) -> Dict[str, Any]:
        return {
            "config": self.config,
            "component_names": list(self.component_names),
            "importance": [float(v) for v in self.importance],
            "ranking": [int(i) for i in self.ranking],
            "cross_channel_share_top": top,
            "cross_channel_share": cross_channel_share(self, self.component_names, top),
        }


def _validate(X: np.ndarray, y: np.ndarray) -> None:
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise TrainingError("X must be (samples, features) with one label per sample")
    if not np.all(np.isin(y, (-1, 1))):
        raise TrainingError("labels must be +1 or -1")
    if np.all(y == 1) or np.all(y == -1):
        raise TrainingError("single-class input: both labels must be present")


def _grow_tree(X: np.ndarray, y: np.ndarray, tree_id: int, params: ForestParams, max_features: int):
    samples = X.shape[0]
    rng = np.random.default_rng([params.seed, tree_id])

    # Redraw until some sample is left out of the bag
    while True:
        bootstrap = np.sort(rng.integers(0, samples, size=samples))
        in_bag = np.zeros(samples, dtype=bool)
        in_bag[bootstrap] = True
        if not np.all(in_bag):
            break

    tree = DecisionTreeClassifier(
        criterion="gini",
        max_depth=params.max_depth,
        max_features=max_features,
        random_state=int(rng.integers(0, 2**31 - 1)),
    )
    tree.fit(X[bootstrap], y[bootstrap])
    return tree, bootstrap, np.flatnonzero(~in_bag)


def train_forest(
    X: np.ndarray,
    y: np.ndarray,
    params: Optional[ForestParams] = None,
    threads: int = 1,
    progress: bool = False,
) -> Forest:
    """Train CART trees on bootstrap resamples and record their OOB sets.

    Args:
        X: (samples, features) matrix.
        y: Labels in {+1, -1}.
        params: Forest settings.
        threads: Trees trained in parallel; results do not depend on it.
        progress: Show a progress bar.

    Raises:
        TrainingError: On single-class input or n_trees < 1.
    """
    params = params or ForestParams()
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    _validate(X, y)
    if params.n_trees < 1:
        raise TrainingError("n_trees must be >= 1")

    features = X.shape[1]
    max_features = params.features_per_split or math.ceil(math.sqrt(features))
    max_features = max(1, min(max_features, features))

    tree_ids = range(params.n_trees)
    if progress:
        tree_ids = tqdm(tree_ids, desc="Growing trees", unit="tree")

    grown = Parallel(n_jobs=threads, prefer="threads")(
        delayed(_grow_tree)(X, y, tree_id, params, max_features) for tree_id in tree_ids
    )

    return Forest(
        trees=[item[0] for item in grown],
        bootstraps=[item[1] for item in grown],
        oob_sets=[item[2] for item in grown],
        params=params,
        n_features=features,
    )


def _tree_drops(tree, oob: np.ndarray, X: np.ndarray, y: np.ndarray, tree_id: int, seed: int) -> Dict[int, float]:
    """Accuracy drop per split feature of one tree on its OOB samples."""
    X_oob = X[oob]
    y_oob = y[oob]
    baseline = np.mean(tree.predict(X_oob) == y_oob)

    drops = {}
    # Features the tree never splits on cannot change its predictions
    used = sorted({int(f) for f in tree.tree_.feature if f >= 0})
    for component in used:
        rng = np.random.default_rng([seed, tree_id, component])
        permuted = X_oob.copy()
        permuted[:, component] = permuted[rng.permutation(len(oob)), component]
        drops[component] = float(baseline - np.mean(tree.predict(permuted) == y_oob))
    return drops


def oob_permutation_importance(
    forest: Forest,
    X: np.ndarray,
    y: np.ndarray,
    seed: int = 7,
    component_names: Optional[Sequence[str]] = None,
    threads: int = 1,
) -> ImportanceReport:
    """Mean OOB accuracy drop when a component is permuted.

    For every tree and component, the component's values are permuted
    among that tree's OOB samples with a generator seeded by
    (seed, tree, component); importance is the mean drop over trees.

    Raises:
        TrainingError: If X does not match the forest or a tree has no OOB samples.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if X.shape[1] != forest.n_features:
        raise TrainingError(f"dimension mismatch: forest has {forest.n_features} features")
    if any(len(oob) == 0 for oob in forest.oob_sets):
        raise TrainingError("a tree has an empty OOB set")

    per_tree = Parallel(n_jobs=threads, prefer="threads")(
        delayed(_tree_drops)(tree, oob, X, y, tree_id, seed)
        for tree_id, (tree, oob) in enumerate(zip(forest.trees, forest.oob_sets))
    )

    totals = np.zeros(forest.n_features)
    for drops in per_tree:
        for component, drop in sorted(drops.items()):
            totals[component] += drop
    importance = totals / len(forest.trees)

    names = list(component_names) if component_names is not None else []
    return ImportanceReport(
        importance=importance,
        ranking=rank_components(importance),
        component_names=names,
    )


def rank_components(importance: np.ndarray) -> List[int]:
    """Indices by descending importance, lower index first on ties."""
    order = np.lexsort((np.arange(len(importance)), -np.asarray(importance)))
    return [int(i) for i in order]


def select_top_k(matrix: FeatureMatrix, report: ImportanceReport, k: int) -> FeatureMatrix:
    """Restrict a matrix to its k most important components, in ranking order.

    Raises:
        TrainingError: If k is outside 1..cols or the report does not match.
    """
    if len(report.ranking) != matrix.cols:
        raise TrainingError(
            f"importance report covers {len(report.ranking)} components, matrix has {matrix.cols}"
        )
    if k < 1 or k > matrix.cols:
        raise TrainingError(f"k={k} out of range 1..{matrix.cols}")
    return matrix.take_columns(report.ranking[:k])


def cross_channel_share(report: ImportanceReport, names: Sequence[str], top: int = 100) -> float:
    """Fraction of the top ranked components that are cross-channel."""
    if not names:
        return 0.0
    head = report.ranking[: min(top, len(report.ranking))]
    if not head:
        return 0.0
    cross = sum(1 for index in head if names[index].startswith(MUCHLAC + "/"))
    return cross / len(head)


def report_from_json(payload: Dict[str, Any]) -> ImportanceReport:
    """Rebuild an ImportanceReport from the `importance` command's JSON."""
    try:
        importance = np.array(payload["importance"], dtype=np.float64)
        ranking = [int(i) for i in payload["ranking"]]
    except (KeyError, TypeError, ValueError) as error:
        raise TrainingError(f"malformed importance report: {error}") from None
    if sorted(ranking) != list(range(len(importance))):
        raise TrainingError("malformed importance report: ranking is not a permutation")
    return ImportanceReport(
        importance=importance,
        ranking=ranking,
        component_names=list(payload.get("component_names", [])),
        config=payload.get("config", {}),
    )
