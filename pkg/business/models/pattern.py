"""
Reasoning patterns and the tree models that learn to pick one per record.
DecisionTreeModel is a greedy Gini (CART-style) inducer; RandomForestModel
bags seeded trees over it. PatternClassifier wraps either with the feature
names it was trained on and a versioned JSON form.
"""

from typing import Dict, List, Optional, Sequence

import numpy as np
from pydantic import BaseModel, Field

from app_config import CLASSIFIER_FORMAT_VERSION, DEFAULT_N_TREES, TREE_MAX_DEPTH
from business.exceptions.errors import (
    DimensionMismatchError,
    EmptyTrainingSetError,
    LengthMismatchError,
)
from business.models.weights import PerceptionIndicator, VariableSubset


class ReasoningPattern(BaseModel):
    """One (threat indicator, risk indicator) combination with its subsets."""
    id: int = Field(ge=0, le=3)
    threat: PerceptionIndicator
    risk: PerceptionIndicator
    threat_subset: VariableSubset
    risk_subset: VariableSubset

    @property
    def variables(self) -> List[str]:
        """Union of both subsets, threat variables first."""
        seen = list(self.threat_subset.selected)
        seen += [v for v in self.risk_subset.selected if v not in seen]
        return seen


class PatternTrialReport(BaseModel):
    """Per-record success rate of every pattern and the winning label."""
    record_id: str
    rates: List[float]
    correct: List[int]
    trials: int
    label: int
    low_confidence: bool = False


def _majority(labels: np.ndarray) -> int:
    values, counts = np.unique(labels, return_counts=True)
    # np.unique sorts ascending, argmax keeps the first maximum
    return int(values[int(np.argmax(counts))])


class DecisionTreeModel:
    """Greedy Gini tree with midpoint thresholds; leaves hold the majority label."""

    kind = "decision_tree"

    def __init__(self, max_depth: int = TREE_MAX_DEPTH, max_features: Optional[int] = None,
                 rng: Optional[np.random.Generator] = None):
        self.max_depth = max_depth
        self.max_features = max_features
        self.rng = rng
        self.root: Optional[Dict] = None
        self.n_features = 0

    def fit(self, X: np.ndarray, y: Sequence[int]) -> "DecisionTreeModel":
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=int)
        if len(y) == 0:
            raise EmptyTrainingSetError("Cannot fit a tree without samples")
        if X.shape[0] != len(y):
            raise LengthMismatchError(f"{X.shape[0]} feature rows vs {len(y)} labels")
        self.n_features = X.shape[1]
        self._classes = np.unique(y)
        self.root = self._grow(X, np.searchsorted(self._classes, y), depth=0)
        return self

    def _grow(self, X: np.ndarray, y: np.ndarray, depth: int) -> Dict:
        label = int(self._classes[_majority(y)])
        if depth >= self.max_depth or len(np.unique(y)) == 1:
            return {"label": label}

        split = self._best_split(X, y)
        if split is None:
            return {"label": label}

        feature, threshold = split
        mask = X[:, feature] <= threshold
        return {
            "feature": feature,
            "threshold": threshold,
            "left": self._grow(X[mask], y[mask], depth + 1),
            "right": self._grow(X[~mask], y[~mask], depth + 1),
        }

    def _candidate_features(self) -> List[int]:
        if self.max_features is None or self.max_features >= self.n_features:
            return list(range(self.n_features))
        picked = self.rng.choice(self.n_features, size=self.max_features, replace=False)
        return sorted(int(f) for f in picked)

    def _best_split(self, X: np.ndarray, y: np.ndarray):
        """Lowest weighted Gini; ties keep the earlier feature, then the lower threshold."""
        n = len(y)
        n_classes = len(self._classes)
        best_score, best = np.inf, None
        for f in self._candidate_features():
            order = np.argsort(X[:, f], kind="stable")
            xs, ys = X[order, f], y[order]
            onehot = np.zeros((n, n_classes))
            onehot[np.arange(n), ys] = 1.0
            left = np.cumsum(onehot, axis=0)[:-1]
            right = onehot.sum(axis=0) - left
            n_left = np.arange(1, n, dtype=float)
            n_right = n - n_left
            valid = xs[:-1] < xs[1:]
            if not valid.any():
                continue
            gini_left = 1.0 - np.sum((left / n_left[:, None]) ** 2, axis=1)
            gini_right = 1.0 - np.sum((right / n_right[:, None]) ** 2, axis=1)
            score = (n_left * gini_left + n_right * gini_right) / n
            score[~valid] = np.inf
            i = int(np.argmin(score))
            if score[i] < best_score - 1e-12:
                best_score = score[i]
                best = (f, float((xs[i] + xs[i + 1]) / 2.0))
        return best

    def predict_one(self, x: Sequence[float]) -> int:
        node = self.root
        while "label" not in node:
            node = node["left"] if x[node["feature"]] <= node["threshold"] else node["right"]
        return node["label"]

    def depth(self) -> int:
        def walk(node):
            if "label" in node:
                return 0
            return 1 + max(walk(node["left"]), walk(node["right"]))
        return walk(self.root)

    def to_dict(self) -> Dict:
        return {"kind": self.kind, "max_depth": self.max_depth, "root": self.root}

    @classmethod
    def from_dict(cls, data: Dict) -> "DecisionTreeModel":
        tree = cls(max_depth=data["max_depth"])
        tree.root = data["root"]
        return tree


class RandomForestModel:
    """Bagged trees with per-split feature subsampling; ties in the vote go to the lowest label."""

    kind = "random_forest"

    def __init__(self, n_trees: int = DEFAULT_N_TREES, max_depth: int = TREE_MAX_DEPTH, seed: int = 0):
        self.n_trees = n_trees
        self.max_depth = max_depth
        self.seed = seed
        self.trees: List[DecisionTreeModel] = []

    def fit(self, X: np.ndarray, y: Sequence[int]) -> "RandomForestModel":
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=int)
        if len(y) == 0:
            raise EmptyTrainingSetError("Cannot fit a forest without samples")
        if X.shape[0] != len(y):
            raise LengthMismatchError(f"{X.shape[0]} feature rows vs {len(y)} labels")

        rng = np.random.default_rng(self.seed)
        n, p = X.shape
        max_features = max(1, int(np.sqrt(p))) if p else None
        self.trees = []
        for _ in range(self.n_trees):
            rows = rng.integers(0, n, size=n)
            tree = DecisionTreeModel(self.max_depth, max_features=max_features, rng=rng)
            self.trees.append(tree.fit(X[rows], y[rows]))
        return self

    def predict_one(self, x: Sequence[float]) -> int:
        return _majority(np.array([t.predict_one(x) for t in self.trees]))

    def depth(self) -> int:
        return max(t.depth() for t in self.trees)

    def to_dict(self) -> Dict:
        return {
            "kind": self.kind,
            "max_depth": self.max_depth,
            "n_trees": self.n_trees,
            "seed": self.seed,
            "trees": [t.root for t in self.trees],
        }

    @classmethod
    def from_dict(cls, data: Dict) -> "RandomForestModel":
        forest = cls(data["n_trees"], data["max_depth"], data["seed"])
        for root in data["trees"]:
            tree = DecisionTreeModel(data["max_depth"])
            tree.root = root
            forest.trees.append(tree)
        return forest


_MODEL_KINDS = {m.kind: m for m in (DecisionTreeModel, RandomForestModel)}


class PatternClassifier:
    """A fitted tree model bound to the ordered feature names it expects."""

    def __init__(self, model, feature_names: List[str]):
        self.model = model
        self.feature_names = list(feature_names)

    @property
    def kind(self) -> str:
        return self.model.kind

    def predict(self, values: Sequence[float]) -> int:
        if len(values) != len(self.feature_names):
            raise DimensionMismatchError(
                f"Expected {len(self.feature_names)} features, got {len(values)}"
            )
        return self.model.predict_one(values)

    def to_dict(self) -> Dict:
        return {
            "format_version": CLASSIFIER_FORMAT_VERSION,
            "feature_names": self.feature_names,
            **self.model.to_dict(),
        }

    @classmethod
    def from_dict(cls, data: Dict) -> "PatternClassifier":
        if data.get("format_version") != CLASSIFIER_FORMAT_VERSION:
            raise ValueError(f"Unsupported classifier format {data.get('format_version')}")
        model = _MODEL_KINDS[data["kind"]].from_dict(data)
        return cls(model, data["feature_names"])
