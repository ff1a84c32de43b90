"""Comparison methods: majority-class dummy predictor and the
loudest-frames pipeline with a small bagged decision forest.

The forest is implemented here (CART splits on gini, feature subsampling,
bootstrap bagging) so the whole toolkit stays dependency-light and
seed-deterministic; it sits behind FrameClassifier so alternatives can
be swapped in.
"""
import json
from collections import Counter
from dataclasses import dataclass

import numpy as np

from .errors import EmptyTraining


def select_loudest_frames(seq, n=2):
    """Indices of the n highest-energy real frames, descending energy,
    ties to the lower index.  Energy is feature column 1."""
    energy = seq.matrix[:seq.true_len, 1]
    order = np.argsort(-energy, kind="stable")
    return [int(i) for i in order[:n]]


class FrameClassifier:
    """Maps a 34-dim frame feature vector to a class distribution."""

    def predict_proba(self, x):
        raise NotImplementedError

    def predict(self, x):
        return int(np.argmax(self.predict_proba(x)))


def _gini(counts):
    total = counts.sum()
    if total == 0:
        return 0.0
    p = counts / total
    return 1.0 - float((p * p).sum())


def _build_tree(X, y, num_classes, max_depth, n_sub_features, rng, depth=0):
    counts = np.bincount(y, minlength=num_classes).astype(np.float64)
    node = {"counts": counts.tolist()}
    if depth >= max_depth or len(np.unique(y)) <= 1 or X.shape[0] < 2:
        return node
    features = rng.choice(X.shape[1], size=min(n_sub_features, X.shape[1]),
                          replace=False)
    best = None
    parent_impurity = _gini(counts) * X.shape[0]
    for f in features:
        values = np.unique(X[:, f])
        if values.shape[0] < 2:
            continue
        thresholds = (values[:-1] + values[1:]) / 2.0
        for thr in thresholds:
            left = X[:, f] <= thr
            nl = int(left.sum())
            if nl == 0 or nl == X.shape[0]:
                continue
            cl = np.bincount(y[left], minlength=num_classes).astype(np.float64)
            cr = counts - cl
            score = _gini(cl) * nl + _gini(cr) * (X.shape[0] - nl)
            if best is None or score < best[0]:
                best = (score, int(f), float(thr), left)
    if best is None or best[0] >= parent_impurity - 1e-12:
        return node
    _, f, thr, left = best
    node["feature"] = f
    node["threshold"] = thr
    node["left"] = _build_tree(X[left], y[left], num_classes, max_depth,
                               n_sub_features, rng, depth + 1)
    node["right"] = _build_tree(X[~left], y[~left], num_classes, max_depth,
                                n_sub_features, rng, depth + 1)
    return node


def _tree_proba(node, x):
    while "feature" in node:
        node = node["left"] if x[node["feature"]] <= node["threshold"] \
            else node["right"]
    counts = np.asarray(node["counts"])
    total = counts.sum()
    if total == 0:
        return np.full(counts.shape[0], 1.0 / counts.shape[0])
    return counts / total


@dataclass
class ForestConfig:
    n_trees: int = 50
    max_depth: int = 12
    n_sub_features: int = 6  # ~ sqrt(34)
    seed: int = 0


class DecisionForest(FrameClassifier):
    """Bagged CART trees with per-split feature subsampling."""

    def __init__(self, config, num_classes=4):
        self.config = config
        self.num_classes = num_classes
        self.trees = []

    def fit(self, X, y):
        X = np.asarray(X, dtype=np.float64)
        y = np.asarray(y, dtype=np.int64)
        if X.shape[0] == 0:
            raise EmptyTraining("no training frames")
        rng = np.random.default_rng(self.config.seed)
        self.trees = []
        for _ in range(self.config.n_trees):
            idx = rng.integers(0, X.shape[0], size=X.shape[0])
            self.trees.append(_build_tree(
                X[idx], y[idx], self.num_classes, self.config.max_depth,
                self.config.n_sub_features, rng))
        return self

    def predict_proba(self, x):
        x = np.asarray(x, dtype=np.float64)
        probs = np.zeros(self.num_classes)
        for tree in self.trees:
            probs += _tree_proba(tree, x)
        return probs / len(self.trees)

    def to_json(self):
        return {
            "kind": "decision_forest",
            "num_classes": self.num_classes,
            "config": {
                "n_trees": self.config.n_trees,
                "max_depth": self.config.max_depth,
                "n_sub_features": self.config.n_sub_features,
                "seed": self.config.seed,
            },
            "trees": self.trees,
        }

    @classmethod
    def from_json(cls, payload):
        clf = cls(ForestConfig(**payload["config"]), payload["num_classes"])
        clf.trees = payload["trees"]
        return clf


def train_framewise(sequences, labels, config=None, n_loudest=2,
                    num_classes=4):
    """Fit the frame classifier on the n loudest frames of each training
    utterance, each labeled with the utterance's emotion."""
    if not sequences:
        raise EmptyTraining("no training utterances")
    X, y = [], []
    for seq, label in zip(sequences, labels):
        for idx in select_loudest_frames(seq, n_loudest):
            X.append(seq.matrix[idx])
            y.append(label)
    clf = DecisionForest(config or ForestConfig(), num_classes)
    return clf.fit(np.asarray(X), np.asarray(y))


def predict_framewise(classifier, seq):
    """Classify every real frame, then majority vote (ties to lowest
    class index)."""
    votes = Counter(
        classifier.predict(seq.matrix[t]) for t in range(seq.true_len))
    top = max(votes.values())
    return min(c for c, v in votes.items() if v == top)


def frame_probabilities(classifier, seq):
    """Per-frame class distributions over the real frames; used for the
    probability-trace CSV exports."""
    return np.stack([classifier.predict_proba(seq.matrix[t])
                     for t in range(seq.true_len)])


@dataclass
class DummyModel:
    majority_label: int


def dummy_fit(labels):
    """Modal training class, ties to the lowest class index."""
    if len(labels) == 0:
        raise EmptyTraining("no training labels")
    counts = Counter(int(c) for c in labels)
    top = max(counts.values())
    return DummyModel(min(c for c, v in counts.items() if v == top))


def dummy_predict(model, seq=None):
    return model.majority_label


def save_forest(path, clf):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(clf.to_json(), fh)


def load_forest(path):
    with open(path, "r", encoding="utf-8") as fh:
        return DecisionForest.from_json(json.load(fh))
