"""CART classification trees grown on Gini impurity.

Training is bit-deterministic: split candidates are midpoints between
consecutive distinct values, and ties go to the lowest attribute index, then
the lowest threshold. Predicted classes break count ties toward the lowest
index in the class order.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_is_fitted

from .dataset import FeatureMatrix
from .exceptions import (
    AllZero,
    InsufficientSamples,
    MissingAttribute,
    ShapeMismatch,
    TooFewSamples,
    UnknownLabel,
)
from .metrics import evaluate

#: Two candidate impurities closer than this are treated as a tie.
TIE_TOL = 1e-12


def gini(class_counts) -> float:
    """Gini impurity ``1 - sum(p_i ** 2)`` of a class-count vector."""
    counts = np.asarray(class_counts, dtype=float)
    if (counts < 0).any():
        raise ValueError("class counts must be nonnegative")
    total = counts.sum()
    if total <= 0:
        raise AllZero("gini impurity needs at least one positive count")
    p = counts / total
    return float(1.0 - np.dot(p, p))


def default_depth(n: int) -> int:
    """Depth limit ``max(1, floor(log2(n) / 2))`` for ``n`` training samples."""
    if n < 2:
        raise TooFewSamples(f"need at least 2 samples, got {n}")
    # integer bit length avoids float rounding at exact powers of two
    return max(1, (int(n).bit_length() - 1) // 2)


@dataclass(frozen=True)
class Split:
    feature: int
    threshold: float
    impurity: float


def _encode(y, n_classes=None):
    y = np.asarray(y)
    if np.issubdtype(y.dtype, np.integer):
        codes = y.astype(np.int64)
        k = int(codes.max()) + 1 if n_classes is None else n_classes
        return codes, k
    classes, codes = np.unique(y, return_inverse=True)
    return codes.astype(np.int64), len(classes)


def best_split(X, y, rows=None, *, n_classes=None, min_leaf: int = 1) -> Split | None:
    """Gini-optimal binary split of ``rows`` of ``X``.

    Every attribute and every midpoint between consecutive distinct sorted
    values is a candidate; the winner minimizes the sample-weighted mean of
    the two child impurities. Returns None when no attribute has two distinct
    values (or no candidate leaves ``min_leaf`` samples on both sides).
    """
    X = np.asarray(X, dtype=float)
    codes, k = _encode(y, n_classes)
    if rows is not None:
        rows = np.asarray(rows, dtype=np.int64)
        X = X[rows]
        codes = codes[rows]
    n, d = X.shape
    if n < 2 or d < 1:
        return None

    onehot = np.zeros((n, k))
    onehot[np.arange(n), codes] = 1.0
    candidates = []
    for j in range(d):
        order = np.argsort(X[:, j], kind="mergesort")
        vals = X[order, j]
        cum = np.cumsum(onehot[order], axis=0)
        # split after position i keeps vals[:i+1] on the left
        pos = np.flatnonzero(vals[:-1] < vals[1:])
        n_left = pos + 1
        ok = (n_left >= min_leaf) & (n - n_left >= min_leaf)
        pos, n_left = pos[ok], n_left[ok]
        if pos.size == 0:
            continue
        left = cum[pos]
        right = cum[-1] - left
        n_right = n - n_left
        g_left = 1.0 - (left**2).sum(axis=1) / n_left.astype(float) ** 2
        g_right = 1.0 - (right**2).sum(axis=1) / n_right.astype(float) ** 2
        weighted = (n_left * g_left + n_right * g_right) / n
        thresholds = (vals[pos] + vals[pos + 1]) / 2.0
        # adjacent floats: the midpoint may round up onto the right value
        clash = thresholds >= vals[pos + 1]
        thresholds[clash] = vals[pos][clash]
        candidates.append((j, thresholds, weighted))

    if not candidates:
        return None
    best = min(float(w.min()) for _, _, w in candidates)
    for j, thresholds, weighted in candidates:
        hits = np.flatnonzero(weighted <= best + TIE_TOL)
        if hits.size:
            i = hits[0]
            return Split(j, float(thresholds[i]), float(weighted[i]))
    return None  # pragma: no cover


@dataclass
class TreeNode:
    """One node of a fitted tree; ``attribute`` is None on leaves."""

    node_id: int
    depth: int
    class_counts: tuple
    gini: float
    predicted: int
    feature: int | None = None
    attribute: str | None = None
    threshold: float | None = None
    left: "TreeNode | None" = None
    right: "TreeNode | None" = None

    @property
    def is_leaf(self) -> bool:
        return self.left is None

    @property
    def n_samples(self) -> int:
        return int(sum(self.class_counts))

    def walk(self):
        """Pre-order traversal: node, left subtree, right subtree."""
        yield self
        if not self.is_leaf:
            yield from self.left.walk()
            yield from self.right.walk()


@dataclass(frozen=True)
class Rule:
    """Conditions from the root to one node, with that node's majority class."""

    node_id: int
    conditions: tuple
    probability: float
    label: str
    support: int
    is_leaf: bool
    low_support: bool

    @property
    def text(self) -> str:
        return format_conditions(self.conditions)


def format_threshold(value: float) -> str:
    return repr(float(value))


def format_conditions(conditions) -> str:
    if not conditions:
        return "(all samples)"
    parts = [f"{attr} {op} {format_threshold(thr)}" for attr, op, thr in conditions]
    return "If " + " and ".join(parts)


@dataclass
class RuleSet:
    rules: list = field(default_factory=list)

    def __iter__(self):
        return iter(self.rules)

    def __len__(self):
        return len(self.rules)

    def leaves(self):
        return [r for r in self.rules if r.is_leaf]

    def by_node(self, node_id: int) -> Rule:
        for rule in self.rules:
            if rule.node_id == node_id:
                return rule
        raise KeyError(node_id)

    def to_rows(self):
        """Rows for the ``*_rules.csv`` exports."""
        return [
            {
                "node_id": r.node_id,
                "rule": r.text,
                "probability": repr(r.probability),
                "class": r.label,
                "support": r.support,
                "leaf": int(r.is_leaf),
                "low_support": int(r.low_support),
            }
            for r in self.rules
        ]


def _feature_names_and_values(X, feature_names=None):
    if isinstance(X, FeatureMatrix):
        return list(X.columns), X.values
    if hasattr(X, "columns") and hasattr(X, "to_numpy"):
        return [str(c) for c in X.columns], X.to_numpy(dtype=float)
    values = np.asarray(X, dtype=float)
    if values.ndim != 2:
        raise ShapeMismatch(f"expected a 2-D feature matrix, got shape {values.shape}")
    if feature_names is None:
        feature_names = [f"x{j}" for j in range(values.shape[1])]
    return list(feature_names), values


class CARTClassifier(ClassifierMixin, BaseEstimator):
    """Depth-limited CART classification tree.

    Parameters
    ----------
    max_depth : int or "auto"
        Maximum number of splits on any root-to-leaf path; "auto" resolves
        to :func:`default_depth` of the training-set size.
    min_leaf : int
        Candidate splits leaving fewer samples in a child are not considered.
    min_support : int
        Rules at nodes with fewer samples are flagged ``low_support``.
    class_order : sequence, optional
        Canonical class order (confusion-matrix axes, tie-breaks). Defaults
        to the sorted distinct training labels.

    Attributes
    ----------
    tree_ : TreeNode
    classes_ : ndarray
    feature_names_in_ : ndarray of str
    max_depth_ : int
    """

    def __init__(self, max_depth="auto", min_leaf=5, min_support=5, class_order=None):
        self.max_depth = max_depth
        self.min_leaf = min_leaf
        self.min_support = min_support
        self.class_order = class_order

    def fit(self, X, y, feature_names=None):
        names, values = _feature_names_and_values(X, feature_names)
        y = np.asarray(y, dtype=object)
        if values.shape[0] != len(y):
            raise ShapeMismatch(f"{values.shape[0]} rows but {len(y)} labels")
        if values.shape[0] < 1:
            raise TooFewSamples("cannot fit a tree on zero rows")
        if np.isnan(values).any():
            raise ValueError("feature matrix contains missing values")
        if len(names) != values.shape[1]:
            raise ShapeMismatch(f"{len(names)} names for {values.shape[1]} columns")

        if self.class_order is None:
            classes = sorted(set(y.tolist()))
        else:
            classes = list(self.class_order)
        index = {c: i for i, c in enumerate(classes)}
        try:
            codes = np.array([index[v] for v in y], dtype=np.int64)
        except KeyError as exc:
            raise UnknownLabel(f"label {exc.args[0]!r} not in class order {classes}") from None

        if self.max_depth == "auto":
            depth = default_depth(len(y)) if len(y) >= 2 else 1
        else:
            depth = int(self.max_depth)
            if depth < 0:
                raise ValueError("max_depth must be nonnegative")

        self.classes_ = np.array(classes, dtype=object)
        self.feature_names_in_ = np.array(names, dtype=object)
        self.n_features_in_ = len(names)
        self.max_depth_ = depth
        self._next_id = 0
        self.tree_ = self._grow(values, codes, np.arange(len(codes)), 0)
        del self._next_id
        return self

    def _grow(self, X, codes, rows, depth) -> TreeNode:
        k = len(self.classes_)
        counts = np.bincount(codes[rows], minlength=k)
        impurity = gini(counts)
        node = TreeNode(
            node_id=self._next_id,
            depth=depth,
            class_counts=tuple(int(c) for c in counts),
            gini=impurity,
            predicted=int(np.argmax(counts)),
        )
        self._next_id += 1
        if depth >= self.max_depth_ or impurity == 0.0:
            return node
        split = best_split(X, codes, rows, n_classes=k, min_leaf=max(1, int(self.min_leaf)))
        if split is None:
            return node
        if split.impurity > impurity + TIE_TOL:
            raise AssertionError(
                f"split raised impurity {impurity!r} -> {split.impurity!r} at node {node.node_id}"
            )
        goes_left = X[rows, split.feature] <= split.threshold
        node.feature = split.feature
        node.attribute = str(self.feature_names_in_[split.feature])
        node.threshold = split.threshold
        node.left = self._grow(X, codes, rows[goes_left], depth + 1)
        node.right = self._grow(X, codes, rows[~goes_left], depth + 1)
        return node

    # -- prediction ---------------------------------------------------------

    def _check_X(self, X):
        check_is_fitted(self, "tree_")
        if isinstance(X, FeatureMatrix) or (hasattr(X, "columns") and hasattr(X, "to_numpy")):
            names, values = _feature_names_and_values(X)
            try:
                cols = [names.index(f) for f in self.feature_names_in_]
            except ValueError:
                missing = [f for f in self.feature_names_in_ if f not in names]
                raise MissingAttribute(missing[0]) from None
            return values[:, cols]
        values = np.asarray(X, dtype=float)
        if values.ndim != 2 or values.shape[1] != self.n_features_in_:
            raise ShapeMismatch(
                f"expected {self.n_features_in_} features, got shape {values.shape}"
            )
        return values

    def apply(self, X) -> list:
        """Leaf node reached by each row."""
        values = self._check_X(X)
        out = [None] * len(values)

        def route(node, rows):
            if node.is_leaf:
                for r in rows:
                    out[r] = node
                return
            left = values[rows, node.feature] <= node.threshold
            route(node.left, rows[left])
            route(node.right, rows[~left])

        route(self.tree_, np.arange(len(values)))
        return out

    def predict(self, X):
        # let numpy infer the dtype so sklearn scorers see int or str targets
        return np.array([self.classes_[leaf.predicted] for leaf in self.apply(X)])

    def predict_proba(self, X):
        leaves = self.apply(X)
        return np.array([np.array(leaf.class_counts) / leaf.n_samples for leaf in leaves])

    def decision_path(self, sample: Mapping) -> list:
        """Nodes visited by one sample given as ``{attribute: value}``."""
        check_is_fitted(self, "tree_")
        node = self.tree_
        path = [node]
        while not node.is_leaf:
            try:
                value = float(sample[node.attribute])
            except KeyError:
                raise MissingAttribute(node.attribute) from None
            node = node.left if value <= node.threshold else node.right
            path.append(node)
        return path

    def predict_sample(self, sample: Mapping):
        missing = [f for f in self.feature_names_in_ if f not in sample]
        if missing:
            raise MissingAttribute(missing[0])
        return self.classes_[self.decision_path(sample)[-1].predicted]

    # -- introspection --------------------------------------------------------

    def nodes(self) -> list:
        check_is_fitted(self, "tree_")
        return list(self.tree_.walk())

    def extract_rules(self) -> RuleSet:
        return extract_rules(self)

    def to_dict(self) -> dict:
        check_is_fitted(self, "tree_")

        def node_dict(node):
            out = {
                "id": node.node_id,
                "gini": node.gini,
                "counts": list(node.class_counts),
                "class": str(self.classes_[node.predicted]),
            }
            if not node.is_leaf:
                out["attribute"] = node.attribute
                out["threshold"] = node.threshold
                out["children"] = [node_dict(node.left), node_dict(node.right)]
            return out

        return {
            "class_order": [str(c) for c in self.classes_],
            "feature_columns": [str(f) for f in self.feature_names_in_],
            "max_depth": self.max_depth_,
            "min_leaf": self.min_leaf,
            "min_support": self.min_support,
            "root": node_dict(self.tree_),
        }

    @classmethod
    def from_dict(cls, doc: Mapping) -> "CARTClassifier":
        classes = list(doc["class_order"])
        features = list(doc["feature_columns"])
        est = cls(max_depth=doc["max_depth"], min_leaf=doc["min_leaf"],
                  min_support=doc["min_support"], class_order=classes)

        def build(d, depth):
            node = TreeNode(
                node_id=int(d["id"]),
                depth=depth,
                class_counts=tuple(int(c) for c in d["counts"]),
                gini=float(d["gini"]),
                predicted=classes.index(d["class"]),
            )
            if "children" in d:
                node.attribute = d["attribute"]
                node.feature = features.index(d["attribute"])
                node.threshold = float(d["threshold"])
                node.left = build(d["children"][0], depth + 1)
                node.right = build(d["children"][1], depth + 1)
            return node

        est.classes_ = np.array(classes, dtype=object)
        est.feature_names_in_ = np.array(features, dtype=object)
        est.n_features_in_ = len(features)
        est.max_depth_ = int(doc["max_depth"])
        est.tree_ = build(doc["root"], 0)
        return est


def fit_tree(X, y, *, max_depth="auto", min_leaf=5, min_support=5, class_order=None,
             feature_names=None) -> CARTClassifier:
    """Functional shorthand for ``CARTClassifier(...).fit(X, y)``."""
    est = CARTClassifier(max_depth=max_depth, min_leaf=min_leaf,
                         min_support=min_support, class_order=class_order)
    return est.fit(X, y, feature_names=feature_names)


def extract_rules(tree: CARTClassifier) -> RuleSet:
    """One rule per node, in pre-order, conditions read from the root down."""
    check_is_fitted(tree, "tree_")
    rules = []

    def visit(node, conditions):
        support = node.n_samples
        rules.append(
            Rule(
                node_id=node.node_id,
                conditions=tuple(conditions),
                probability=node.class_counts[node.predicted] / support,
                label=str(tree.classes_[node.predicted]),
                support=support,
                is_leaf=node.is_leaf,
                low_support=support < tree.min_support,
            )
        )
        if not node.is_leaf:
            visit(node.left, conditions + [(node.attribute, "<=", node.threshold)])
            visit(node.right, conditions + [(node.attribute, ">", node.threshold)])

    visit(tree.tree_, [])
    return RuleSet(rules)


@dataclass(frozen=True)
class DepthScore:
    depth: int
    mean: float
    std: float
    ci_low: float
    ci_high: float
    n_scores: int


def _stratified_folds(codes, folds, rng):
    """Fold index per sample; each class is dealt round-robin after a shuffle."""
    fold_of = np.empty(len(codes), dtype=np.int64)
    offset = 0
    for c in np.unique(codes):
        members = np.flatnonzero(codes == c)
        members = members[rng.permutation(len(members))]
        fold_of[members] = (np.arange(len(members)) + offset) % folds
        offset += len(members)
    return fold_of


def cross_validate(X, y, depths: Sequence[int], *, folds=5, repeats=30, seed=0,
                   min_leaf=5, class_order=None, z=1.959963984540054) -> list:
    """Repeated stratified k-fold accuracy for each candidate depth.

    Every (repeat, fold) pair yields one held-out accuracy; the interval is
    the normal approximation ``mean +/- z * std / sqrt(folds * repeats)``.
    The same shuffles are reused for every depth.
    """
    names, values = _feature_names_and_values(X)
    y = np.asarray(y, dtype=object)
    if len(y) != len(values):
        raise ShapeMismatch(f"{len(values)} rows but {len(y)} labels")
    if folds < 2:
        raise InsufficientSamples("cross-validation needs at least 2 folds")
    if len(y) < folds:
        raise InsufficientSamples(f"{len(y)} samples cannot fill {folds} folds")
    classes = sorted(set(y.tolist())) if class_order is None else list(class_order)
    codes = np.array([classes.index(v) for v in y])
    sizes = np.bincount(codes, minlength=len(classes))
    if (sizes[sizes > 0] < 2).any():
        raise InsufficientSamples("every class needs at least 2 samples to appear in training")

    rng = np.random.default_rng(seed)
    assignments = [_stratified_folds(codes, folds, rng) for _ in range(repeats)]
    results = []
    for depth in depths:
        scores = []
        for fold_of in assignments:
            for f in range(folds):
                test = fold_of == f
                est = CARTClassifier(max_depth=depth, min_leaf=min_leaf, class_order=classes)
                est.fit(values[~test], y[~test], feature_names=names)
                pred = est.predict(values[test])
                scores.append(evaluate(y[test], pred, classes).accuracy)
        scores = np.array(scores)
        mean = float(scores.mean())
        std = float(scores.std(ddof=1)) if len(scores) > 1 else 0.0
        half = z * std / math.sqrt(len(scores))
        results.append(DepthScore(int(depth), mean, std, mean - half, mean + half, len(scores)))
    return results
