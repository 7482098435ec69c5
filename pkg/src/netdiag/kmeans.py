"""k-means clustering (Lloyd iterations, k-means++ seeding) and helpers.

Clustering happens in z-score standardized space so that dBm-scale and
byte-scale attributes weigh comparably; centroids are also exposed in raw
units for inspection and orientation.
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.spatial.distance import cdist
from sklearn.base import BaseEstimator, ClusterMixin, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .dataset import FeatureMatrix
from .exceptions import (
    EmptyRange,
    NotBinary,
    ShapeMismatch,
    SingleCluster,
    TooFewRows,
    UnknownAttribute,
)

logger = logging.getLogger(__name__)


def _as_matrix(X):
    if isinstance(X, FeatureMatrix):
        return list(X.columns), X.values
    if hasattr(X, "columns") and hasattr(X, "to_numpy"):
        return [str(c) for c in X.columns], X.to_numpy(dtype=float)
    values = np.asarray(X, dtype=float)
    if values.ndim == 1:
        values = values[:, None]
    return [f"x{j}" for j in range(values.shape[1])], values


class Standardizer(TransformerMixin, BaseEstimator):
    """Per-feature z-scores using the population standard deviation.

    Constant features have their scale set to 1, so they map to all zeros
    and still invert exactly.
    """

    def fit(self, X, y=None):
        _, values = _as_matrix(X)
        if len(values) < 1:
            raise TooFewRows("cannot standardize zero rows")
        self.mean_ = values.mean(axis=0)
        std = values.std(axis=0)
        constant = std == 0
        if constant.any():
            warnings.warn(
                f"{int(constant.sum())} constant feature(s) mapped to zeros", RuntimeWarning,
                stacklevel=2,
            )
        self.scale_ = np.where(constant, 1.0, std)
        self.n_features_in_ = values.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "mean_")
        _, values = _as_matrix(X)
        return (values - self.mean_) / self.scale_

    def inverse_transform(self, Z):
        check_is_fitted(self, "mean_")
        return np.asarray(Z, dtype=float) * self.scale_ + self.mean_


def standardize(X):
    """Return ``(Z, mean, std)``; see :class:`Standardizer`."""
    scaler = Standardizer().fit(X)
    return scaler.transform(X), scaler.mean_, scaler.scale_


def _sq_dists(Z, centers):
    diff = Z[:, None, :] - centers[None, :, :]
    return np.einsum("nkd,nkd->nk", diff, diff)


def _kmeans_pp(Z, k, rng):
    n = len(Z)
    centers = [Z[rng.integers(n)]]
    closest = ((Z - centers[0]) ** 2).sum(axis=1)
    for _ in range(1, k):
        total = closest.sum()
        if total > 0:
            idx = rng.choice(n, p=closest / total)
        else:
            idx = rng.integers(n)
        centers.append(Z[idx])
        closest = np.minimum(closest, ((Z - Z[idx]) ** 2).sum(axis=1))
    return np.array(centers, dtype=float)


def _repair_empty(Z, centers, labels, d2):
    """Give each empty cluster the point farthest from its own centroid."""
    k = len(centers)
    for j in range(k):
        sizes = np.bincount(labels, minlength=k)
        if sizes[j] > 0:
            continue
        own = d2[np.arange(len(Z)), labels]
        own = np.where(sizes[labels] > 1, own, -1.0)
        p = int(np.argmax(own))
        centers[j] = Z[p]
        labels[p] = j
        d2 = _sq_dists(Z, centers)
    return centers, labels, d2


def _refine(Z, labels, k, trace):
    """Hartigan single-point transfers until no move lowers the SSE.

    Moving ``x`` from cluster ``a`` to ``b`` changes the SSE by
    ``n_b/(n_b+1)*|x-c_b|^2 - n_a/(n_a-1)*|x-c_a|^2``; only strictly
    improving moves are taken, so the SSE keeps decreasing.
    """
    sizes = np.bincount(labels, minlength=k).astype(float)
    centers = np.array([Z[labels == j].mean(axis=0) for j in range(k)])
    moved = True
    while moved:
        moved = False
        for i in range(len(Z)):
            a = labels[i]
            if sizes[a] <= 1:
                continue
            d2 = ((centers - Z[i]) ** 2).sum(axis=1)
            cost_out = sizes[a] / (sizes[a] - 1) * d2[a]
            cost_in = sizes / (sizes + 1) * d2
            cost_in[a] = np.inf
            b = int(np.argmin(cost_in))
            if cost_in[b] < cost_out * (1 - 1e-12):
                labels[i] = b
                for j in (a, b):
                    sizes[j] = (labels == j).sum()
                    centers[j] = Z[labels == j].mean(axis=0)
                trace.append(float(((Z - centers[labels]) ** 2).sum()))
                moved = True
    return centers, labels


def _lloyd(Z, k, rng, max_iter, tol):
    centers = _kmeans_pp(Z, k, rng)
    rows = np.arange(len(Z))
    trace = []
    n_iter = 0
    for n_iter in range(1, max_iter + 1):
        d2 = _sq_dists(Z, centers)
        labels = np.argmin(d2, axis=1)
        centers, labels, d2 = _repair_empty(Z, centers, labels, d2)
        trace.append(float(d2[rows, labels].sum()))
        new = np.array([Z[labels == j].mean(axis=0) for j in range(k)])
        shift = float(np.sqrt(((new - centers) ** 2).sum(axis=1)).max())
        centers = new
        if shift < tol:
            break
    d2 = _sq_dists(Z, centers)
    labels = np.argmin(d2, axis=1)
    centers, labels, d2 = _repair_empty(Z, centers, labels, d2)
    trace.append(float(d2[rows, labels].sum()))
    centers, labels = _refine(Z, labels, k, trace)
    d2 = _sq_dists(Z, centers)
    inertia = float(d2[rows, labels].sum())
    trace.append(inertia)
    return centers, labels, inertia, trace, n_iter


class KMeans(ClusterMixin, BaseEstimator):
    """Lloyd's k-means with k-means++ seeding and ``n_init`` restarts.

    Each restart runs Lloyd iterations to convergence, then a pass of
    Hartigan single-point transfers that escapes Lloyd fixed points which
    are not local optima of the SSE.

    Parameters
    ----------
    n_clusters : int
    n_init : int
        Restarts; the lowest-inertia run wins (earliest run on ties).
    max_iter : int
    tol : float
        Stop once no centroid moves farther than this (standardized units).
    random_state : int
        Seed of the generator driving every restart.
    standardize : bool
        Cluster z-scored features (default) or raw values.

    Attributes
    ----------
    cluster_centers_ : ndarray (k, d), in the clustering space
    labels_ : ndarray of int
    inertia_ : float
        Sum of squared distances to assigned centroids, clustering space.
    inertia_traces_ : list of list of float
        Per-restart inertia after every assignment step and every transfer.
    """

    def __init__(self, n_clusters=2, n_init=10, max_iter=300, tol=1e-6, random_state=0,
                 standardize=True):
        self.n_clusters = n_clusters
        self.n_init = n_init
        self.max_iter = max_iter
        self.tol = tol
        self.random_state = random_state
        self.standardize = standardize

    def _scale(self, values):
        return (values - self.mean_) / self.scale_

    def fit(self, X, y=None):
        names, values = _as_matrix(X)
        k = int(self.n_clusters)
        if k < 1 or len(values) < k:
            raise TooFewRows(f"{len(values)} rows cannot form {k} clusters")
        if self.standardize:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RuntimeWarning)
                scaler = Standardizer().fit(values)
            self.mean_, self.scale_ = scaler.mean_, scaler.scale_
        else:
            self.mean_ = np.zeros(values.shape[1])
            self.scale_ = np.ones(values.shape[1])
        Z = self._scale(values)

        rng = np.random.default_rng(self.random_state)
        best = None
        self.inertia_traces_ = []
        for _ in range(max(1, int(self.n_init))):
            run = _lloyd(Z, k, rng, int(self.max_iter), float(self.tol))
            self.inertia_traces_.append(run[3])
            if best is None or run[2] < best[2]:
                best = run
        self.cluster_centers_, self.labels_, self.inertia_, _, self.n_iter_ = best
        self.feature_names_in_ = np.array(names, dtype=object)
        self.n_features_in_ = len(names)
        self.row_ids_ = X.row_ids.copy() if isinstance(X, FeatureMatrix) else None
        return self

    def transform(self, X):
        """Standardized coordinates used for clustering."""
        check_is_fitted(self, "cluster_centers_")
        _, values = _as_matrix(X)
        if values.shape[1] != self.n_features_in_:
            raise ShapeMismatch(f"expected {self.n_features_in_} features, got {values.shape[1]}")
        return self._scale(values)

    def predict(self, X):
        return np.argmin(_sq_dists(self.transform(X), self.cluster_centers_), axis=1)

    @property
    def centers_raw_(self):
        check_is_fitted(self, "cluster_centers_")
        return self.cluster_centers_ * self.scale_ + self.mean_

    def to_dict(self) -> dict:
        return {
            "feature_columns": [str(f) for f in self.feature_names_in_],
            "centroids_raw": self.centers_raw_.tolist(),
            "mean": self.mean_.tolist(),
            "std": self.scale_.tolist(),
            "inertia": self.inertia_,
            "n_iter": self.n_iter_,
        }


def fit_kmeans(X, k, *, n_init=10, max_iter=300, tol=1e-6, seed=0, standardize=True) -> KMeans:
    return KMeans(k, n_init=n_init, max_iter=max_iter, tol=tol, random_state=seed,
                  standardize=standardize).fit(X)


def inertia(model: KMeans, X) -> float:
    """Sum of squared standardized distances from each row to its nearest centroid."""
    Z = model.transform(X)
    d2 = _sq_dists(Z, model.cluster_centers_)
    return float(d2.min(axis=1).sum())


def silhouette(X, labels) -> float:
    """Mean silhouette coefficient ``(b - a) / max(a, b)`` over all points.

    Points in singleton clusters, and points with ``a == b == 0``, score 0.
    """
    _, values = _as_matrix(X)
    labels = np.asarray(labels)
    ids, labels = np.unique(labels, return_inverse=True)
    if len(ids) < 2:
        raise SingleCluster("silhouette needs at least two clusters")
    n = len(values)
    if n < 3:
        raise SingleCluster("silhouette needs at least three points")
    dist = cdist(values, values)
    k = len(ids)
    sizes = np.bincount(labels, minlength=k)
    sums = np.stack([dist[:, labels == j].sum(axis=1) for j in range(k)], axis=1)
    own = sizes[labels]
    a = np.where(own > 1, sums[np.arange(n), labels] / np.maximum(own - 1, 1), 0.0)
    mean_other = sums / sizes[None, :]
    mean_other[np.arange(n), labels] = np.inf
    b = mean_other.min(axis=1)
    denom = np.maximum(a, b)
    s = np.zeros(n)
    np.divide(b - a, denom, out=s, where=denom > 0)
    s[own == 1] = 0.0
    return float(s.mean())


def select_k(X, k_range, **params):
    """Cluster count in ``k_range`` with the highest silhouette (smaller k on ties).

    Returns ``(best_k, {k: score})``; scores are computed in the clustering
    space of each fitted model.
    """
    ks = sorted(set(int(k) for k in k_range))
    if not ks:
        raise EmptyRange("k_range is empty")
    _, values = _as_matrix(X)
    if ks[0] < 2 or ks[-1] > len(values) - 1:
        raise EmptyRange(f"k_range must lie within [2, {len(values) - 1}], got {ks}")
    scores = {}
    for k in ks:
        model = fit_kmeans(values, k, **params)
        scores[k] = silhouette(model.transform(values), model.labels_)
    best = max(ks, key=lambda k: (scores[k], -k))
    return best, scores


class Direction(str, Enum):
    HIGHER_IS_WORSE = "higher-is-worse"
    LOWER_IS_WORSE = "lower-is-worse"


@dataclass(frozen=True)
class CauseOrientation:
    severity_attribute: str
    direction: Direction
    problem_cluster: int
    centroid_values: tuple
    ambiguous: bool = False

    def problem_flags(self, labels) -> np.ndarray:
        return np.asarray(labels) == self.problem_cluster


def orient(model: KMeans, severity_attribute: str, direction, X_raw=None) -> CauseOrientation:
    """Decide which of two clusters is the 'problem' one.

    The comparison uses raw-unit centroids along ``severity_attribute``:
    de-standardized model centroids, or per-cluster means of ``X_raw`` when
    given (rows aligned with the training rows). An exact tie flags cluster 0
    and marks the orientation ambiguous.
    """
    check_is_fitted(model, "cluster_centers_")
    direction = Direction(direction)
    if len(model.cluster_centers_) != 2:
        raise NotBinary(f"orientation needs k=2, model has k={len(model.cluster_centers_)}")
    names = [str(f) for f in model.feature_names_in_]
    if severity_attribute not in names:
        raise UnknownAttribute(f"{severity_attribute!r} is not one of the clustered features")
    j = names.index(severity_attribute)
    if X_raw is None:
        centroids = model.centers_raw_[:, j]
    else:
        _, raw = _as_matrix(X_raw)
        if len(raw) != len(model.labels_):
            raise ShapeMismatch("X_raw must align with the model's training rows")
        centroids = np.array([raw[model.labels_ == c, j].mean() for c in (0, 1)])
    c0, c1 = (float(v) for v in centroids)
    if c0 == c1:
        return CauseOrientation(severity_attribute, direction, 0, (c0, c1), ambiguous=True)
    if direction is Direction.HIGHER_IS_WORSE:
        problem = 0 if c0 > c1 else 1
    else:
        problem = 0 if c0 < c1 else 1
    return CauseOrientation(severity_attribute, direction, problem, (c0, c1))
