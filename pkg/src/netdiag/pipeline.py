"""End-to-end anomaly detection and root-cause classification.

1. Label the KPI into Bad/OK/Good by percentiles.
2. Fit a CART tree on RTT attributes only; rows it misclassifies are
   anomalies (their RTT does not explain their KPI class).
3. Cluster the anomalies into two groups per cause family and orient each
   pair into problem/OK, giving one of ``2**c`` composite classes per row.
4. Fit a second tree on all family attributes against the composite classes
   and use its rule paths to diagnose each anomaly.
"""
from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np

from .cart import CARTClassifier, Rule, RuleSet, default_depth
from .config import CauseFamily, KMeansParams, RunConfig, TreeParams
from .dataset import Dataset, FeatureMatrix, filter_rows, select_columns
from .exceptions import (
    ColumnMismatch,
    MissingAttribute,
    NetDiagError,
    NotBinary,
    PipelineError,
    SingleClass,
    TooFewAnomalies,
)
from .kmeans import CauseOrientation, KMeans, orient, select_k, silhouette
from .labeling import KPI_CLASSES, PercentileSplit, label_by_percentiles
from .metrics import Metrics, evaluate

logger = logging.getLogger(__name__)

PROBLEM = "Problem"
OK = "OK"
FAILURE_TO_IDENTIFY = "failure to identify"
UNKNOWN_LOW_SUPPORT = "unknown (investigate further)"
UNSCORED = "unscored"


def composite_name(families: Sequence[str], flags: Sequence[str]) -> str:
    """``('radio', 'tcp'), ('Problem', 'OK')`` -> ``'radio Problem/tcp OK'``."""
    return "/".join(f"{fam} {flag}" for fam, flag in zip(families, flags))


def composite_classes(families: Sequence[str]) -> list:
    """All ``2**c`` composite class names, all-OK first."""
    return [composite_name(families, combo) for combo in itertools.product((OK, PROBLEM), repeat=len(families))]


@dataclass(frozen=True)
class AnomalyRecord:
    row_id: int
    true_label: str
    predicted_label: str
    flags: Mapping = field(default_factory=dict)
    composite: tuple | None = None

    def __post_init__(self):
        if self.true_label == self.predicted_label:
            raise ValueError(f"row {self.row_id} is correctly classified, not an anomaly")


@dataclass(frozen=True)
class FamilyClustering:
    family: CauseFamily
    scored_ids: np.ndarray
    unscored_ids: np.ndarray
    model: KMeans
    orientation: CauseOrientation
    silhouette: float
    structured: bool
    k_scores: Mapping | None = None

    def to_dict(self) -> dict:
        labels = self.model.labels_
        return {
            "family": self.family.name,
            "group": self.family.group,
            "severity_attribute": self.family.severity_attribute,
            "direction": self.family.direction.value,
            "n_scored": int(len(self.scored_ids)),
            "n_unscored": int(len(self.unscored_ids)),
            "cluster_sizes": [int((labels == c).sum()) for c in range(len(self.model.cluster_centers_))],
            "problem_cluster": self.orientation.problem_cluster,
            "ambiguous": self.orientation.ambiguous,
            "silhouette": self.silhouette,
            "structured": self.structured,
            "k_scores": None if self.k_scores is None else {str(k): v for k, v in self.k_scores.items()},
            "model": self.model.to_dict(),
        }


@dataclass(frozen=True)
class Diagnosis:
    row_id: int
    outcome: str
    predicted_class: str
    rule: Rule

    @property
    def probability(self) -> float:
        return self.rule.probability


@dataclass
class Report:
    """Everything a run produced; rows are referenced by id only."""

    config: RunConfig
    n_rows: int
    split: PercentileSplit
    label_counts: dict
    classified_ids: np.ndarray
    dropped: dict
    kpi_tree: CARTClassifier
    kpi_rules: RuleSet
    kpi_metrics: Metrics
    holdout_metrics: Metrics | None
    anomalies: list
    family_names: tuple
    clusterings: dict
    cause_tree: CARTClassifier
    cause_rules: RuleSet
    cause_metrics: Metrics
    diagnoses: dict
    cause_counts: dict
    diagnosis_counts: dict
    family_counts: dict
    scatter: list

    @property
    def n_anomalies(self) -> int:
        return len(self.anomalies)

    def anomaly(self, row_id: int) -> AnomalyRecord:
        for rec in self.anomalies:
            if rec.row_id == row_id:
                return rec
        raise KeyError(row_id)


# --- steps -----------------------------------------------------------------------


def detect_anomalies(tree: CARTClassifier, X: FeatureMatrix, labels) -> list:
    """Rows of ``X`` whose predicted class differs from ``labels``.

    ``labels`` is either aligned with ``X``'s rows or a mapping from row id.
    """
    if list(X.columns) != [str(f) for f in tree.feature_names_in_]:
        raise ColumnMismatch(
            f"tree was fitted on {list(tree.feature_names_in_)}, got {list(X.columns)}"
        )
    if isinstance(labels, Mapping):
        labels = [labels[int(r)] for r in X.row_ids]
    labels = np.asarray(labels, dtype=object)
    if len(labels) != len(X):
        raise ColumnMismatch(f"{len(X)} rows but {len(labels)} labels")
    pred = tree.predict(X.values)
    wrong = np.flatnonzero(pred != labels)
    return [AnomalyRecord(int(X.row_ids[i]), str(labels[i]), str(pred[i])) for i in wrong]


def _cluster_family(fm: FeatureMatrix, fam: CauseFamily, kparams: KMeansParams, seed: int):
    params = dict(n_init=kparams.n_init, max_iter=kparams.max_iter, tol=kparams.tol, seed=seed)
    k_scores = None
    if kparams.k == "auto":
        high = min(kparams.k_range[1], len(fm) - 1)
        best, k_scores = select_k(fm.values, range(kparams.k_range[0], high + 1), **params)
        if best != 2:
            raise NotBinary(f"family {fam.name!r}: silhouette prefers k={best}, orientation needs k=2")
    model = KMeans(2, n_init=kparams.n_init, max_iter=kparams.max_iter, tol=kparams.tol,
                   random_state=seed).fit(fm)
    orientation = orient(model, fam.severity_attribute, fam.direction, X_raw=fm.values)
    score = silhouette(model.transform(fm.values), model.labels_) if len(fm) >= 3 else 0.0
    return model, orientation, score, k_scores


def cluster_anomalies(anomalies, ds: Dataset, families: Sequence[CauseFamily],
                      kparams: KMeansParams = KMeansParams(), seed: int = 0):
    """Flag every anomaly as Problem/OK per cause family.

    Each family is clustered (k=2, standardized) over the anomalies that have
    all of its attributes; rows missing any of them stay unscored for that
    family. When a family's clustering scores a silhouette below
    ``kparams.min_silhouette`` it is treated as one population and every row
    is flagged OK. Returns ``(records, {family name: FamilyClustering})``.
    """
    anomalies = list(anomalies)
    if len(anomalies) < 2 * len(families):
        raise TooFewAnomalies(
            f"{len(anomalies)} anomalies cannot be clustered into 2 groups for "
            f"{len(families)} famil{'y' if len(families) == 1 else 'ies'}"
        )
    ids = np.array([a.row_id for a in anomalies], dtype=np.int64)
    flags = {int(r): {} for r in ids}
    clusterings = {}
    for fam in families:
        columns = ds.schema.group(fam.group)
        fm = select_columns(ds, columns, row_ids=ids)
        if len(fm) < 3:
            raise TooFewAnomalies(f"family {fam.name!r}: only {len(fm)} anomalies have all attributes")
        model, orientation, score, k_scores = _cluster_family(fm, fam, kparams, seed)
        structured = score >= kparams.min_silhouette
        if not structured:
            logger.info("family %r: silhouette %.3f below %.3f, no problem cluster",
                        fam.name, score, kparams.min_silhouette)
        problem = orientation.problem_flags(model.labels_) & structured
        for r, p in zip(fm.row_ids, problem):
            flags[int(r)][fam.name] = PROBLEM if p else OK
        clusterings[fam.name] = FamilyClustering(
            fam, fm.row_ids, fm.dropped_ids, model, orientation, score, bool(structured), k_scores
        )

    names = [f.name for f in families]
    out = []
    for rec in anomalies:
        f = flags[rec.row_id]
        composite = tuple(f[n] for n in names) if all(n in f for n in names) else None
        out.append(replace(rec, flags=dict(f), composite=composite))
    return out, clusterings


def cause_columns(ds: Dataset, families: Sequence[CauseFamily]) -> list:
    cols = []
    for fam in families:
        for c in ds.schema.group(fam.group):
            if c not in cols:
                cols.append(c)
    return cols


def fit_cause_tree(anomalies, ds: Dataset, families: Sequence[CauseFamily],
                   tree_params: TreeParams = TreeParams()) -> CARTClassifier:
    """CART over the union of family attributes, targets = composite classes."""
    names = [f.name for f in families]
    scored = {a.row_id: composite_name(names, a.composite) for a in anomalies if a.composite is not None}
    if not scored:
        raise SingleClass("no anomaly was scored in every family")
    fm = select_columns(ds, cause_columns(ds, families), row_ids=sorted(scored))
    y = [scored[int(r)] for r in fm.row_ids]
    if len(set(y)) < 2:
        raise SingleClass(f"all scored anomalies share one composite class ({y[0]!r})")
    depth = tree_params.max_depth
    if depth == "auto":
        depth = default_depth(len(y))
    tree = CARTClassifier(max_depth=depth, min_leaf=tree_params.min_leaf,
                          min_support=tree_params.min_support,
                          class_order=composite_classes(names))
    return tree.fit(fm, y)


def diagnose(cause_tree: CARTClassifier, row: Mapping, *, row_id: int = -1,
             rules: RuleSet | None = None) -> Diagnosis:
    """Route one anomaly through the cause tree and name its outcome.

    Leaves with fewer than ``min_support`` training samples give
    "unknown (investigate further)"; an all-OK composite gives
    "failure to identify"; anything else is the composite class itself.
    """
    missing = [f for f in cause_tree.feature_names_in_ if f not in row]
    if missing:
        raise MissingAttribute(missing[0])
    leaf = cause_tree.decision_path(row)[-1]
    rules = rules if rules is not None else cause_tree.extract_rules()
    rule = rules.by_node(leaf.node_id)
    predicted = str(cause_tree.classes_[leaf.predicted])
    if leaf.n_samples < cause_tree.min_support:
        outcome = UNKNOWN_LOW_SUPPORT
    elif all(part.endswith(f" {OK}") for part in predicted.split("/")):
        outcome = FAILURE_TO_IDENTIFY
    else:
        outcome = predicted
    return Diagnosis(row_id, outcome, predicted, rule)


# --- orchestration --------------------------------------------------------------------


def _step(name, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except PipelineError:
        raise
    except NetDiagError as exc:
        raise PipelineError(name, exc) from exc


def _holdout_metrics(X: FeatureMatrix, y, cfg: RunConfig) -> Metrics:
    rng = np.random.default_rng([cfg.seed, 1])
    order = rng.permutation(len(y))
    n_test = max(1, int(round(cfg.holdout.fraction * len(y))))
    test, train = order[:n_test], order[n_test:]
    depth = cfg.tree.max_depth
    if depth == "auto":
        depth = default_depth(len(train))
    tree = CARTClassifier(max_depth=depth, min_leaf=cfg.tree.min_leaf,
                          min_support=cfg.tree.min_support, class_order=list(KPI_CLASSES))
    tree.fit(X.values[train], y[train], feature_names=X.columns)
    return evaluate(y[test], tree.predict(X.values[test]), KPI_CLASSES)


def run_pipeline(cfg: RunConfig, ds: Dataset) -> Report:
    """Run all four steps; errors are re-raised as PipelineError(step, cause)."""
    n_rows = len(ds)
    if cfg.filters:
        ds = _step("filter", filter_rows, ds, cfg.filters)
    if ds.schema is None or ds.schema.kpi_column != cfg.schema.kpi_column:
        ds = Dataset(ds.row_ids, {c: ds.numeric(c) for c in ds.numeric_columns},
                     {c: ds.metadata(c) for c in ds.metadata_columns}, schema=cfg.schema)

    labeling = _step("label", label_by_percentiles, ds, cfg.split)
    label_of = labeling.as_dict()

    rtt_cols = cfg.schema.group(cfg.rtt_group)
    X = _step("kpi_tree", select_columns, ds, rtt_cols, row_ids=labeling.row_ids)
    y = np.array([label_of[int(r)] for r in X.row_ids], dtype=object)
    depth = cfg.tree.max_depth
    if depth == "auto":
        depth = _step("kpi_tree", default_depth, len(y))
    kpi_tree = CARTClassifier(max_depth=depth, min_leaf=cfg.tree.min_leaf,
                              min_support=cfg.tree.min_support, class_order=list(KPI_CLASSES))
    _step("kpi_tree", kpi_tree.fit, X, y)
    kpi_pred = kpi_tree.predict(X.values)
    kpi_metrics = evaluate(y, kpi_pred, KPI_CLASSES)
    holdout = _step("holdout", _holdout_metrics, X, y, cfg) if cfg.holdout.enabled else None

    anomalies = _step("detect", detect_anomalies, kpi_tree, X, y)
    logger.info("%d anomalies among %d classified rows", len(anomalies), len(X))

    anomalies, clusterings = _step("cluster", cluster_anomalies, anomalies, ds, cfg.families,
                                   cfg.kmeans, cfg.seed)
    cause_tree = _step("cause_tree", fit_cause_tree, anomalies, ds, cfg.families, cfg.cause_tree)
    cause_rules = cause_tree.extract_rules()

    names = tuple(f.name for f in cfg.families)
    scored = [a for a in anomalies if a.composite is not None]
    features = [str(f) for f in cause_tree.feature_names_in_]
    diagnoses = {}
    for rec in anomalies:
        row = ds.row(rec.row_id)
        if any(np.isnan(row[f]) for f in features):
            continue
        diagnoses[rec.row_id] = _step("diagnose", diagnose, cause_tree, row, row_id=rec.row_id,
                                      rules=cause_rules)

    trained = [a for a in scored if a.row_id in diagnoses]
    cause_metrics = evaluate(
        [composite_name(names, a.composite) for a in trained],
        [diagnoses[a.row_id].predicted_class for a in trained],
        cause_tree.classes_,
    )

    cause_counts = {c: 0 for c in composite_classes(names)}
    for a in scored:
        cause_counts[composite_name(names, a.composite)] += 1
    cause_counts[UNSCORED] = len(anomalies) - len(scored)

    diagnosis_counts = {c: 0 for c in composite_classes(names)[1:]}
    diagnosis_counts[FAILURE_TO_IDENTIFY] = 0
    diagnosis_counts[UNKNOWN_LOW_SUPPORT] = 0
    for d in diagnoses.values():
        diagnosis_counts[d.outcome] += 1
    diagnosis_counts[UNSCORED] = len(anomalies) - len(diagnoses)

    family_counts = {n: sum(a.flags.get(n) == PROBLEM for a in anomalies) for n in names}

    anomalous = {a.row_id for a in anomalies}
    kpi = ds.numeric(cfg.schema.kpi_column)
    pos = ds.positions(X.row_ids)
    scatter = [
        {
            "row_id": int(r),
            cfg.scatter_attribute: float(v),
            cfg.schema.kpi_column: float(kpi[p]),
            "true": str(t),
            "predicted": str(pr),
            "marker": "anomalous" if int(r) in anomalous else "correct",
        }
        for r, v, p, t, pr in zip(X.row_ids, X.column(cfg.scatter_attribute), pos, y, kpi_pred)
    ]

    return Report(
        config=cfg,
        n_rows=n_rows,
        split=labeling.split,
        label_counts=labeling.counts,
        classified_ids=X.row_ids,
        dropped={
            "filtered": n_rows - len(ds),
            "missing_kpi": [int(r) for r in labeling.dropped_ids],
            "missing_rtt": [int(r) for r in X.dropped_ids],
        },
        kpi_tree=kpi_tree,
        kpi_rules=kpi_tree.extract_rules(),
        kpi_metrics=kpi_metrics,
        holdout_metrics=holdout,
        anomalies=anomalies,
        family_names=names,
        clusterings=clusterings,
        cause_tree=cause_tree,
        cause_rules=cause_rules,
        cause_metrics=cause_metrics,
        diagnoses=diagnoses,
        cause_counts=cause_counts,
        diagnosis_counts=diagnosis_counts,
        family_counts=family_counts,
        scatter=scatter,
    )
