"""Interpretable detection and root-cause classification of KPI anomalies.

A CART tree explains a throughput KPI from RTT attributes; the rows it gets
wrong are clustered per cause family (radio, TCP, ...) and a second tree
turns the resulting composite classes into readable diagnosis rules.
"""

__version__ = "0.1.0"

from .cart import CARTClassifier, Rule, RuleSet, best_split, default_depth, extract_rules, fit_tree, gini
from .config import CauseFamily, RunConfig, load_config
from .dataset import AttributeSchema, Between, Dataset, Equals, FeatureMatrix, filter_rows, load_csv, select_features
from .kmeans import KMeans, Standardizer, inertia, orient, select_k, silhouette, standardize
from .labeling import KpiLabel, PercentileLabeler, PercentileSplit, compute_percentile, label_by_percentiles
from .metrics import Metrics, evaluate
from .pipeline import Report, run_pipeline
from .synth import GroundTruth, SynthConfig, generate, score_recovery

__all__ = [
    "AttributeSchema",
    "Between",
    "CARTClassifier",
    "CauseFamily",
    "Dataset",
    "Equals",
    "FeatureMatrix",
    "GroundTruth",
    "KMeans",
    "KpiLabel",
    "Metrics",
    "PercentileLabeler",
    "PercentileSplit",
    "Report",
    "Rule",
    "RuleSet",
    "RunConfig",
    "Standardizer",
    "SynthConfig",
    "best_split",
    "compute_percentile",
    "default_depth",
    "evaluate",
    "extract_rules",
    "filter_rows",
    "fit_tree",
    "generate",
    "gini",
    "inertia",
    "label_by_percentiles",
    "load_config",
    "load_csv",
    "orient",
    "run_pipeline",
    "score_recovery",
    "select_features",
    "select_k",
    "silhouette",
    "standardize",
]
