"""Three-way KPI classes from percentile thresholds."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from enum import Enum

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .exceptions import EmptyInput, QOutOfRange

logger = logging.getLogger(__name__)


class KpiLabel(str, Enum):
    BAD = "Bad"
    OK = "OK"
    GOOD = "Good"

    def __str__(self):
        return self.value


#: Canonical class order used for confusion-matrix axes.
KPI_CLASSES = ("Bad", "OK", "Good")


def compute_percentile(values, q: float) -> float:
    """Linear-interpolation percentile over the sorted values.

    With ``v`` sorted ascending and ``h = (n - 1) * q / 100`` the result is
    ``v[floor(h)] + (h - floor(h)) * (v[floor(h) + 1] - v[floor(h)])``.
    """
    if not 0 < q < 100:
        raise QOutOfRange(f"percentile must lie in (0, 100), got {q}")
    v = np.sort(np.asarray(values, dtype=float).ravel())
    if v.size == 0:
        raise EmptyInput("cannot take a percentile of an empty list")
    h = (v.size - 1) * q / 100.0
    lo = math.floor(h)
    if lo + 1 >= v.size:
        return float(v[lo])
    return float(v[lo] + (h - lo) * (v[lo + 1] - v[lo]))


@dataclass(frozen=True)
class PercentileSplit:
    low_q: float
    high_q: float
    low_threshold: float
    high_threshold: float

    def __post_init__(self):
        if not self.low_q < self.high_q:
            raise QOutOfRange(f"low_q {self.low_q} must be below high_q {self.high_q}")

    def classify(self, values) -> np.ndarray:
        """Good above the high threshold, Bad below the low one, OK otherwise."""
        values = np.asarray(values, dtype=float)
        out = np.full(values.shape, KpiLabel.OK.value, dtype=object)
        out[values < self.low_threshold] = KpiLabel.BAD.value
        out[values > self.high_threshold] = KpiLabel.GOOD.value
        return out


class PercentileLabeler(TransformerMixin, BaseEstimator):
    """Learn low/high percentile thresholds of a KPI and map values to classes.

    Parameters
    ----------
    low_q, high_q : float
        Percentiles in (0, 100) with ``low_q < high_q``.
    """

    def __init__(self, low_q=10.0, high_q=90.0):
        self.low_q = low_q
        self.high_q = high_q

    def fit(self, X, y=None):
        values = np.asarray(X, dtype=float).ravel()
        if values.size == 0:
            raise EmptyInput("no KPI values to characterize")
        low = compute_percentile(values, self.low_q)
        high = compute_percentile(values, self.high_q)
        self.split_ = PercentileSplit(self.low_q, self.high_q, low, high)
        return self

    def transform(self, X):
        check_is_fitted(self, "split_")
        return self.split_.classify(np.asarray(X, dtype=float).ravel())


@dataclass(frozen=True)
class Labeling:
    """KPI classes for the labeled rows of one dataset."""

    split: PercentileSplit
    row_ids: np.ndarray
    labels: np.ndarray
    dropped_ids: np.ndarray

    @property
    def counts(self) -> dict:
        return {c: int((self.labels == c).sum()) for c in KPI_CLASSES}

    def as_dict(self) -> dict:
        return {int(r): str(lab) for r, lab in zip(self.row_ids, self.labels)}


def label_by_percentiles(ds, split_q=(10.0, 90.0)) -> Labeling:
    """Assign Bad/OK/Good to every row of ``ds`` with a KPI value.

    Thresholds are computed on exactly the rows being labeled. Rows whose
    KPI is missing are dropped (and logged).
    """
    low_q, high_q = split_q
    kpi = ds.numeric(ds.schema.kpi_column)
    present = ~np.isnan(kpi)
    dropped = ds.row_ids[~present]
    if len(dropped):
        logger.warning("dropped %d row(s) with a missing KPI value", len(dropped))
    if not present.any():
        raise EmptyInput("no rows with a KPI value to label")
    labeler = PercentileLabeler(low_q, high_q).fit(kpi[present])
    labels = labeler.transform(kpi[present])
    result = Labeling(labeler.split_, ds.row_ids[present], labels, dropped)
    logger.info("label counts %s with split %s", result.counts, labeler.split_)
    return result
