"""CSV ingestion, row filtering and feature-matrix slicing.

A :class:`Dataset` keeps every numeric column as a float array (``nan`` marks
a missing cell) and every other column as strings. Row ids are the 0-based
ordinals of the data records in the source file and never change, so any
result can be traced back to the raw line it came from.
"""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .exceptions import (
    AllRowsDropped,
    EmptyFile,
    MalformedHeader,
    MissingColumn,
    SchemaError,
    UnknownColumn,
    UnknownGroup,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class AttributeSchema:
    """Which columns hold the KPI, which belong to each attribute group."""

    kpi_column: str
    groups: Mapping[str, Sequence[str]]
    metadata_columns: Sequence[str] = ()

    def __post_init__(self):
        groups = {name: tuple(cols) for name, cols in self.groups.items()}
        object.__setattr__(self, "groups", groups)
        object.__setattr__(self, "metadata_columns", tuple(self.metadata_columns))
        seen = {}
        for name, cols in groups.items():
            if not cols:
                raise SchemaError(f"attribute group {name!r} is empty")
            for col in cols:
                if col == self.kpi_column:
                    raise SchemaError(f"KPI column {col!r} listed in group {name!r}")
                if col in seen:
                    raise SchemaError(
                        f"column {col!r} appears in groups {seen[col]!r} and {name!r}"
                    )
                seen[col] = name
        overlap = set(self.metadata_columns) & (set(seen) | {self.kpi_column})
        if overlap:
            raise SchemaError(f"metadata columns overlap numeric columns: {sorted(overlap)}")

    @property
    def numeric_columns(self) -> tuple[str, ...]:
        cols = [self.kpi_column]
        for group in self.groups.values():
            cols.extend(group)
        return tuple(cols)

    def group(self, name: str) -> tuple[str, ...]:
        try:
            return self.groups[name]
        except KeyError:
            raise UnknownGroup(name) from None


@dataclass(frozen=True)
class FeatureMatrix:
    """Dense numeric slice of a dataset.

    ``values[i, j]`` is the value of ``columns[j]`` for row ``row_ids[i]``.
    ``dropped_ids`` lists the rows excluded because a cell was missing.
    """

    row_ids: np.ndarray
    columns: tuple[str, ...]
    values: np.ndarray
    dropped_ids: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        row_ids = np.array(self.row_ids, dtype=np.int64)
        if values.ndim != 2 or values.shape != (len(row_ids), len(self.columns)):
            raise ValueError(
                f"values shape {values.shape} does not match "
                f"{len(row_ids)} rows x {len(self.columns)} columns"
            )
        if np.isnan(values).any():
            raise ValueError("FeatureMatrix may not contain missing values")
        for arr in (values, row_ids):
            arr.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "row_ids", row_ids)
        object.__setattr__(self, "columns", tuple(self.columns))
        object.__setattr__(self, "dropped_ids", np.array(self.dropped_ids, dtype=np.int64))

    @property
    def shape(self):
        return self.values.shape

    def __len__(self):
        return len(self.row_ids)

    def __array__(self, dtype=None, copy=None):
        return self.values if dtype is None else self.values.astype(dtype)

    def column(self, name: str) -> np.ndarray:
        try:
            return self.values[:, self.columns.index(name)]
        except ValueError:
            raise UnknownColumn(name) from None

    def take(self, row_ids: Iterable[int]) -> "FeatureMatrix":
        """Restrict to ``row_ids`` (kept in this matrix's order)."""
        wanted = np.isin(self.row_ids, np.fromiter(row_ids, dtype=np.int64))
        return FeatureMatrix(self.row_ids[wanted], self.columns, self.values[wanted])


class Dataset:
    """Immutable table of measurement rows.

    Parameters
    ----------
    row_ids : array-like of int
        Stable identifiers, one per row.
    numeric : mapping of column name to float array
        ``nan`` marks a missing cell.
    metadata : mapping of column name to sequence of str
    schema : AttributeSchema, optional
    missing_counts : mapping, optional
        Per-column count of cells that failed numeric parsing at load time.
    """

    def __init__(self, row_ids, numeric, metadata=None, schema=None, missing_counts=None):
        self.row_ids = np.array(row_ids, dtype=np.int64)
        self.row_ids.setflags(write=False)
        if len(np.unique(self.row_ids)) != len(self.row_ids):
            raise ValueError("row ids must be unique")
        n = len(self.row_ids)
        self._numeric = {}
        for name, col in numeric.items():
            arr = np.array(col, dtype=float)
            if arr.shape != (n,):
                raise ValueError(f"column {name!r} has {arr.shape[0]} values, expected {n}")
            arr.setflags(write=False)
            self._numeric[name] = arr
        self._metadata = {}
        for name, col in (metadata or {}).items():
            arr = np.array(list(col), dtype=object)
            if arr.shape != (n,):
                raise ValueError(f"column {name!r} has {arr.shape[0]} values, expected {n}")
            arr.setflags(write=False)
            self._metadata[name] = arr
        overlap = set(self._numeric) & set(self._metadata)
        if overlap:
            raise ValueError(f"columns both numeric and metadata: {sorted(overlap)}")
        self.schema = schema
        self.missing_counts = dict(missing_counts or {})

    def __len__(self):
        return len(self.row_ids)

    def __repr__(self):
        return (
            f"Dataset(rows={len(self)}, numeric={len(self._numeric)}, "
            f"metadata={len(self._metadata)})"
        )

    @property
    def numeric_columns(self) -> tuple[str, ...]:
        return tuple(self._numeric)

    @property
    def metadata_columns(self) -> tuple[str, ...]:
        return tuple(self._metadata)

    @property
    def columns(self) -> tuple[str, ...]:
        return self.numeric_columns + self.metadata_columns

    def has_column(self, name: str) -> bool:
        return name in self._numeric or name in self._metadata

    def numeric(self, name: str) -> np.ndarray:
        try:
            return self._numeric[name]
        except KeyError:
            raise UnknownColumn(name) from None

    def metadata(self, name: str) -> np.ndarray:
        try:
            return self._metadata[name]
        except KeyError:
            raise UnknownColumn(name) from None

    def __getitem__(self, name):
        if name in self._numeric:
            return self._numeric[name]
        return self.metadata(name)

    def positions(self, row_ids) -> np.ndarray:
        """Array positions of ``row_ids``; raises KeyError for unknown ids."""
        index = {int(r): i for i, r in enumerate(self.row_ids)}
        try:
            return np.array([index[int(r)] for r in row_ids], dtype=np.int64)
        except KeyError as exc:
            raise KeyError(f"row id {exc.args[0]} not in dataset") from None

    def row(self, row_id: int) -> dict:
        (pos,) = self.positions([row_id])
        out = {name: float(col[pos]) for name, col in self._numeric.items()}
        out.update({name: col[pos] for name, col in self._metadata.items()})
        return out

    def subset(self, mask) -> "Dataset":
        """Rows where boolean ``mask`` holds; ids and order preserved."""
        mask = np.asarray(mask, dtype=bool)
        return Dataset(
            self.row_ids[mask],
            {k: v[mask] for k, v in self._numeric.items()},
            {k: v[mask] for k, v in self._metadata.items()},
            schema=self.schema,
            missing_counts=self.missing_counts,
        )

    def filter(self, predicates) -> "Dataset":
        return filter_rows(self, predicates)

    def select_features(self, group: str) -> FeatureMatrix:
        return select_features(self, group)


# --- loading -------------------------------------------------------------------


def parse_number(text: str) -> float:
    """Parse a decimal/scientific number; empty or unparseable text is ``nan``."""
    text = text.strip()
    if not text:
        return math.nan
    try:
        value = float(text)
    except ValueError:
        return math.nan
    # float() also accepts 'nan'/'inf' spellings; treat them as missing
    return value if math.isfinite(value) else math.nan


def load_csv(path, schema: AttributeSchema) -> Dataset:
    """Load a comma-delimited UTF-8 CSV into a :class:`Dataset`.

    Schema numeric columns are parsed as floats and unparseable cells are
    recorded as missing. Undeclared columns are kept as metadata strings so
    they stay available to :func:`filter_rows`.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise EmptyFile(f"{path}: file is empty") from None
        records = [rec for rec in reader if rec]

    header = [h.strip() for h in header]
    if not any(header) or any(not h for h in header):
        raise MalformedHeader(f"{path}: header contains empty column names")
    dupes = sorted({h for h in header if header.count(h) > 1})
    if dupes:
        raise MalformedHeader(f"{path}: duplicate columns {dupes}")
    for col in schema.numeric_columns + schema.metadata_columns:
        if col not in header:
            raise MissingColumn(col)

    width = len(header)
    for lineno, rec in enumerate(records):
        if len(rec) != width:
            raise MalformedHeader(
                f"{path}: data record {lineno} has {len(rec)} fields, header has {width}"
            )

    numeric_cols = set(schema.numeric_columns)
    numeric = {}
    metadata = {}
    missing_counts = {}
    for j, name in enumerate(header):
        cells = [rec[j] for rec in records]
        if name in numeric_cols:
            values = np.array([parse_number(c) for c in cells], dtype=float)
            n_bad = sum(1 for c, v in zip(cells, values) if c.strip() and math.isnan(v))
            if n_bad:
                logger.warning("%s: %d unparseable value(s) in column %r", path, n_bad, name)
            missing_counts[name] = int(np.isnan(values).sum())
            numeric[name] = values
        else:
            metadata[name] = cells
    # keep the schema's canonical numeric ordering
    numeric = {name: numeric[name] for name in schema.numeric_columns}
    return Dataset(
        np.arange(len(records)), numeric, metadata, schema=schema, missing_counts=missing_counts
    )


def format_number(value: float) -> str:
    if math.isnan(value):
        return ""
    if float(value).is_integer() and abs(value) < 1e15:
        return str(int(value))
    return repr(float(value))


def write_csv(ds: Dataset, path) -> None:
    """Write ``ds`` in the dialect :func:`load_csv` reads (row ids are implicit)."""
    path = Path(path)
    cols = ds.columns
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(cols)
        numeric = [ds.numeric(c) for c in ds.numeric_columns]
        meta = [ds.metadata(c) for c in ds.metadata_columns]
        for i in range(len(ds)):
            writer.writerow(
                [format_number(col[i]) for col in numeric] + [str(col[i]) for col in meta]
            )


# --- filtering -----------------------------------------------------------------


@dataclass(frozen=True)
class Equals:
    """``column == value``; numeric columns compare as floats."""

    column: str
    value: object

    def mask(self, ds: Dataset) -> np.ndarray:
        if self.column in ds.numeric_columns:
            return ds.numeric(self.column) == float(self.value)
        return ds.metadata(self.column) == str(self.value)


@dataclass(frozen=True)
class Between:
    """Closed range ``low <= column <= high``; either bound may be None."""

    column: str
    low: float | None = None
    high: float | None = None

    def mask(self, ds: Dataset) -> np.ndarray:
        if self.column in ds.numeric_columns:
            values = ds.numeric(self.column)
        else:
            values = np.array([parse_number(v) for v in ds.metadata(self.column)])
        mask = ~np.isnan(values)
        if self.low is not None:
            mask &= values >= self.low
        if self.high is not None:
            mask &= values <= self.high
        return mask


def filter_rows(ds: Dataset, predicates) -> Dataset:
    """Keep rows satisfying every predicate (logical AND)."""
    predicates = list(predicates)
    for pred in predicates:
        if not ds.has_column(pred.column):
            raise UnknownColumn(pred.column)
    mask = np.ones(len(ds), dtype=bool)
    for pred in predicates:
        mask &= pred.mask(ds)
    return ds.subset(mask)


# --- feature selection -----------------------------------------------------------


def select_columns(ds: Dataset, columns: Sequence[str], row_ids=None) -> FeatureMatrix:
    """Matrix over ``columns``, dropping rows with any missing cell."""
    for col in columns:
        if col not in ds.numeric_columns:
            raise UnknownColumn(col)
    if row_ids is None:
        pos = np.arange(len(ds))
    else:
        pos = ds.positions(row_ids)
    values = np.column_stack([ds.numeric(c)[pos] for c in columns]) if columns else None
    if values is None:
        raise ValueError("at least one column is required")
    complete = ~np.isnan(values).any(axis=1)
    ids = ds.row_ids[pos]
    if not complete.any():
        raise AllRowsDropped(f"every row has a missing value in {list(columns)}")
    dropped = ids[~complete]
    if len(dropped):
        logger.info("dropped %d row(s) with missing values in %s", len(dropped), list(columns))
    return FeatureMatrix(ids[complete], tuple(columns), values[complete], dropped)


def select_features(ds: Dataset, group: str) -> FeatureMatrix:
    """Feature matrix for one schema attribute group."""
    if ds.schema is None:
        raise UnknownGroup(group)
    return select_columns(ds, ds.schema.group(group))
