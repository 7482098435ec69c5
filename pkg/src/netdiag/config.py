"""Run configuration: a YAML document with a fixed set of keys.

Unknown keys are errors, since a misspelled attribute list would otherwise
silently change the result. Every key is optional; omitted keys take the
defaults below, which match the synthetic campaign's column names.

Example::

    schema:
      kpi_column: TDR
      groups:
        rtt: [Abs_RTT_avg, Abs_RTT_max]
        radio: [Start.RSRP.dBm, End.RSRP.dBm]
        tcp: [Abs_PacketLost_sum, Abs_CWIN_max]
      metadata_columns: [technology]
    split: [10, 90]
    filters:
      - {column: technology, equals: LTE}
      - {column: Start.RSRP.dBm, min: -140, max: -40}
    tree: {max_depth: auto, min_leaf: 5, min_support: 5}
    cause_tree: {max_depth: auto, min_leaf: 5, min_support: 5}
    kmeans: {k: 2, k_range: [2, 5], n_init: 10, max_iter: 300, tol: 1.0e-6,
             min_silhouette: 0.45}
    families:
      - {name: radio, group: radio, severity_attribute: Start.RSRP.dBm,
         direction: lower-is-worse}
      - {name: tcp, group: tcp, severity_attribute: Abs_PacketLost_sum,
         direction: higher-is-worse}
    holdout: {enabled: false, fraction: 0.2}
    rtt_group: rtt
    scatter_attribute: Abs_RTT_avg
    seed: 0
    output_dir: out
    synth: {n_rows: 5000, radio_rate: 0.05, tcp_rate: 0.05}
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .dataset import AttributeSchema, Between, Equals
from .exceptions import InvalidConfig, SchemaError
from .kmeans import Direction
from .synth import SynthConfig, default_schema


@dataclass(frozen=True)
class TreeParams:
    max_depth: object = "auto"
    min_leaf: int = 5
    min_support: int = 5

    def __post_init__(self):
        if self.max_depth != "auto" and (not isinstance(self.max_depth, int) or self.max_depth < 0):
            raise InvalidConfig(f"max_depth must be 'auto' or an int >= 0, got {self.max_depth!r}")
        if int(self.min_leaf) < 1 or int(self.min_support) < 1:
            raise InvalidConfig("min_leaf and min_support must be >= 1")


@dataclass(frozen=True)
class KMeansParams:
    k: object = 2
    k_range: tuple = (2, 5)
    n_init: int = 10
    max_iter: int = 300
    tol: float = 1e-6
    # below this silhouette a family's clusters are treated as one population
    min_silhouette: float = 0.45

    def __post_init__(self):
        try:
            object.__setattr__(self, "k_range", tuple(int(v) for v in self.k_range))
            for name in ("tol", "min_silhouette"):
                object.__setattr__(self, name, float(getattr(self, name)))
        except (TypeError, ValueError) as exc:
            raise InvalidConfig(f"kmeans: {exc}") from None
        if self.k != "auto" and (not isinstance(self.k, int) or self.k != 2):
            raise InvalidConfig("kmeans.k must be 2 or 'auto' (cause orientation is binary)")
        if len(self.k_range) != 2 or not 2 <= self.k_range[0] <= self.k_range[1]:
            raise InvalidConfig(f"k_range must be [low, high] with 2 <= low <= high, got {self.k_range}")
        if self.n_init < 1 or self.max_iter < 1 or self.tol < 0:
            raise InvalidConfig("n_init, max_iter must be >= 1 and tol >= 0")
        if not -1.0 <= self.min_silhouette <= 1.0:
            raise InvalidConfig("min_silhouette must lie in [-1, 1]")


@dataclass(frozen=True)
class CauseFamily:
    """A hypothesized anomaly cause: the attribute group that characterizes it."""

    name: str
    group: str
    severity_attribute: str
    direction: Direction

    def __post_init__(self):
        try:
            object.__setattr__(self, "direction", Direction(self.direction))
        except ValueError:
            raise InvalidConfig(
                f"family {self.name!r}: direction must be one of "
                f"{[d.value for d in Direction]}, got {self.direction!r}"
            ) from None


@dataclass(frozen=True)
class Holdout:
    enabled: bool = False
    fraction: float = 0.2

    def __post_init__(self):
        if not 0.0 < self.fraction < 1.0:
            raise InvalidConfig(f"holdout fraction must lie in (0, 1), got {self.fraction}")


def default_families() -> tuple:
    return (
        CauseFamily("radio", "radio", "Start.RSRP.dBm", Direction.LOWER_IS_WORSE),
        CauseFamily("tcp", "tcp", "Abs_PacketLost_sum", Direction.HIGHER_IS_WORSE),
    )


@dataclass(frozen=True)
class RunConfig:
    schema: AttributeSchema = field(default_factory=default_schema)
    split: tuple = (10.0, 90.0)
    filters: tuple = ()
    tree: TreeParams = field(default_factory=TreeParams)
    cause_tree: TreeParams = field(default_factory=TreeParams)
    kmeans: KMeansParams = field(default_factory=KMeansParams)
    families: tuple = field(default_factory=default_families)
    holdout: Holdout = field(default_factory=Holdout)
    rtt_group: str = "rtt"
    scatter_attribute: str | None = None
    seed: int = 0
    output_dir: str = "out"
    synth: SynthConfig = field(default_factory=SynthConfig)

    def __post_init__(self):
        low, high = (float(v) for v in self.split)
        if not 0 < low < high < 100:
            raise InvalidConfig(f"split must satisfy 0 < low < high < 100, got {self.split}")
        object.__setattr__(self, "split", (low, high))
        object.__setattr__(self, "families", tuple(self.families))
        groups = self.schema.groups
        if self.rtt_group not in groups:
            raise InvalidConfig(f"rtt_group {self.rtt_group!r} is not a schema group")
        if not self.families:
            raise InvalidConfig("at least one cause family is required")
        names = [f.name for f in self.families]
        if len(set(names)) != len(names):
            raise InvalidConfig(f"duplicate family names: {names}")
        for fam in self.families:
            if fam.group not in groups:
                raise InvalidConfig(f"family {fam.name!r}: unknown group {fam.group!r}")
            if fam.severity_attribute not in groups[fam.group]:
                raise InvalidConfig(
                    f"family {fam.name!r}: severity attribute {fam.severity_attribute!r} "
                    f"is not in group {fam.group!r}"
                )
            if fam.group == self.rtt_group:
                raise InvalidConfig(f"family {fam.name!r} reuses the RTT group")
        if self.scatter_attribute is None:
            object.__setattr__(self, "scatter_attribute", groups[self.rtt_group][0])
        elif self.scatter_attribute not in groups[self.rtt_group]:
            raise InvalidConfig(f"scatter_attribute {self.scatter_attribute!r} is not an RTT column")

    def with_overrides(self, **changes) -> "RunConfig":
        changes = {k: v for k, v in changes.items() if v is not None}
        return dataclasses.replace(self, **changes) if changes else self

    def to_dict(self) -> dict:
        return {
            "schema": {
                "kpi_column": self.schema.kpi_column,
                "groups": {k: list(v) for k, v in self.schema.groups.items()},
                "metadata_columns": list(self.schema.metadata_columns),
            },
            "split": list(self.split),
            "filters": [_predicate_dict(p) for p in self.filters],
            "tree": dataclasses.asdict(self.tree),
            "cause_tree": dataclasses.asdict(self.cause_tree),
            "kmeans": {**dataclasses.asdict(self.kmeans), "k_range": list(self.kmeans.k_range)},
            "families": [
                {"name": f.name, "group": f.group, "severity_attribute": f.severity_attribute,
                 "direction": f.direction.value}
                for f in self.families
            ],
            "holdout": dataclasses.asdict(self.holdout),
            "rtt_group": self.rtt_group,
            "scatter_attribute": self.scatter_attribute,
            "seed": self.seed,
            "output_dir": self.output_dir,
            "synth": dataclasses.asdict(self.synth),
        }


def _predicate_dict(pred) -> dict:
    if isinstance(pred, Equals):
        return {"column": pred.column, "equals": pred.value}
    out = {"column": pred.column}
    if pred.low is not None:
        out["min"] = pred.low
    if pred.high is not None:
        out["max"] = pred.high
    return out


def _check_keys(section: str, mapping, allowed) -> dict:
    if mapping is None:
        return {}
    if not isinstance(mapping, dict):
        raise InvalidConfig(f"{section}: expected a mapping, got {type(mapping).__name__}")
    unknown = sorted(set(mapping) - set(allowed))
    if unknown:
        raise InvalidConfig(f"{section}: unknown key(s) {unknown}")
    return mapping


def _fields(cls):
    return [f.name for f in dataclasses.fields(cls)]


def _parse_filter(item):
    item = _check_keys("filters[]", item, ["column", "equals", "min", "max"])
    if "column" not in item:
        raise InvalidConfig("filters[]: 'column' is required")
    if "equals" in item:
        if "min" in item or "max" in item:
            raise InvalidConfig("filters[]: use either 'equals' or 'min'/'max'")
        return Equals(item["column"], item["equals"])
    if "min" not in item and "max" not in item:
        raise InvalidConfig(f"filters[]: {item['column']!r} needs 'equals', 'min' or 'max'")
    return Between(item["column"], item.get("min"), item.get("max"))


def config_from_dict(doc) -> RunConfig:
    doc = _check_keys("config", doc, _fields(RunConfig))
    kwargs = {}
    try:
        if "schema" in doc:
            s = _check_keys("schema", doc["schema"], ["kpi_column", "groups", "metadata_columns"])
            if "kpi_column" not in s or "groups" not in s:
                raise InvalidConfig("schema needs 'kpi_column' and 'groups'")
            kwargs["schema"] = AttributeSchema(
                str(s["kpi_column"]),
                {str(k): [str(c) for c in v] for k, v in s["groups"].items()},
                [str(c) for c in s.get("metadata_columns") or ()],
            )
        if "split" in doc:
            kwargs["split"] = tuple(doc["split"])
            if len(kwargs["split"]) != 2:
                raise InvalidConfig("split must be [low, high]")
        if "filters" in doc:
            kwargs["filters"] = tuple(_parse_filter(f) for f in doc["filters"] or ())
        for key in ("tree", "cause_tree"):
            if key in doc:
                kwargs[key] = TreeParams(**_check_keys(key, doc[key], _fields(TreeParams)))
        if "kmeans" in doc:
            kwargs["kmeans"] = KMeansParams(**_check_keys("kmeans", doc["kmeans"], _fields(KMeansParams)))
        if "families" in doc:
            fams = []
            for item in doc["families"] or ():
                item = _check_keys("families[]", item, _fields(CauseFamily))
                missing = set(_fields(CauseFamily)) - set(item)
                if missing:
                    raise InvalidConfig(f"families[]: missing key(s) {sorted(missing)}")
                fams.append(CauseFamily(**item))
            kwargs["families"] = tuple(fams)
        if "holdout" in doc:
            kwargs["holdout"] = Holdout(**_check_keys("holdout", doc["holdout"], _fields(Holdout)))
        if "synth" in doc:
            kwargs["synth"] = SynthConfig.from_mapping(_check_keys("synth", doc["synth"], _fields(SynthConfig)))
        for key in ("rtt_group", "scatter_attribute", "output_dir"):
            if key in doc:
                kwargs[key] = doc[key]
        if "seed" in doc:
            kwargs["seed"] = int(doc["seed"])
        return RunConfig(**kwargs)
    except SchemaError as exc:
        raise InvalidConfig(str(exc)) from exc
    except TypeError as exc:
        raise InvalidConfig(str(exc)) from exc


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise InvalidConfig(f"cannot read config {path}: {exc}") from exc
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise InvalidConfig(f"{path}: invalid YAML: {exc}") from exc
    return config_from_dict(doc or {})


def dump_config(cfg: RunConfig) -> str:
    return yaml.safe_dump(cfg.to_dict(), sort_keys=False)
