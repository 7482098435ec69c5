"""Synthetic drive-test campaigns with injected radio and TCP faults.

Healthy rows follow a throughput-from-RTT law, ``TDR = tdr_gain / RTT``
with log-normal noise. A radio fault degrades the RSRP/RSSI/SINR readings,
a TCP fault inflates loss/idle-time/duplicate-ACK counters and shrinks the
congestion window. Either fault scales TDR down by ``tdr_penalty`` while
leaving RTT untouched, which is exactly what makes such rows disagree with
an RTT-only classifier.

Distribution families (documented constants, not contracts):

* RTT average: log-normal around ``rtt_mean_ms`` with sigma ``rtt_spread``;
  min/max/std and the per-volume RTT steps are multiplicative jitters of it.
* Radio readings: Gaussian; RSSI tracks RSRP plus ~25 dB.
* Loss and duplicate-ACK counts: Poisson; idle time log-normal; windows
  Gaussian (clipped positive).
"""
from __future__ import annotations

import csv
import dataclasses
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dataset import AttributeSchema, Dataset
from .exceptions import IdMismatch, InvalidConfig

KPI_COLUMN = "TDR"

RTT_COLUMNS = (
    "Abs_RTT_avg",
    "Abs_RTT_max",
    "Abs_RTT_min",
    "Abs_RTT_std",
    "Abs_RTT_VolStep_240KB",
    "Abs_RTT_VolStep_630KB",
)
RADIO_COLUMNS = (
    "Start.RSSI.dBm",
    "End.RSSI.dBm",
    "Start.RSRP.dBm",
    "End.RSRP.dBm",
    "Start.SINR.dB",
    "End.SINR.dB",
)
TCP_COLUMNS = (
    "Abs_CWIN_avg",
    "Abs_CWIN_max",
    "Abs_RWIN_avg",
    "Abs_RWIN_max",
    "Abs_PacketLost_sum",
    "Abs_IdleTime_avg",
    "triple_dupacks_b2a",
)
METADATA_COLUMNS = ("technology", "operator", "country", "test_type")


def default_schema() -> AttributeSchema:
    return AttributeSchema(
        kpi_column=KPI_COLUMN,
        groups={"rtt": RTT_COLUMNS, "radio": RADIO_COLUMNS, "tcp": TCP_COLUMNS},
        metadata_columns=METADATA_COLUMNS,
    )


@dataclass(frozen=True)
class SynthConfig:
    n_rows: int = 5000
    seed: int = 0
    # healthy baseline
    rtt_mean_ms: float = 60.0
    rtt_spread: float = 0.5
    tdr_gain: float = 1.8e6  # kbit*ms/s: 60 ms -> 30 Mbit/s
    tdr_noise: float = 0.08
    # fault rates (independent Bernoulli draws per row)
    radio_rate: float = 0.05
    tcp_rate: float = 0.05
    # fault effect sizes
    rsrp_drop_db: float = 25.0
    sinr_drop_db: float = 12.0
    loss_inflation: float = 40.0
    idle_inflation: float = 4.0
    dupack_inflation: float = 10.0
    cwin_shrink: float = 0.25
    tdr_penalty: float = 0.12
    # healthy noise levels
    rsrp_std_db: float = 5.0
    sinr_std_db: float = 4.0
    loss_mean: float = 2.0
    dupack_mean: float = 1.0
    # fraction of radio cells left empty, as in patchy drive-test exports
    radio_missing_rate: float = 0.0

    def __post_init__(self):
        if int(self.n_rows) < 1:
            raise InvalidConfig(f"n_rows must be >= 1, got {self.n_rows}")
        for name in ("radio_rate", "tcp_rate", "radio_missing_rate"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise InvalidConfig(f"{name} must lie in [0, 1], got {value}")
        if self.radio_rate + self.tcp_rate > 1.0:
            raise InvalidConfig("radio_rate + tcp_rate must not exceed 1")
        if not 0.0 < self.tdr_penalty <= 1.0 or not 0.0 < self.cwin_shrink <= 1.0:
            raise InvalidConfig("tdr_penalty and cwin_shrink must lie in (0, 1]")
        if self.rtt_mean_ms <= 0 or self.tdr_gain <= 0 or self.rtt_spread < 0:
            raise InvalidConfig("rtt_mean_ms and tdr_gain must be positive")

    @classmethod
    def from_mapping(cls, mapping) -> "SynthConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(mapping) - known)
        if unknown:
            raise InvalidConfig(f"unknown synth keys: {unknown}")
        return cls(**mapping)


@dataclass(frozen=True)
class GroundTruth:
    row_ids: np.ndarray
    radio_fault: np.ndarray
    tcp_fault: np.ndarray

    def flags(self, family: str) -> np.ndarray:
        try:
            return {"radio": self.radio_fault, "tcp": self.tcp_fault}[family]
        except KeyError:
            raise IdMismatch(f"no ground truth for family {family!r}") from None

    @property
    def any_fault(self) -> np.ndarray:
        return self.radio_fault | self.tcp_fault

    def write_csv(self, path) -> None:
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["row_id", "radio_fault", "tcp_fault"])
            for r, a, b in zip(self.row_ids, self.radio_fault, self.tcp_fault):
                writer.writerow([int(r), int(a), int(b)])

    @classmethod
    def read_csv(cls, path) -> "GroundTruth":
        with Path(path).open(newline="", encoding="utf-8") as fh:
            rows = list(csv.DictReader(fh))
        return cls(
            np.array([int(r["row_id"]) for r in rows], dtype=np.int64),
            np.array([r["radio_fault"] == "1" for r in rows]),
            np.array([r["tcp_fault"] == "1" for r in rows]),
        )


def generate(cfg: SynthConfig) -> tuple[Dataset, GroundTruth]:
    """Draw one campaign; every random choice derives from ``cfg.seed``.

    Fault draws, RTT, radio, TCP and metadata each use their own substream,
    so changing e.g. a noise level never changes which rows are faulted.
    """
    n = int(cfg.n_rows)
    faults_rng, rtt_rng, radio_rng, tcp_rng, meta_rng = (
        np.random.default_rng(s) for s in np.random.SeedSequence(cfg.seed).spawn(5)
    )
    radio_fault = faults_rng.random(n) < cfg.radio_rate
    tcp_fault = faults_rng.random(n) < cfg.tcp_rate

    rtt_avg = cfg.rtt_mean_ms * np.exp(cfg.rtt_spread * rtt_rng.standard_normal(n))
    rtt = {
        "Abs_RTT_avg": rtt_avg,
        "Abs_RTT_max": rtt_avg * rtt_rng.uniform(1.5, 3.0, n),
        "Abs_RTT_min": rtt_avg * rtt_rng.uniform(0.4, 0.8, n),
        "Abs_RTT_std": rtt_avg * rtt_rng.uniform(0.1, 0.4, n),
        "Abs_RTT_VolStep_240KB": rtt_avg * np.exp(0.1 * rtt_rng.standard_normal(n)),
        "Abs_RTT_VolStep_630KB": rtt_avg * np.exp(0.1 * rtt_rng.standard_normal(n)),
    }
    tdr = cfg.tdr_gain / rtt_avg * np.exp(cfg.tdr_noise * rtt_rng.standard_normal(n))
    tdr = tdr * np.where(radio_fault, cfg.tdr_penalty, 1.0)
    tdr = tdr * np.where(tcp_fault, cfg.tdr_penalty, 1.0)

    rsrp_start = -85.0 + cfg.rsrp_std_db * radio_rng.standard_normal(n)
    rsrp_start = rsrp_start - np.where(radio_fault, cfg.rsrp_drop_db, 0.0)
    rsrp_end = rsrp_start + 2.0 * radio_rng.standard_normal(n)
    sinr_start = 15.0 + cfg.sinr_std_db * radio_rng.standard_normal(n)
    sinr_start = sinr_start - np.where(radio_fault, cfg.sinr_drop_db, 0.0)
    radio = {
        "Start.RSSI.dBm": rsrp_start + 25.0 + 2.0 * radio_rng.standard_normal(n),
        "End.RSSI.dBm": rsrp_end + 25.0 + 2.0 * radio_rng.standard_normal(n),
        "Start.RSRP.dBm": rsrp_start,
        "End.RSRP.dBm": rsrp_end,
        "Start.SINR.dB": sinr_start,
        "End.SINR.dB": sinr_start + 2.0 * radio_rng.standard_normal(n),
    }
    radio = {k: np.round(v, 1) for k, v in radio.items()}
    if cfg.radio_missing_rate > 0:
        blank = radio_rng.random(n) < cfg.radio_missing_rate
        col = radio_rng.integers(len(RADIO_COLUMNS), size=n)
        for j, name in enumerate(RADIO_COLUMNS):
            radio[name] = np.where(blank & (col == j), np.nan, radio[name])

    cwin_max = np.clip(800_000 + 80_000 * tcp_rng.standard_normal(n), 50_000, None)
    cwin_max = cwin_max * np.where(tcp_fault, cfg.cwin_shrink, 1.0)
    rwin_max = np.clip(1_000_000 + 100_000 * tcp_rng.standard_normal(n), 50_000, None)
    idle = 20.0 * np.exp(0.3 * tcp_rng.standard_normal(n))
    tcp = {
        "Abs_CWIN_avg": np.round(cwin_max * tcp_rng.uniform(0.3, 0.5, n)),
        "Abs_CWIN_max": np.round(cwin_max),
        "Abs_RWIN_avg": np.round(rwin_max * tcp_rng.uniform(0.6, 0.9, n)),
        "Abs_RWIN_max": np.round(rwin_max),
        "Abs_PacketLost_sum": tcp_rng.poisson(cfg.loss_mean, n)
        + np.where(tcp_fault, tcp_rng.poisson(cfg.loss_inflation, n), 0),
        "Abs_IdleTime_avg": np.round(idle * np.where(tcp_fault, cfg.idle_inflation, 1.0), 3),
        "triple_dupacks_b2a": tcp_rng.poisson(cfg.dupack_mean, n)
        + np.where(tcp_fault, tcp_rng.poisson(cfg.dupack_inflation, n), 0),
    }

    numeric = {KPI_COLUMN: np.round(tdr, 3)}
    numeric.update({k: np.round(v, 3) for k, v in rtt.items()})
    numeric.update(radio)
    numeric.update({k: np.asarray(v, dtype=float) for k, v in tcp.items()})
    metadata = {
        "technology": np.where(meta_rng.random(n) < 0.9, "LTE", "5G"),
        "operator": np.array([f"op{i}" for i in meta_rng.integers(3, size=n)]),
        "country": np.array(["SE", "NO", "IT", "ES"])[meta_rng.integers(4, size=n)],
        "test_type": np.full(n, "http_download"),
    }
    row_ids = np.arange(n)
    ds = Dataset(row_ids, numeric, metadata, schema=default_schema())
    return ds, GroundTruth(row_ids, radio_fault, tcp_fault)


@dataclass(frozen=True)
class FamilyRecovery:
    family: str
    true_positives: int
    false_positives: int
    false_negatives: int
    negatives: int

    @property
    def precision(self) -> float:
        flagged = self.true_positives + self.false_positives
        return self.true_positives / flagged if flagged else 0.0

    @property
    def recall(self) -> float:
        actual = self.true_positives + self.false_negatives
        return self.true_positives / actual if actual else 0.0

    @property
    def false_positive_rate(self) -> float:
        return self.false_positives / self.negatives if self.negatives else 0.0


@dataclass(frozen=True)
class Recovery:
    families: dict
    fault_coverage: float
    n_anomalies: int
    n_injected: int


def score_recovery(report, truth: GroundTruth) -> Recovery:
    """Compare the report's per-family problem flags with injected faults.

    Only anomaly rows take part; a row with both faults counts once in each
    family. ``fault_coverage`` is the share of injected-fault rows (among the
    rows the KPI tree classified) that ended up in the anomaly set.
    """
    truth_pos = {int(r): i for i, r in enumerate(truth.row_ids)}
    anomaly_ids = [a.row_id for a in report.anomalies]
    unknown = [r for r in anomaly_ids if r not in truth_pos]
    if unknown:
        raise IdMismatch(f"{len(unknown)} anomaly row id(s) missing from ground truth")
    classified = set(int(r) for r in report.classified_ids)
    if not classified <= set(truth_pos):
        raise IdMismatch("report rows missing from ground truth")

    families = {}
    for name in report.family_names:
        injected = truth.flags(name)
        tp = fp = fn = neg = 0
        for rec in report.anomalies:
            actual = bool(injected[truth_pos[rec.row_id]])
            flagged = rec.flags.get(name) == "Problem"
            tp += actual and flagged
            fp += flagged and not actual
            fn += actual and not flagged
            neg += not actual
        families[name] = FamilyRecovery(name, tp, fp, fn, neg)

    faulted = {r for r in classified if truth.any_fault[truth_pos[r]]}
    covered = faulted & set(anomaly_ids)
    coverage = len(covered) / len(faulted) if faulted else 1.0
    return Recovery(families, coverage, len(anomaly_ids), len(faulted))
