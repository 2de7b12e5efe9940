"""End-to-end analysis and the volume / Hurst-distribution / activity reports."""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .classify import CLASS_IDS, ClassCounters, RuleSet, classify_batch, count_classes
from .errors import DataError, NoConvergence, NoData, TooShort, ZeroVariance
from .estimators import BUCKETS, HurstEstimate, bucket_h, estimate, normalize_method
from .ingest import ActivityPeriod, label_activity, read_capture
from .records import IngestStats, PacketBatch
from .series import DEFAULT_INTERVALS_MS, MEASURES, bin_series

HOUR_US = 3600 * 1_000_000
MIN_COVERAGE_US = 1800 * 1_000_000
HIGH_BUCKETS = BUCKETS[2:]
PERIODS = tuple(ActivityPeriod)
NA = "n/a"
ASSUMPTION_NOTE = "13:00-15:00 local is unlabelled in the source schedule; treated as Medium"
NORMALISATION_NOTE = (
    "activity shares are taken over all samples (or bytes) of the period; "
    "the H < 0.5 remainder is not shown, so rows may sum to less than 100"
)


def _pct(part, whole, places: str) -> float:
    value = Decimal(part) * 100 / Decimal(whole)
    return float(value.quantize(Decimal(places), rounding=ROUND_HALF_UP))


# -------------------------------------------------------------- reports

@dataclass(frozen=True)
class VolumeReport:
    bytes_pct: dict[int, float]
    packets_pct: dict[int, float]

    @property
    def totals(self) -> tuple[float, float]:
        return (
            round(sum(self.bytes_pct.values()), 2),
            round(sum(self.packets_pct.values()), 2),
        )

    def rows(self) -> list[list[str]]:
        out = [["class", "bytes_pct", "packets_pct"]]
        for c in CLASS_IDS:
            out.append([str(c), f"{self.bytes_pct[c]:.2f}", f"{self.packets_pct[c]:.2f}"])
        tb, tp = self.totals
        out.append(["total", f"{tb:.2f}", f"{tp:.2f}"])
        return out

    def to_dict(self) -> dict:
        return {
            "bytes_pct": {str(c): self.bytes_pct[c] for c in CLASS_IDS},
            "packets_pct": {str(c): self.packets_pct[c] for c in CLASS_IDS},
        }

    @classmethod
    def from_dict(cls, data: dict) -> VolumeReport:
        return cls(
            {int(k): v for k, v in data["bytes_pct"].items()},
            {int(k): v for k, v in data["packets_pct"].items()},
        )


def volume_report(counters: ClassCounters) -> VolumeReport:
    """Per-class share of bytes and packets, rounded half-up to 2 decimals."""
    total_bytes = sum(counters.bytes.values())
    total_packets = sum(counters.packets.values())
    if total_bytes <= 0 or total_packets <= 0:
        raise NoData("no traffic to report")
    return VolumeReport(
        {c: _pct(counters.bytes[c], total_bytes, "0.01") for c in CLASS_IDS},
        {c: _pct(counters.packets[c], total_packets, "0.01") for c in CLASS_IDS},
    )


@dataclass(frozen=True)
class ScoredSample:
    """One estimated sample: its class, activity period, H and byte volume."""

    class_id: int
    period: ActivityPeriod
    h: float
    volume: float


Cell = dict  # bucket label -> percentage, or None for "n/a"


def _distribution(samples: Sequence[ScoredSample], buckets=BUCKETS) -> tuple[Cell, Cell]:
    if not samples:
        return {b: None for b in buckets}, {b: None for b in buckets}
    labels = [bucket_h(s.h) for s in samples]
    total_volume = sum(Decimal(repr(float(s.volume))) for s in samples)
    sample_pct, volume_pct = {}, {}
    for b in buckets:
        hits = [s for s, lab in zip(samples, labels) if lab == b]
        sample_pct[b] = _pct(len(hits), len(samples), "0.1")
        if total_volume > 0:
            volume = sum((Decimal(repr(float(s.volume))) for s in hits), Decimal(0))
            volume_pct[b] = _pct(volume, total_volume, "0.1")
        else:
            volume_pct[b] = None
    return sample_pct, volume_pct


@dataclass(frozen=True)
class HurstDistributionReport:
    sample_pct: dict[int, Cell]
    volume_pct: dict[int, Cell]

    def rows(self) -> list[list[str]]:
        head = ["class"] + [f"samples {b}" for b in BUCKETS] + [f"volume {b}" for b in BUCKETS]
        out = [head]
        for c in CLASS_IDS:
            out.append(
                [str(c)]
                + [_cell(self.sample_pct[c][b]) for b in BUCKETS]
                + [_cell(self.volume_pct[c][b]) for b in BUCKETS]
            )
        return out

    def to_dict(self) -> dict:
        return {
            "sample_pct": {str(c): self.sample_pct[c] for c in CLASS_IDS},
            "volume_pct": {str(c): self.volume_pct[c] for c in CLASS_IDS},
        }

    @classmethod
    def from_dict(cls, data: dict) -> HurstDistributionReport:
        return cls(
            {int(k): v for k, v in data["sample_pct"].items()},
            {int(k): v for k, v in data["volume_pct"].items()},
        )


def hurst_distribution_report(samples: Iterable[ScoredSample]) -> HurstDistributionReport:
    """Per class, the share of samples (and of their bytes) in each H bucket."""
    samples = list(samples)
    if not samples:
        raise NoData("no estimated samples")
    sample_pct, volume_pct = {}, {}
    for c in CLASS_IDS:
        sample_pct[c], volume_pct[c] = _distribution([s for s in samples if s.class_id == c])
    return HurstDistributionReport(sample_pct, volume_pct)


@dataclass(frozen=True)
class ActivityReport:
    sample_pct: dict[str, Cell]
    volume_pct: dict[str, Cell]
    notes: tuple[str, ...] = ()

    def rows(self) -> list[list[str]]:
        head = ["period"] + [f"samples {b}" for b in HIGH_BUCKETS] + [f"volume {b}" for b in HIGH_BUCKETS]
        out = [head]
        for p in PERIODS:
            out.append(
                [p.label]
                + [_cell(self.sample_pct[p.label][b]) for b in HIGH_BUCKETS]
                + [_cell(self.volume_pct[p.label][b]) for b in HIGH_BUCKETS]
            )
        return out

    def to_dict(self) -> dict:
        return {
            "sample_pct": {p.label: self.sample_pct[p.label] for p in PERIODS},
            "volume_pct": {p.label: self.volume_pct[p.label] for p in PERIODS},
            "notes": list(self.notes),
        }

    @classmethod
    def from_dict(cls, data: dict) -> ActivityReport:
        return cls(data["sample_pct"], data["volume_pct"], tuple(data.get("notes", ())))


def activity_report(samples: Iterable[ScoredSample]) -> ActivityReport:
    """H > 0.5 bucket shares per activity period.

    Percentages are normalised by all samples (or bytes) of the period, so the
    two displayed buckets need not sum to 100.
    """
    samples = list(samples)
    if not samples:
        raise NoData("no estimated samples")
    sample_pct, volume_pct = {}, {}
    for p in PERIODS:
        sp, vp = _distribution([s for s in samples if s.period == p])
        sample_pct[p.label] = {b: sp[b] for b in HIGH_BUCKETS}
        volume_pct[p.label] = {b: vp[b] for b in HIGH_BUCKETS}
    return ActivityReport(sample_pct, volume_pct, (NORMALISATION_NOTE, ASSUMPTION_NOTE))


def _cell(value) -> str:
    return NA if value is None else f"{value:.1f}"


def render_table(rows: list[list[str]]) -> str:
    widths = [max(len(r[i]) for r in rows) for i in range(len(rows[0]))]
    return "\n".join("  ".join(cell.rjust(w) for cell, w in zip(r, widths)) for r in rows)


def rows_to_csv(rows: list[list[str]]) -> str:
    buf = io.StringIO()
    csv.writer(buf, lineterminator="\n").writerows(rows)
    return buf.getvalue()


# ------------------------------------------------------------- pipeline

@dataclass(frozen=True)
class AnalysisConfig:
    intervals_ms: tuple[int, ...] = DEFAULT_INTERVALS_MS
    methods: tuple[str, ...] = ("variance_time", "rs", "periodogram", "whittle")
    measures: tuple[str, ...] = ("bytes", "packets")
    tz_offset_minutes: int = 0
    input_format: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "methods", tuple(normalize_method(m) for m in self.methods))
        for m in self.measures:
            if m not in MEASURES:
                raise ValueError(f"unknown measure {m!r}")
        if not self.intervals_ms or min(self.intervals_ms) <= 0:
            raise ValueError("need at least one positive interval")

    @property
    def report_method(self) -> str:
        return "variance_time" if "variance_time" in self.methods else self.methods[0]

    @property
    def report_measure(self) -> str:
        return "bytes" if "bytes" in self.measures else self.measures[0]

    def to_dict(self, rules: RuleSet) -> dict:
        return {
            "rules_version": rules.version,
            "intervals_ms": list(self.intervals_ms),
            "methods": list(self.methods),
            "measures": list(self.measures),
            "tz_offset_minutes": self.tz_offset_minutes,
            "report_method": self.report_method,
            "report_measure": self.report_measure,
        }


@dataclass(frozen=True)
class SampleEstimate:
    class_id: int
    hour_start: float
    activity: str
    interval_ms: int
    measure: str
    method: str
    volume_bytes: int
    volume_packets: int
    estimate: HurstEstimate | None
    skipped: str | None = None

    def key(self):
        return (self.class_id, self.hour_start, self.interval_ms, self.measure, self.method)

    def to_dict(self) -> dict:
        return {
            "class_id": self.class_id,
            "hour_start": self.hour_start,
            "activity": self.activity,
            "interval_ms": self.interval_ms,
            "measure": self.measure,
            "method": self.method,
            "volume_bytes": self.volume_bytes,
            "volume_packets": self.volume_packets,
            "estimate": None if self.estimate is None else self.estimate.to_dict(),
            "skipped": self.skipped,
        }

    @classmethod
    def from_dict(cls, d: dict) -> SampleEstimate:
        est = d.get("estimate")
        return cls(
            d["class_id"],
            d["hour_start"],
            d["activity"],
            d["interval_ms"],
            d["measure"],
            d["method"],
            d["volume_bytes"],
            d["volume_packets"],
            None if est is None else HurstEstimate.from_dict(est),
            d.get("skipped"),
        )


@dataclass
class AnalysisRun:
    config: dict
    ingest: IngestStats
    counters: ClassCounters
    estimates: list[SampleEstimate]
    volume: VolumeReport
    hurst: HurstDistributionReport | None
    activity: ActivityReport | None
    warnings: list[str] = field(default_factory=list)

    def find(self, **match) -> list[SampleEstimate]:
        return [e for e in self.estimates if all(getattr(e, k) == v for k, v in match.items())]

    def to_dict(self) -> dict:
        return {
            "config": self.config,
            "ingest": self.ingest.to_dict(),
            "counters": self.counters.to_dict(),
            "volume_report": self.volume.to_dict(),
            "hurst_distribution_report": None if self.hurst is None else self.hurst.to_dict(),
            "activity_report": None if self.activity is None else self.activity.to_dict(),
            "estimates": [e.to_dict() for e in self.estimates],
            "warnings": list(self.warnings),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True, ensure_ascii=False) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> AnalysisRun:
        span = d["ingest"]["time_span"]
        ingest = IngestStats(
            d["ingest"]["packets_parsed"],
            d["ingest"]["packets_skipped_non_ip"],
            d["ingest"]["bytes_total"],
            span[0],
            span[1],
        )
        counters = ClassCounters(
            {int(k): v for k, v in d["counters"]["packets"].items()},
            {int(k): v for k, v in d["counters"]["bytes"].items()},
        )
        hurst = d.get("hurst_distribution_report")
        activity = d.get("activity_report")
        return cls(
            d["config"],
            ingest,
            counters,
            [SampleEstimate.from_dict(e) for e in d["estimates"]],
            VolumeReport.from_dict(d["volume_report"]),
            None if hurst is None else HurstDistributionReport.from_dict(hurst),
            None if activity is None else ActivityReport.from_dict(activity),
            list(d.get("warnings", [])),
        )

    def render_text(self) -> str:
        parts = ["Traffic volume per class (%)", render_table(self.volume.rows())]
        if self.hurst is not None:
            parts += ["", "Samples and volume per H bucket (%)", render_table(self.hurst.rows())]
        if self.activity is not None:
            parts += ["", "H > 0.5 samples and volume per activity period (%)", render_table(self.activity.rows())]
            parts += [f"note: {n}" for n in self.activity.notes]
        parts += [f"warning: {w}" for w in self.warnings]
        return "\n".join(parts) + "\n"

    def write(self, out_dir, fmt: str = "json") -> list[Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        written = [out / "run.json"]
        written[0].write_text(self.to_json(), encoding="utf-8")
        if fmt == "csv":
            tables = {"volume.csv": self.volume.rows(), "estimates.csv": self._estimate_rows()}
            if self.hurst is not None:
                tables["hurst_distribution.csv"] = self.hurst.rows()
            if self.activity is not None:
                tables["activity.csv"] = self.activity.rows()
            for name, rows in tables.items():
                path = out / name
                path.write_text(rows_to_csv(rows), encoding="utf-8")
                written.append(path)
        return written

    def _estimate_rows(self) -> list[list[str]]:
        rows = [["class", "hour_start", "activity", "interval_ms", "measure", "method",
                 "h", "r_squared", "volume_bytes", "skipped"]]
        for e in self.estimates:
            est = e.estimate
            rows.append([
                str(e.class_id), repr(e.hour_start), e.activity, str(e.interval_ms), e.measure,
                e.method, "" if est is None else repr(est.h),
                "" if est is None or est.r_squared is None else repr(est.r_squared),
                str(e.volume_bytes), e.skipped or "",
            ])
        return rows


def load_inputs(inputs, fmt: str | None = None) -> tuple[PacketBatch, IngestStats]:
    """Read and merge captures; items are paths or ``(PacketBatch, IngestStats)`` pairs."""
    batches, stats = [], IngestStats()
    for item in inputs:
        if isinstance(item, tuple):
            batch, st = item
        else:
            try:
                batch, st = read_capture(item, fmt)
            except DataError as exc:
                exc.args = (f"{item}: {exc}",)
                raise
        batches.append(batch)
        stats = stats.merge(st)
    return PacketBatch.concat(batches).sorted_by_time(), stats


def _hour_windows(ts_us: np.ndarray, tz_offset_minutes: int, warnings: list[str]):
    """Clock-hour windows (local time) as ``(start_us, cover_start_us, cover_end_us)``."""
    offset_us = tz_offset_minutes * 60 * 1_000_000
    first, last = int(ts_us[0]), int(ts_us[-1])
    hours = np.unique((ts_us + offset_us) // HOUR_US)
    for hour in hours:
        start = int(hour) * HOUR_US - offset_us
        lo = max(start, first)
        hi = min(start + HOUR_US, last + 1)
        if hi - lo < MIN_COVERAGE_US:
            warnings.append(
                f"hour starting {start / 1e6:.0f} skipped: only {(hi - lo) / 1e6:.1f} s of capture"
            )
            continue
        yield start, lo, hi


def run_analysis(inputs, rules: RuleSet, config: AnalysisConfig | None = None) -> AnalysisRun:
    """Ingest, classify, split into clock-hour samples, bin, estimate, report."""
    config = config or AnalysisConfig()
    batch, stats = load_inputs(inputs, config.input_format)
    if len(batch) == 0:
        raise NoData("captures contain no IP packets")
    ids = classify_batch(batch, rules)
    counters = count_classes(ids, batch.length)
    warnings: list[str] = []
    estimates: list[SampleEstimate] = []

    for start, lo, hi in _hour_windows(batch.ts_us, config.tz_offset_minutes, warnings):
        in_hour = (batch.ts_us >= lo) & (batch.ts_us < hi)
        period = label_activity(start / 1e6, config.tz_offset_minutes)
        for c in CLASS_IDS:
            mask = in_hour & (ids == c)
            if not mask.any():
                continue
            sample = batch.take(mask)
            vol_bytes = int(sample.length.sum(dtype=np.int64))
            for interval in config.intervals_ms:
                for measure in config.measures:
                    series = bin_series(
                        sample, interval, measure, lo / 1e6, t_end=hi / 1e6,
                        class_id=c, activity=period.label,
                    )
                    for method in config.methods:
                        try:
                            est, why = estimate(series, method), None
                        except (TooShort, ZeroVariance, NoConvergence) as exc:
                            est, why = None, f"{type(exc).__name__}: {exc}"
                        estimates.append(SampleEstimate(
                            c, start / 1e6, period.label, interval, measure, method,
                            vol_bytes, len(sample), est, why,
                        ))

    estimates.sort(key=SampleEstimate.key)
    warnings.extend(_parity_warnings(estimates))
    scored = [
        ScoredSample(e.class_id, ActivityPeriod(e.activity), e.estimate.h, e.volume_bytes)
        for e in estimates
        if e.estimate is not None
        and e.method == config.report_method
        and e.measure == config.report_measure
    ]
    hurst = hurst_distribution_report(scored) if scored else None
    activity = activity_report(scored) if scored else None
    if not scored:
        warnings.append("no sample produced a usable estimate; H reports omitted")
    return AnalysisRun(
        config.to_dict(rules), stats, counters, estimates, volume_report(counters),
        hurst, activity, warnings,
    )


def _parity_warnings(estimates: list[SampleEstimate]) -> list[str]:
    by_key = {}
    for e in estimates:
        if e.estimate is not None:
            by_key[(e.class_id, e.hour_start, e.interval_ms, e.method, e.measure)] = e.estimate.h
    out = []
    for (c, hour, interval, method, measure), h in sorted(by_key.items()):
        if measure != "bytes":
            continue
        other = by_key.get((c, hour, interval, method, "packets"))
        if other is not None and bucket_h(h) != bucket_h(other):
            out.append(
                f"class {c} hour {hour:.0f} {interval} ms {method}: bytes H={h:.3f} "
                f"and packets H={other:.3f} fall in different buckets"
            )
    return out

