"""Fixed-interval binning and block aggregation of packet streams."""
from __future__ import annotations

import io
from dataclasses import dataclass
from typing import Iterable, TextIO

import numpy as np

from ._backend import kernels
from .errors import BlockTooLarge, EmptyInput, TooShort
from .records import PacketBatch, PacketRecord

MEASURES = ("bytes", "packets")
DEFAULT_INTERVALS_MS = (100, 500, 1000, 10000)


@dataclass(frozen=True)
class BinnedSeries:
    interval_ms: int
    t0: float
    values: np.ndarray
    measure: str
    class_id: int | None = None
    activity: str | None = None

    def __post_init__(self):
        if self.interval_ms <= 0:
            raise ValueError("interval_ms must be positive")
        if self.measure not in MEASURES and self.measure != "synthetic":
            raise ValueError(f"unknown measure {self.measure!r}")
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 1 or values.size < 1:
            raise ValueError("a series needs at least one bin")
        if np.any(values < 0) and self.measure != "synthetic":
            raise ValueError("binned counts must be non-negative")
        object.__setattr__(self, "values", values)

    def __len__(self) -> int:
        return self.values.size


@dataclass(frozen=True)
class AggregatedSeries:
    base: BinnedSeries | np.ndarray
    m: int
    values: np.ndarray

    def __len__(self) -> int:
        return self.values.size


def parse_interval(text: str) -> int:
    """``"100ms"``, ``"1s"``, ``"2m"`` or a bare millisecond count -> milliseconds."""
    text = text.strip().lower()
    for suffix, scale in (("ms", 1), ("s", 1000), ("m", 60_000)):
        if text.endswith(suffix):
            number = text[: -len(suffix)]
            break
    else:
        number, scale = text, 1
    value = float(number) * scale
    if value <= 0 or value != int(value):
        raise ValueError(f"bad interval {text!r}")
    return int(value)


def bin_series(
    records: Iterable[PacketRecord] | PacketBatch,
    interval_ms: int,
    measure: str = "bytes",
    t0: float | None = None,
    *,
    t_end: float | None = None,
    class_id: int | None = None,
    activity: str | None = None,
) -> BinnedSeries:
    """Accumulate packets into fixed-width bins starting at ``t0``.

    Bins run through the last packet, or through ``t_end`` (exclusive) when
    given; empty bins are explicit zeros.
    """
    if measure not in MEASURES:
        raise ValueError(f"unknown measure {measure!r}")
    batch = records if isinstance(records, PacketBatch) else PacketBatch.from_records(records)
    if len(batch) == 0:
        raise EmptyInput("no packets to bin")
    width_us = int(interval_ms) * 1000
    t0_us = int(batch.ts_us.min()) if t0 is None else round(t0 * 1_000_000)
    offsets = batch.ts_us - t0_us
    if offsets.min() < 0:
        raise ValueError("t0 is later than the first packet")
    index = offsets // width_us
    nbins = int(index.max()) + 1
    if t_end is not None:
        end_bins = -(-(round(t_end * 1_000_000) - t0_us) // width_us)
        if end_bins < nbins:
            keep = index < end_bins
            index = index[keep]
            batch = batch.take(keep)
        nbins = max(end_bins, 1)
    weights = batch.length if measure == "bytes" else None
    values = kernels.bin_accumulate(index, weights, nbins)
    return BinnedSeries(interval_ms, t0_us / 1e6, values, measure, class_id, activity)


def _values(series) -> np.ndarray:
    return np.asarray(series.values if hasattr(series, "values") else series, dtype=np.float64)


def aggregate_level(series, m: int) -> AggregatedSeries:
    """Non-overlapping block means of size ``m``; the remainder is dropped."""
    x = _values(series)
    if m < 1:
        raise ValueError("block size m must be >= 1")
    if m > x.size:
        raise BlockTooLarge(f"m={m} exceeds series length {x.size}")
    k = x.size // m
    means = x[: k * m].reshape(k, m).mean(axis=1)
    return AggregatedSeries(series, m, means)


def sample_mean_var(series) -> tuple[float, float]:
    """Mean and population (1/n) variance."""
    x = _values(series)
    if x.size < 2:
        raise TooShort("need at least 2 values")
    mean = float(x.mean())
    return mean, float(np.mean((x - mean) ** 2))


# ----------------------------------------------------------------- CSV

def _format_value(v: float) -> str:
    return str(int(v)) if float(v).is_integer() and abs(v) < 2**53 else repr(float(v))


def write_series_csv(series: BinnedSeries, stream: TextIO, extra_meta: dict | None = None) -> None:
    if extra_meta:
        stream.write("# " + " ".join(f"{k}={v}" for k, v in extra_meta.items()) + "\n")
    cls = "" if series.class_id is None else series.class_id
    stream.write(
        f"# interval_ms={series.interval_ms},measure={series.measure},class={cls},t0={series.t0!r}\n"
    )
    stream.write("bin_index,value\n")
    for i, v in enumerate(series.values):
        stream.write(f"{i},{_format_value(v)}\n")


def series_to_csv(series: BinnedSeries, extra_meta: dict | None = None) -> str:
    buf = io.StringIO()
    write_series_csv(series, buf, extra_meta)
    return buf.getvalue()


def read_series_csv(stream: TextIO) -> tuple[BinnedSeries, dict]:
    """Inverse of :func:`write_series_csv`; returns the series and all metadata."""
    meta: dict[str, str] = {}
    values = []
    for line in stream:
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            for token in line[1:].replace(",", " ").split():
                if "=" in token:
                    key, value = token.split("=", 1)
                    meta[key] = value
            continue
        if line.startswith("bin_index"):
            continue
        idx, value = line.split(",")
        if int(idx) != len(values):
            raise ValueError(f"bin_index {idx} out of sequence")
        values.append(float(value))
    cls = meta.get("class")
    series = BinnedSeries(
        interval_ms=int(meta.get("interval_ms", 1)),
        t0=float(meta.get("t0", 0.0)),
        values=np.array(values),
        measure=meta.get("measure", "bytes"),
        class_id=int(cls) if cls else None,
    )
    return series, meta


def geometric_grid(lo: int, hi: int, count: int) -> list[int]:
    """Distinct integers spaced roughly geometrically in ``[lo, hi]``."""
    if hi < lo:
        return []
    raw = np.geomspace(lo, hi, num=count)
    return sorted({int(round(v)) for v in raw if lo <= round(v) <= hi})

