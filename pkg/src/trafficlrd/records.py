"""Packet record types shared by ingest, classification and binning."""
from __future__ import annotations

import ipaddress
from dataclasses import dataclass
from typing import Iterable, Iterator

import numpy as np

PORTED_PROTOS = (6, 17)


@dataclass(frozen=True, slots=True)
class PacketRecord:
    """One observed IP packet.

    ``ts`` is seconds since the Unix epoch with microsecond resolution and
    ``length`` the total IP datagram length from the IP header.
    """

    ts: float
    src_addr: str
    dst_addr: str
    ip_proto: int
    src_port: int
    dst_port: int
    length: int
    dscp: int

    @property
    def ts_us(self) -> int:
        return round(self.ts * 1_000_000)


def record_problems(rec: PacketRecord) -> list[str]:
    """Return the invariant violations of ``rec`` (empty when valid)."""
    problems = []
    if rec.ts < 0:
        problems.append("negative timestamp")
    try:
        src = ipaddress.ip_address(rec.src_addr)
        dst = ipaddress.ip_address(rec.dst_addr)
    except ValueError as exc:
        return problems + [str(exc)]
    if src.version != dst.version:
        problems.append("mixed address families")
    if not 0 <= rec.ip_proto <= 255:
        problems.append("ip_proto out of range")
    for name in ("src_port", "dst_port"):
        port = getattr(rec, name)
        if not 0 <= port <= 65535:
            problems.append(f"{name} out of range")
        elif port and rec.ip_proto not in PORTED_PROTOS:
            problems.append(f"{name} set for portless protocol {rec.ip_proto}")
    min_len = 20 if src.version == 4 else 40
    if not min_len <= rec.length <= 65535 + (40 if src.version == 6 else 0):
        problems.append(f"length {rec.length} outside IPv{src.version} bounds")
    if not 0 <= rec.dscp <= 63:
        problems.append("dscp out of range")
    return problems


@dataclass(frozen=True)
class IngestStats:
    packets_parsed: int = 0
    packets_skipped_non_ip: int = 0
    bytes_total: int = 0
    first_ts: float | None = None
    last_ts: float | None = None

    @property
    def records_read(self) -> int:
        return self.packets_parsed + self.packets_skipped_non_ip

    @property
    def time_span(self) -> tuple[float | None, float | None]:
        return (self.first_ts, self.last_ts)

    def merge(self, other: IngestStats) -> IngestStats:
        firsts = [t for t in (self.first_ts, other.first_ts) if t is not None]
        lasts = [t for t in (self.last_ts, other.last_ts) if t is not None]
        return IngestStats(
            self.packets_parsed + other.packets_parsed,
            self.packets_skipped_non_ip + other.packets_skipped_non_ip,
            self.bytes_total + other.bytes_total,
            min(firsts) if firsts else None,
            max(lasts) if lasts else None,
        )

    def to_dict(self) -> dict:
        return {
            "packets_parsed": self.packets_parsed,
            "packets_skipped_non_ip": self.packets_skipped_non_ip,
            "bytes_total": self.bytes_total,
            "time_span": [self.first_ts, self.last_ts],
        }


_COLUMNS = {
    "ts_us": np.int64,
    "version": np.uint8,
    "proto": np.uint8,
    "sport": np.uint16,
    "dport": np.uint16,
    "length": np.uint32,
    "dscp": np.uint8,
}


class PacketBatch:
    """Columnar store of packet records.

    Addresses are kept as 16-byte rows (IPv4 in the first four bytes); records
    are materialised as :class:`PacketRecord` only on iteration.
    """

    def __init__(self, ts_us, version, src, dst, proto, sport, dport, length, dscp):
        self.ts_us = np.asarray(ts_us, dtype=np.int64)
        self.version = np.asarray(version, dtype=np.uint8)
        self.src = np.asarray(src, dtype=np.uint8).reshape(-1, 16)
        self.dst = np.asarray(dst, dtype=np.uint8).reshape(-1, 16)
        self.proto = np.asarray(proto, dtype=np.uint8)
        self.sport = np.asarray(sport, dtype=np.uint16)
        self.dport = np.asarray(dport, dtype=np.uint16)
        self.length = np.asarray(length, dtype=np.uint32)
        self.dscp = np.asarray(dscp, dtype=np.uint8)
        n = self.ts_us.shape[0]
        for name in ("version", "src", "dst", "proto", "sport", "dport", "length", "dscp"):
            if getattr(self, name).shape[0] != n:
                raise ValueError(f"column {name} has the wrong length")

    @classmethod
    def from_columns(cls, columns: dict) -> PacketBatch:
        return cls(**columns)

    @classmethod
    def empty(cls) -> PacketBatch:
        return cls(
            *(np.empty(0, dtype=_COLUMNS[c]) for c in ("ts_us", "version")),
            np.empty((0, 16), np.uint8),
            np.empty((0, 16), np.uint8),
            *(np.empty(0, dtype=_COLUMNS[c]) for c in ("proto", "sport", "dport", "length", "dscp")),
        )

    @classmethod
    def from_records(cls, records: Iterable[PacketRecord]) -> PacketBatch:
        rows = list(records)
        if not rows:
            return cls.empty()
        src = np.zeros((len(rows), 16), np.uint8)
        dst = np.zeros((len(rows), 16), np.uint8)
        version = np.empty(len(rows), np.uint8)
        for i, rec in enumerate(rows):
            s = ipaddress.ip_address(rec.src_addr)
            d = ipaddress.ip_address(rec.dst_addr)
            version[i] = s.version
            src[i, : len(s.packed)] = np.frombuffer(s.packed, np.uint8)
            dst[i, : len(d.packed)] = np.frombuffer(d.packed, np.uint8)
        return cls(
            [r.ts_us for r in rows],
            version,
            src,
            dst,
            [r.ip_proto for r in rows],
            [r.src_port for r in rows],
            [r.dst_port for r in rows],
            [r.length for r in rows],
            [r.dscp for r in rows],
        )

    @classmethod
    def concat(cls, batches: Iterable[PacketBatch]) -> PacketBatch:
        batches = list(batches)
        if not batches:
            return cls.empty()
        return cls(
            *(
                np.concatenate([getattr(b, name) for b in batches])
                for name in ("ts_us", "version", "src", "dst", "proto", "sport", "dport", "length", "dscp")
            )
        )

    def __len__(self) -> int:
        return int(self.ts_us.shape[0])

    def take(self, selector) -> PacketBatch:
        return PacketBatch(
            *(
                getattr(self, name)[selector]
                for name in ("ts_us", "version", "src", "dst", "proto", "sport", "dport", "length", "dscp")
            )
        )

    def sorted_by_time(self) -> PacketBatch:
        order = np.argsort(self.ts_us, kind="stable")
        return self.take(order)

    @property
    def ts(self) -> np.ndarray:
        return self.ts_us / 1e6

    def _address(self, row, version) -> str:
        if version == 4:
            return str(ipaddress.IPv4Address(bytes(row[:4])))
        return str(ipaddress.IPv6Address(bytes(row)))

    def __iter__(self) -> Iterator[PacketRecord]:
        for i in range(len(self)):
            v = int(self.version[i])
            yield PacketRecord(
                ts=int(self.ts_us[i]) / 1e6,
                src_addr=self._address(self.src[i], v),
                dst_addr=self._address(self.dst[i], v),
                ip_proto=int(self.proto[i]),
                src_port=int(self.sport[i]),
                dst_port=int(self.dport[i]),
                length=int(self.length[i]),
                dscp=int(self.dscp[i]),
            )

    def stats(self, skipped: int = 0) -> IngestStats:
        if len(self) == 0:
            return IngestStats(0, skipped, 0, None, None)
        return IngestStats(
            packets_parsed=len(self),
            packets_skipped_non_ip=skipped,
            bytes_total=int(self.length.sum(dtype=np.int64)),
            first_ts=int(self.ts_us.min()) / 1e6,
            last_ts=int(self.ts_us.max()) / 1e6,
        )
