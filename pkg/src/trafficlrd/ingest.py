"""Capture ingest: pcap files, the canonical packet log, and activity labels."""
from __future__ import annotations

import enum
import io
import ipaddress
import mmap
import os
import re
import struct
from typing import BinaryIO, Iterable, TextIO

import numpy as np

from ._backend import kernels
from .errors import BadMagic, SchemaError, TruncatedCapture, UnsupportedLinkType
from .records import IngestStats, PacketBatch, PacketRecord, record_problems

MAGIC_USEC = 0xA1B2C3D4
MAGIC_NSEC = 0xA1B23C4D
LINKTYPE_ETHERNET = 1
LINKTYPE_RAW = 101
SUPPORTED_LINKTYPES = (LINKTYPE_ETHERNET, LINKTYPE_RAW)

LOG_FIELDS = ("ts", "src_addr", "dst_addr", "ip_proto", "src_port", "dst_port", "length", "dscp")
LOG_HEADER = ",".join(LOG_FIELDS)


class ActivityPeriod(enum.Enum):
    LOW = "Low"
    MEDIUM = "Medium"
    HIGH = "High"

    @property
    def label(self) -> str:
        return self.value


# Local hour -> period. 13:00-15:00 has no published label; it is treated as Medium.
_HOUR_TABLE = (
    [ActivityPeriod.LOW] * 8
    + [ActivityPeriod.MEDIUM] * 2
    + [ActivityPeriod.HIGH] * 3
    + [ActivityPeriod.MEDIUM] * 4
    + [ActivityPeriod.HIGH] * 3
    + [ActivityPeriod.LOW] * 4
)
ASSUMED_HOURS = (13, 14)


def local_hour(ts: float, utc_offset_minutes: int = 0) -> int:
    local = int(ts // 60) + utc_offset_minutes
    return (local // 60) % 24


def label_activity(ts: float, utc_offset_minutes: int = 0) -> ActivityPeriod:
    """Activity period of the local clock hour containing ``ts``.

    Boundaries are half-open, so 08:00 sharp is Medium, not Low.
    """
    return _HOUR_TABLE[local_hour(ts, utc_offset_minutes)]


# ---------------------------------------------------------------- pcap

def _decode(buf) -> tuple[PacketBatch, IngestStats]:
    big, nano, linktype = pcap_header(buf)
    columns, total, skipped = kernels.decode_pcap(buf, big, nano, linktype)
    batch = PacketBatch.from_columns(columns)
    stats = batch.stats(skipped)
    assert stats.records_read == total
    return batch, stats


def pcap_header(buf) -> tuple[bool, bool, int]:
    """Return ``(big_endian, nanosecond, linktype)`` from a pcap global header."""
    if len(buf) < 4:
        raise BadMagic("capture shorter than the 4-byte magic number")
    (magic,) = struct.unpack_from("<I", buf, 0)
    if magic == MAGIC_USEC:
        big, nano = False, False
    elif magic == MAGIC_NSEC:
        big, nano = False, True
    elif magic == 0xD4C3B2A1:
        big, nano = True, False
    elif magic == 0x4D3CB2A1:
        big, nano = True, True
    else:
        raise BadMagic(f"unknown pcap magic 0x{magic:08x}")
    if len(buf) < 24:
        raise TruncatedCapture("pcap global header is shorter than 24 bytes")
    (linktype,) = struct.unpack_from(">I" if big else "<I", buf, 20)
    linktype &= 0xFFFF
    if linktype not in SUPPORTED_LINKTYPES:
        raise UnsupportedLinkType(f"link type {linktype} (supported: 1 Ethernet, 101 raw IP)")
    return big, nano, linktype


def parse_pcap(source) -> tuple[PacketBatch, IngestStats]:
    """Decode a classic pcap capture.

    ``source`` may be bytes, a path, or a binary file object. Non-IP frames
    (and frames too short to hold a valid IP header) are counted as skipped.
    """
    if isinstance(source, (bytes, bytearray, memoryview)):
        return _decode(source)
    if isinstance(source, (str, os.PathLike)):
        with open(source, "rb") as fh:
            if os.fstat(fh.fileno()).st_size == 0:
                return _decode(b"")
            with mmap.mmap(fh.fileno(), 0, access=mmap.ACCESS_READ) as mapped:
                return _decode(mapped)
    return _decode(source.read())


def _ip_header(rec: PacketRecord, payload_len: int, fragment: bool) -> bytes:
    addr_src = ipaddress.ip_address(rec.src_addr)
    addr_dst = ipaddress.ip_address(rec.dst_addr)
    if addr_src.version == 4:
        flags_frag = 1 if fragment else 0
        return struct.pack(
            ">BBHHHBBH4s4s",
            0x45,
            rec.dscp << 2,
            rec.length,
            0,
            flags_frag,
            64,
            rec.ip_proto,
            0,
            addr_src.packed,
            addr_dst.packed,
        )
    next_header = 44 if fragment else rec.ip_proto
    head = struct.pack(
        ">IHBB16s16s",
        (6 << 28) | (rec.dscp << 22),
        rec.length - 40,
        next_header,
        64,
        addr_src.packed,
        addr_dst.packed,
    )
    if fragment:
        head += struct.pack(">BBHI", rec.ip_proto, 0, 1 << 3, 0)
    return head


def encode_frame(rec: PacketRecord, linktype: int = LINKTYPE_ETHERNET) -> tuple[bytes, int]:
    """Header-only frame for ``rec``; returns ``(captured_bytes, original_length)``."""
    version = ipaddress.ip_address(rec.src_addr).version
    ported = rec.ip_proto in (6, 17)
    fragment = ported and rec.src_port == 0 and rec.dst_port == 0
    l4 = b""
    if ported and not fragment:
        if rec.ip_proto == 6:
            l4 = struct.pack(">HHIIBBHHH", rec.src_port, rec.dst_port, 0, 0, 0x50, 0x10, 65535, 0, 0)
        else:
            l4 = struct.pack(">HHHH", rec.src_port, rec.dst_port, min(max(rec.length - 20, 8), 65535), 0)
    frame = _ip_header(rec, len(l4), fragment) + l4
    orig = rec.length
    if linktype == LINKTYPE_ETHERNET:
        ethertype = 0x0800 if version == 4 else 0x86DD
        frame = b"\x02\x00\x00\x00\x00\x02\x02\x00\x00\x00\x00\x01" + struct.pack(">H", ethertype) + frame
        orig += 14
    return frame, max(orig, len(frame))


def write_pcap(
    records: Iterable[PacketRecord],
    stream: BinaryIO,
    *,
    big_endian: bool = False,
    nanosecond: bool = False,
    linktype: int = LINKTYPE_ETHERNET,
) -> int:
    """Write ``records`` as a header-only pcap (payload bytes are not stored).

    Returns the number of records written.
    """
    order = ">" if big_endian else "<"
    magic = MAGIC_NSEC if nanosecond else MAGIC_USEC
    stream.write(struct.pack(order + "IHHiIII", magic, 2, 4, 0, 0, 65535, linktype))
    rec_header = struct.Struct(order + "IIII")
    count = 0
    for rec in records:
        frame, orig = encode_frame(rec, linktype)
        us = rec.ts_us
        sec, frac = divmod(us, 1_000_000)
        if nanosecond:
            frac *= 1000
        stream.write(rec_header.pack(sec, frac, len(frame), orig))
        stream.write(frame)
        count += 1
    return count


# ---------------------------------------------------------- packet log

_TS_RE = re.compile(r"^(\d+)(?:\.(\d{1,6}))?$")


def _parse_ts_us(text: str, line_no: int) -> int:
    m = _TS_RE.match(text)
    if not m:
        raise SchemaError(line_no, f"bad timestamp {text!r}")
    frac = (m.group(2) or "").ljust(6, "0")
    return int(m.group(1)) * 1_000_000 + int(frac)


def _parse_int(text: str, name: str, line_no: int, hi: int) -> int:
    try:
        value = int(text)
    except ValueError:
        raise SchemaError(line_no, f"{name} is not an integer: {text!r}") from None
    if not 0 <= value <= hi:
        raise SchemaError(line_no, f"{name}={value} out of range 0..{hi}")
    return value


def format_ts(ts_us: int) -> str:
    sec, frac = divmod(int(ts_us), 1_000_000)
    return f"{sec}.{frac:06d}"


def parse_packet_log(source) -> tuple[PacketBatch, IngestStats]:
    """Parse the canonical comma-separated packet log.

    Accepts a path object, a text stream, or the log text itself. Blank and ``#`` lines are
    ignored and a leading header row is optional.
    """
    if isinstance(source, os.PathLike):
        with open(source, encoding="utf-8") as fh:
            return parse_packet_log(fh)
    if isinstance(source, str):
        source = io.StringIO(source)
    records = []
    seen_data = False
    for line_no, raw in enumerate(source, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        fields = line.split(",")
        if not seen_data and fields[0].strip() == "ts":
            seen_data = True
            continue
        seen_data = True
        if len(fields) != len(LOG_FIELDS):
            raise SchemaError(line_no, f"expected {len(LOG_FIELDS)} fields, got {len(fields)}")
        fields = [f.strip() for f in fields]
        ts_us = _parse_ts_us(fields[0], line_no)
        for idx in (1, 2):
            try:
                ipaddress.ip_address(fields[idx])
            except ValueError:
                raise SchemaError(line_no, f"bad address {fields[idx]!r}") from None
        rec = PacketRecord(
            ts=ts_us / 1e6,
            src_addr=fields[1],
            dst_addr=fields[2],
            ip_proto=_parse_int(fields[3], "ip_proto", line_no, 255),
            src_port=_parse_int(fields[4], "src_port", line_no, 65535),
            dst_port=_parse_int(fields[5], "dst_port", line_no, 65535),
            length=_parse_int(fields[6], "length", line_no, 65575),
            dscp=_parse_int(fields[7], "dscp", line_no, 63),
        )
        problems = record_problems(rec)
        if problems:
            raise SchemaError(line_no, "; ".join(problems))
        records.append(rec)
    batch = PacketBatch.from_records(records)
    return batch, batch.stats()


def write_packet_log(records: Iterable[PacketRecord], stream: TextIO, header: bool = True) -> int:
    if header:
        stream.write(LOG_HEADER + "\n")
    count = 0
    for rec in records:
        stream.write(
            f"{format_ts(rec.ts_us)},{rec.src_addr},{rec.dst_addr},{rec.ip_proto},"
            f"{rec.src_port},{rec.dst_port},{rec.length},{rec.dscp}\n"
        )
        count += 1
    return count


def read_capture(path, fmt: str | None = None) -> tuple[PacketBatch, IngestStats]:
    """Read a capture file; ``fmt`` is ``"pcap"``, ``"log"`` or None to sniff."""
    if fmt is None:
        with open(path, "rb") as fh:
            head = fh.read(4)
        magic = struct.unpack("<I", head)[0] if len(head) == 4 else None
        fmt = "pcap" if magic in (MAGIC_USEC, MAGIC_NSEC, 0xD4C3B2A1, 0x4D3CB2A1) else "log"
    if fmt == "pcap":
        return parse_pcap(path)
    if fmt == "log":
        with open(path, encoding="utf-8") as fh:
            return parse_packet_log(fh)
    raise ValueError(f"unknown capture format {fmt!r}")


def activity_codes(ts_us: np.ndarray, utc_offset_minutes: int = 0) -> np.ndarray:
    """Vectorised :func:`label_activity`; returns indices into ``list(ActivityPeriod)``."""
    periods = list(ActivityPeriod)
    table = np.array([periods.index(p) for p in _HOUR_TABLE], dtype=np.uint8)
    minutes = np.asarray(ts_us, dtype=np.int64) // 60_000_000 + utc_offset_minutes
    return table[(minutes // 60) % 24]
