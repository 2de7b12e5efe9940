"""Six-class traffic classification driven by a port/protocol rule set."""
from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass, field
from importlib import resources
from typing import Iterable

import numpy as np

from ._backend import kernels
from .errors import OverlappingRules, RuleParseError
from .records import PacketBatch, PacketRecord


class TrafficClass(enum.IntEnum):
    INTERACTIVE = 1
    BULK = 2
    HTTP = 3
    MANAGEMENT = 4
    GENERIC_UDP = 5
    OTHER = 6


CLASS_IDS = tuple(int(c) for c in TrafficClass)

PORT_SETS = (
    "interactive_tcp_ports",
    "bulk_tcp_ports",
    "http_ports",
    "mgmt_ports",
    "generic_udp_ports",
)
_KEYS = ("version", "mgmt_ip_protos") + PORT_SETS


@dataclass(frozen=True)
class RuleSet:
    version: str
    interactive_tcp_ports: frozenset[int] = frozenset()
    bulk_tcp_ports: frozenset[int] = frozenset()
    http_ports: frozenset[int] = frozenset()
    mgmt_ports: frozenset[int] = frozenset()
    mgmt_ip_protos: frozenset[int] = frozenset()
    generic_udp_ports: frozenset[int] = frozenset()
    _tables: tuple = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        for name in PORT_SETS:
            bad = [p for p in getattr(self, name) if not 0 <= p < 65536]
            if bad:
                raise RuleParseError(0, f"{name}: port {bad[0]} out of range")
        bad = [p for p in self.mgmt_ip_protos if not 0 <= p < 256]
        if bad:
            raise RuleParseError(0, f"mgmt_ip_protos: protocol {bad[0]} out of range")
        for first, second in itertools.combinations(PORT_SETS, 2):
            common = getattr(self, first) & getattr(self, second)
            if common:
                raise OverlappingRules(min(common), first, second)

    def tables(self):
        """Lookup arrays consumed by the batch classification kernel."""
        if self._tables is None:
            tcp_class = np.zeros(65536, np.uint8)
            for cls, name in ((1, "interactive_tcp_ports"), (2, "bulk_tcp_ports"), (3, "http_ports")):
                tcp_class[sorted(getattr(self, name))] = cls
            mgmt_port = np.zeros(65536, np.uint8)
            mgmt_port[sorted(self.mgmt_ports)] = 1
            udp_generic = np.zeros(65536, np.uint8)
            udp_generic[sorted(self.generic_udp_ports)] = 1
            mgmt_proto = np.zeros(256, np.uint8)
            mgmt_proto[sorted(self.mgmt_ip_protos)] = 1
            object.__setattr__(self, "_tables", (tcp_class, mgmt_port, udp_generic, mgmt_proto))
        return self._tables

    def to_text(self) -> str:
        lines = [f"version={self.version}"]
        for key in _KEYS[1:]:
            lines.append(f"{key}=" + ",".join(str(p) for p in sorted(getattr(self, key))))
        return "\n".join(lines) + "\n"


def _parse_numbers(value: str, key: str, line_no: int) -> set[int]:
    out: set[int] = set()
    for item in value.split(","):
        item = item.strip()
        if not item:
            continue
        try:
            if "-" in item:
                lo, hi = (int(x) for x in item.split("-", 1))
                if hi < lo:
                    raise ValueError
                out.update(range(lo, hi + 1))
            else:
                out.add(int(item))
        except ValueError:
            raise RuleParseError(line_no, f"{key}: bad entry {item!r}") from None
    return out


def load_ruleset(text: str) -> RuleSet:
    """Parse rule-file text (``key=value`` lines, ``#`` comments).

    A file with no keys at all yields the empty rule set; otherwise
    ``version`` is mandatory.
    """
    values: dict[str, object] = {}
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise RuleParseError(line_no, f"expected key=value, got {line!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in _KEYS:
            raise RuleParseError(line_no, f"unknown key {key!r}")
        if key in values:
            raise RuleParseError(line_no, f"duplicate key {key!r}")
        values[key] = value if key == "version" else frozenset(_parse_numbers(value, key, line_no))
    if not values:
        return RuleSet(version="empty")
    if not values.get("version"):
        raise RuleParseError(0, "version= is required")
    return RuleSet(**values)


def default_ruleset() -> RuleSet:
    text = resources.files("trafficlrd").joinpath("default.rules").read_text(encoding="utf-8")
    return load_ruleset(text)


def service_port(src_port: int, dst_port: int) -> int:
    if src_port and dst_port:
        return min(src_port, dst_port)
    return src_port or dst_port


def classify(record: PacketRecord, rules: RuleSet) -> TrafficClass:
    port = service_port(record.src_port, record.dst_port)
    proto = record.ip_proto
    if proto in rules.mgmt_ip_protos or (proto in (6, 17) and port in rules.mgmt_ports):
        return TrafficClass.MANAGEMENT
    if proto == 6:
        if port in rules.interactive_tcp_ports:
            return TrafficClass.INTERACTIVE
        if port in rules.bulk_tcp_ports:
            return TrafficClass.BULK
        if port in rules.http_ports:
            return TrafficClass.HTTP
        return TrafficClass.OTHER
    if proto == 17:
        if port in rules.generic_udp_ports or port < 1024:
            return TrafficClass.GENERIC_UDP
        return TrafficClass.OTHER
    return TrafficClass.OTHER


def classify_batch(batch: PacketBatch, rules: RuleSet) -> np.ndarray:
    """Class id (1..6) for every packet of ``batch``."""
    return kernels.classify_ports(batch.proto, batch.sport, batch.dport, *rules.tables())


@dataclass
class ClassCounters:
    packets: dict[int, int]
    bytes: dict[int, int]

    @classmethod
    def zero(cls) -> ClassCounters:
        return cls({c: 0 for c in CLASS_IDS}, {c: 0 for c in CLASS_IDS})

    def merge(self, other: ClassCounters) -> ClassCounters:
        return ClassCounters(
            {c: self.packets[c] + other.packets[c] for c in CLASS_IDS},
            {c: self.bytes[c] + other.bytes[c] for c in CLASS_IDS},
        )

    def to_dict(self) -> dict:
        return {
            "packets": {str(c): self.packets[c] for c in CLASS_IDS},
            "bytes": {str(c): self.bytes[c] for c in CLASS_IDS},
        }


def count_classes(class_ids: np.ndarray, lengths: np.ndarray) -> ClassCounters:
    packets = np.bincount(class_ids, minlength=7)
    volume = np.zeros(7, dtype=np.int64)
    np.add.at(volume, np.asarray(class_ids, dtype=np.intp), np.asarray(lengths, dtype=np.int64))
    return ClassCounters(
        {c: int(packets[c]) for c in CLASS_IDS},
        {c: int(volume[c]) for c in CLASS_IDS},
    )


def classify_stream(
    records: Iterable[PacketRecord] | PacketBatch, rules: RuleSet
) -> tuple[dict[int, PacketBatch], ClassCounters]:
    """Partition packets by class; returns per-class batches and counters."""
    batch = records if isinstance(records, PacketBatch) else PacketBatch.from_records(records)
    ids = classify_batch(batch, rules)
    parts = {c: batch.take(ids == c) for c in CLASS_IDS}
    return parts, count_classes(ids, batch.length)
